use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{largest_remainder, Dataset};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Split {
    pub train: Dataset,
    pub test: Dataset,
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
}

/// Training-side share of each class. The overall train size is
/// `round(ratio·n)`, spread over the classes by largest remainder so the
/// per-class cuts add up to it; every class with two or more samples keeps
/// at least one on each side, and smaller classes go entirely to training.
fn train_shares(counts: &[usize], ratio: f64) -> Vec<usize> {
    let n: usize = counts.iter().sum();
    let singles: usize = counts.iter().filter(|&&c| c < 2).sum();
    let target = ((ratio * n as f64).round() as usize).saturating_sub(singles);
    let weights: Vec<f64> = counts
        .iter()
        .map(|&c| if c < 2 { 0.0 } else { c as f64 })
        .collect();
    let quotas = largest_remainder(&weights, target);
    counts
        .iter()
        .zip(quotas)
        .map(|(&c, q)| if c < 2 { c } else { q.clamp(1, c - 1) })
        .collect()
}

/// Per-class seeded shuffle followed by a per-class cut. Index lists come
/// back in ascending order.
pub fn stratified_split(ds: &Dataset, ratio: f64, seed: u64) -> Result<Split> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::Config(format!("split ratio must lie in (0, 1), got {ratio}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); ds.num_classes];
    for (i, &label) in ds.y.iter().enumerate() {
        by_class[label].push(i);
    }
    let shares = train_shares(&by_class.iter().map(Vec::len).collect::<Vec<_>>(), ratio);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (class, (mut members, cut)) in by_class.into_iter().zip(shares).enumerate() {
        if members.len() < 2 {
            log::warn!(
                "class {class} has {} sample(s); keeping all of them for training",
                members.len()
            );
        }
        members.shuffle(&mut rng);
        train.extend_from_slice(&members[..cut]);
        test.extend_from_slice(&members[cut..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok(Split {
        train: ds.subset(&train),
        test: ds.subset(&test),
        train_indices: train,
        test_indices: test,
    })
}

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// Per-feature min-max scaling fitted on training data. Values outside the
/// fitted range are not clipped; constant features map to 0.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MinMaxScaler {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    range: Option<(Vec<f64>, Vec<f64>)>,
}

impl MinMaxScaler {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_fitted(&self) -> bool {
        self.range.is_some()
    }

    pub fn fit(&mut self, train: &Matrix) -> Result<()> {
        if train.rows() == 0 {
            return Err(Error::InvalidInput("cannot fit a scaler on zero rows".into()));
        }
        let mut min = train.row(0).to_vec();
        let mut max = min.clone();
        for row in train.row_iter().skip(1) {
            for (j, &v) in row.iter().enumerate() {
                min[j] = min[j].min(v);
                max[j] = max[j].max(v);
            }
        }
        self.range = Some((min, max));
        Ok(())
    }

    pub fn fit_transform(&mut self, train: &Matrix) -> Result<Matrix> {
        self.fit(train)?;
        self.transform(train)
    }

    pub fn transform(&self, x: &Matrix) -> Result<Matrix> {
        let (min, max) = self.range.as_ref().ok_or(Error::NotFitted)?;
        if x.cols() != min.len() {
            return Err(Error::shape("minmax transform", x.shape(), (x.rows(), min.len())));
        }
        let mut out = x.clone();
        let cols = min.len();
        for (k, v) in out.as_mut_slice().iter_mut().enumerate() {
            let j = k % cols;
            let span = max[j] - min[j];
            *v = if span > 0.0 { (*v - min[j]) / span } else { 0.0 };
        }
        out.ensure_finite("minmax transform")
    }

    pub fn min(&self) -> Option<&[f64]> {
        self.range.as_ref().map(|(m, _)| m.as_slice())
    }

    pub fn max(&self) -> Option<&[f64]> {
        self.range.as_ref().map(|(_, m)| m.as_slice())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col(values: &[f64]) -> Matrix {
        Matrix::from_vec(values.len(), 1, values.to_vec()).unwrap()
    }

    #[test]
    fn scales_to_unit_range() {
        let mut s = MinMaxScaler::new();
        assert_eq!(s.fit_transform(&col(&[0.0, 5.0, 10.0])).unwrap().as_slice(), &[0.0, 0.5, 1.0]);
        assert_eq!(s.transform(&col(&[20.0])).unwrap().as_slice(), &[2.0]);
    }

    #[test]
    fn constant_column_maps_to_zero() {
        let mut s = MinMaxScaler::new();
        assert_eq!(s.fit_transform(&col(&[7.0, 7.0, 7.0])).unwrap().as_slice(), &[0.0; 3]);
        assert_eq!(s.transform(&col(&[9.0])).unwrap().as_slice(), &[0.0]);
    }

    #[test]
    fn errors() {
        let s = MinMaxScaler::new();
        assert!(matches!(s.transform(&col(&[1.0])), Err(Error::NotFitted)));
        let mut s = MinMaxScaler::new();
        s.fit(&Matrix::zeros(2, 3)).unwrap();
        assert!(matches!(s.transform(&Matrix::zeros(1, 2)), Err(Error::Shape { .. })));
    }

    #[test]
    fn unit_statistics_are_identity() {
        let mut s = MinMaxScaler::new();
        s.fit(&Matrix::from_rows(&[[0.0, 0.0], [1.0, 1.0]]).unwrap()).unwrap();
        let x = Matrix::from_rows(&[[0.25, -3.0], [0.9, 1.5]]).unwrap();
        assert_eq!(s.transform(&x).unwrap(), x);
    }
}

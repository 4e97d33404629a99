use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::SymMatrix;

/// Data matrix with centered, unit-norm columns.
#[derive(Debug, Clone, PartialEq)]
pub struct StandardizedData {
    columns: DMatrix<f64>,
    column_means: Vec<f64>,
    column_norms: Vec<f64>,
}

impl StandardizedData {
    /// Samples `m`.
    pub fn samples(&self) -> usize {
        self.columns.nrows()
    }

    /// Variables `p`.
    pub fn variables(&self) -> usize {
        self.columns.ncols()
    }

    pub fn columns(&self) -> &DMatrix<f64> {
        &self.columns
    }

    pub fn column_means(&self) -> &[f64] {
        &self.column_means
    }

    pub fn column_norms(&self) -> &[f64] {
        &self.column_norms
    }

    #[cfg(test)]
    pub(crate) fn from_unchecked(columns: DMatrix<f64>) -> Self {
        let p = columns.ncols();
        StandardizedData { columns, column_means: vec![0.0; p], column_norms: vec![1.0; p] }
    }

    /// `ZᵀZ`, the sample correlation matrix (unit diagonal).
    pub fn gram(&self) -> SymMatrix {
        let mut g = self.columns.tr_mul(&self.columns);
        for i in 0..g.nrows() {
            g[(i, i)] = 1.0;
        }
        SymMatrix::symmetrized(g)
    }
}

/// Centers every column and scales it to Euclidean norm one.
pub fn standardize(raw: &DMatrix<f64>) -> Result<StandardizedData> {
    let (m, p) = raw.shape();
    if m < 2 {
        return Err(Error::TooFewSamples { samples: m, required: 2 });
    }
    let mut columns = raw.clone();
    let mut column_means = Vec::with_capacity(p);
    let mut column_norms = Vec::with_capacity(p);
    for j in 0..p {
        let mut col = columns.column_mut(j);
        let scale = col.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        let mean = col.iter().sum::<f64>() / m as f64;
        col.iter_mut().for_each(|v| *v -= mean);
        let norm = col.norm();
        if !(norm > 1e-13 * scale.max(f64::MIN_POSITIVE) * (m as f64).sqrt()) {
            return Err(Error::ConstantColumn { column: j });
        }
        col.iter_mut().for_each(|v| *v /= norm);
        column_means.push(mean);
        column_norms.push(norm);
    }
    Ok(StandardizedData { columns, column_means, column_norms })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn two_point_column() {
        let z = standardize(&DMatrix::from_column_slice(2, 1, &[1.0, 3.0])).unwrap();
        let h = 1.0 / 2f64.sqrt();
        assert!((z.columns()[(0, 0)] + h).abs() < 1e-15);
        assert!((z.columns()[(1, 0)] - h).abs() < 1e-15);
        assert_eq!(z.column_means(), &[2.0]);
    }

    #[test]
    fn idempotent() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let raw = DMatrix::from_fn(7, 3, |_, _| rng.random_range(-2.0..2.0));
        let once = standardize(&raw).unwrap();
        let twice = standardize(once.columns()).unwrap();
        assert!((once.columns() - twice.columns()).amax() < 1e-12);
    }

    #[test]
    fn random_columns_are_standardized() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let raw = DMatrix::from_fn(5, 3, |_, _| rng.random_range(-10.0..10.0));
        let z = standardize(&raw).unwrap();
        for col in z.columns().column_iter() {
            assert!(col.sum().abs() / 5.0 < 1e-12);
            assert!((col.norm() - 1.0).abs() < 1e-12);
        }
        let g = z.gram();
        assert!((0..3).all(|i| g[(i, i)] == 1.0));
    }

    #[test]
    fn constant_column_rejected() {
        let raw = DMatrix::from_row_slice(3, 2, &[1.0, 4.0, 2.0, 4.0, 3.0, 4.0]);
        assert_eq!(standardize(&raw).unwrap_err(), Error::ConstantColumn { column: 1 });
        assert!(matches!(
            standardize(&DMatrix::from_row_slice(1, 2, &[1.0, 2.0])),
            Err(Error::TooFewSamples { .. })
        ));
    }
}

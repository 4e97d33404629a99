//! Dense symmetric linear algebra.
//!
//! Everything downstream (the covariance-selection solver, the profile
//! likelihood, the GLS mean estimates) funnels through the upper Cholesky
//! factor `S = UᵀU`: log-determinants come from its diagonal and SPD inverses
//! from the inverse of the triangular factor, `S⁻¹ = U⁻¹U⁻ᵀ`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// A square matrix stored with exact symmetry.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix(DMatrix<f64>);

impl SymMatrix {
    /// Wraps a square matrix, symmetrizing it as `(A + Aᵀ)/2`.
    pub fn new(a: DMatrix<f64>) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "expected a square matrix, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if a.nrows() == 0 {
            return Err(Error::InvalidArgument("empty matrix".into()));
        }
        Ok(Self::symmetrized(a))
    }

    pub(crate) fn symmetrized(mut a: DMatrix<f64>) -> Self {
        let p = a.nrows();
        for j in 0..p {
            for i in (j + 1)..p {
                let v = 0.5 * (a[(i, j)] + a[(j, i)]);
                a[(i, j)] = v;
                a[(j, i)] = v;
            }
        }
        SymMatrix(a)
    }

    pub fn identity(p: usize) -> Self {
        SymMatrix(DMatrix::identity(p, p))
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        SymMatrix(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }
}

impl std::ops::Index<(usize, usize)> for SymMatrix {
    type Output = f64;

    fn index(&self, idx: (usize, usize)) -> &f64 {
        &self.0[idx]
    }
}

/// Upper-triangular Cholesky factor `U` with `UᵀU = S`.
#[derive(Debug, Clone)]
pub struct CholeskyFactor {
    upper: DMatrix<f64>,
}

impl CholeskyFactor {
    pub fn upper(&self) -> &DMatrix<f64> {
        &self.upper
    }

    pub fn dim(&self) -> usize {
        self.upper.nrows()
    }

    /// `log det S = 2 Σ log Uᵢᵢ`.
    pub fn logdet(&self) -> f64 {
        2.0 * self.upper.diagonal().iter().map(|d| d.ln()).sum::<f64>()
    }

    /// Inverse of the triangular factor, itself upper triangular.
    pub fn inverse_upper(&self) -> DMatrix<f64> {
        let p = self.dim();
        let u = &self.upper;
        let mut inv = DMatrix::<f64>::zeros(p, p);
        // Column j of U⁻¹ solves U x = e_j by back substitution; x is zero below j.
        for j in 0..p {
            inv[(j, j)] = 1.0 / u[(j, j)];
            for i in (0..j).rev() {
                let mut s = 0.0;
                for k in (i + 1)..=j {
                    s += u[(i, k)] * inv[(k, j)];
                }
                inv[(i, j)] = -s / u[(i, i)];
            }
        }
        inv
    }

    /// `S⁻¹ = U⁻¹ (U⁻¹)ᵀ`.
    pub fn inverse(&self) -> SymMatrix {
        let ui = self.inverse_upper();
        SymMatrix::symmetrized(&ui * ui.transpose())
    }

    /// Solves `S x = b` for every column of `b`.
    pub fn solve(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut x = b.clone();
        self.solve_in_place(&mut x);
        x
    }

    pub fn solve_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        let mut x = DMatrix::from_column_slice(b.len(), 1, b.as_slice());
        self.solve_in_place(&mut x);
        DVector::from_column_slice(x.as_slice())
    }

    fn solve_in_place(&self, x: &mut DMatrix<f64>) {
        let p = self.dim();
        let u = &self.upper;
        for c in 0..x.ncols() {
            // Uᵀ y = b (forward), then U x = y (backward).
            for i in 0..p {
                let mut s = x[(i, c)];
                for k in 0..i {
                    s -= u[(k, i)] * x[(k, c)];
                }
                x[(i, c)] = s / u[(i, i)];
            }
            for i in (0..p).rev() {
                let mut s = x[(i, c)];
                for k in (i + 1)..p {
                    s -= u[(i, k)] * x[(k, c)];
                }
                x[(i, c)] = s / u[(i, i)];
            }
        }
    }

    /// Solves `U x = b` (used to draw `N(0, S⁻¹)` samples from `S`'s factor).
    pub fn solve_upper(&self, b: &DVector<f64>) -> DVector<f64> {
        let p = self.dim();
        let u = &self.upper;
        let mut x = b.clone();
        for i in (0..p).rev() {
            let mut s = x[i];
            for k in (i + 1)..p {
                s -= u[(i, k)] * x[k];
            }
            x[i] = s / u[(i, i)];
        }
        x
    }

    /// Computes `Uᵀ x`, i.e. maps standard normals to `N(0, S)`.
    pub fn mul_upper_transpose(&self, z: &DVector<f64>) -> DVector<f64> {
        self.upper.tr_mul(z)
    }
}

/// Upper Cholesky factorization of a symmetric positive-definite matrix.
pub fn cholesky(s: &SymMatrix) -> Result<CholeskyFactor> {
    cholesky_dense(s.as_matrix())
}

/// Factorizes the symmetric part of `a` without copying it into a
/// [`SymMatrix`] first; only the upper triangle is read.
pub(crate) fn cholesky_dense(a: &DMatrix<f64>) -> Result<CholeskyFactor> {
    let p = a.nrows();
    let mut u = DMatrix::<f64>::zeros(p, p);
    let us = u.as_mut_slice();
    // Column j of U holds U[0..=j, j] contiguously at us[j*p..].
    for j in 0..p {
        let d = a[(j, j)] - us[j * p..j * p + j].iter().map(|v| v * v).sum::<f64>();
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::NotPositiveDefinite { pivot: j, value: d });
        }
        let ujj = d.sqrt();
        us[j * p + j] = ujj;
        for i in (j + 1)..p {
            let (left, right) = us.split_at_mut(i * p);
            let col_j = &left[j * p..j * p + j];
            let col_i = &mut right[..p];
            let dot: f64 = col_j.iter().zip(&col_i[..j]).map(|(x, y)| x * y).sum();
            col_i[j] = (0.5 * (a[(j, i)] + a[(i, j)]) - dot) / ujj;
        }
    }
    Ok(CholeskyFactor { upper: u })
}

pub fn logdet(f: &CholeskyFactor) -> f64 {
    f.logdet()
}

pub fn invert_spd(f: &CholeskyFactor) -> SymMatrix {
    f.inverse()
}

/// Moore–Penrose pseudo-inverse through a one-sided Jacobi SVD.
///
/// Singular values at or below `max(rows, cols) · ε · σ_max` count as zero.
pub fn pseudo_inverse(a: &DMatrix<f64>) -> DMatrix<f64> {
    let (rows, cols) = a.shape();
    if rows == 0 || cols == 0 {
        return DMatrix::zeros(cols, rows);
    }
    if rows < cols {
        return pseudo_inverse(&a.transpose()).transpose();
    }
    let (w, v) = jacobi_orthogonalize(a.clone());
    let norms: Vec<f64> = w.column_iter().map(|c| c.norm()).collect();
    let smax = norms.iter().copied().fold(0.0_f64, f64::max);
    let tol = rows as f64 * f64::EPSILON * smax;

    // A = W Vᵀ with orthogonal columns in W, so A⁺ = Σₖ vₖ wₖᵀ / ‖wₖ‖².
    let mut out = DMatrix::<f64>::zeros(cols, rows);
    for (k, &s) in norms.iter().enumerate() {
        if s > tol {
            let scale = 1.0 / (s * s);
            out.ger(scale, &v.column(k), &w.column(k), 1.0);
        }
    }
    out
}

/// Rotates pairs of columns of `a` (rows ≥ cols) until they are mutually
/// orthogonal, returning the rotated matrix and the accumulated rotation.
fn jacobi_orthogonalize(mut w: DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = w.ncols();
    let mut v = DMatrix::<f64>::identity(n, n);
    for _ in 0..80 {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = w.column(p).norm_squared();
                let beta = w.column(q).norm_squared();
                let gamma = w.column(p).dot(&w.column(q));
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut w, p, q, c, s);
                rotate(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }
    (w, v)
}

fn rotate(m: &mut DMatrix<f64>, p: usize, q: usize, c: f64, s: f64) {
    for r in 0..m.nrows() {
        let (x, y) = (m[(r, p)], m[(r, q)]);
        m[(r, p)] = c * x - s * y;
        m[(r, q)] = s * x + c * y;
    }
}

/// Largest absolute entry.
pub fn max_abs(a: &DMatrix<f64>) -> f64 {
    a.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

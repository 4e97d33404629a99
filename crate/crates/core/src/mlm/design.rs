use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::InfluenceMatrix;

/// Which likelihood the variance ratio is profiled from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Likelihood {
    #[default]
    Reml,
    Ml,
}

/// Expression data from two conditions together with each condition's
/// influence matrix.
///
/// `y` is `p × n`; the first `n1` columns belong to condition 1.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoConditionDesign {
    y: DMatrix<f64>,
    n1: usize,
    influence: [InfluenceMatrix; 2],
    outer: [DMatrix<f64>; 2],
    means: [DVector<f64>; 2],
    scatter: [DMatrix<f64>; 2],
}

impl TwoConditionDesign {
    pub fn new(y: DMatrix<f64>, n1: usize, lambda1: InfluenceMatrix, lambda2: InfluenceMatrix) -> Result<Self> {
        let (p, n) = y.shape();
        if lambda1.dim() != p || lambda2.dim() != p {
            return Err(Error::DimensionMismatch(format!(
                "data has {p} variables, influence matrices are {} and {}",
                lambda1.dim(),
                lambda2.dim()
            )));
        }
        if n1 == 0 || n1 >= n {
            return Err(Error::InvalidArgument(format!(
                "each condition needs at least one sample ({n1} of {n})"
            )));
        }
        if p == 0 || n * p <= 2 * p {
            return Err(Error::InsufficientDegreesOfFreedom { total: n * p, p });
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("expression data has non-finite entries".into()));
        }
        let split = |k: usize| if k == 0 { (0, n1) } else { (n1, n - n1) };
        let means = [0, 1].map(|k| {
            let (start, len) = split(k);
            y.columns(start, len).column_mean()
        });
        let scatter = [0, 1].map(|k| {
            let (start, len) = split(k);
            let mut centered = y.columns(start, len).into_owned();
            for mut col in centered.column_iter_mut() {
                col -= &means[k];
            }
            &centered * centered.transpose()
        });
        let outer = [&lambda1, &lambda2].map(|l| l.matrix() * l.matrix().transpose());
        Ok(TwoConditionDesign { y, n1, influence: [lambda1, lambda2], outer, means, scatter })
    }

    pub fn p(&self) -> usize {
        self.y.nrows()
    }

    pub fn n1(&self) -> usize {
        self.n1
    }

    pub fn n2(&self) -> usize {
        self.y.ncols() - self.n1
    }

    pub fn n(&self) -> usize {
        self.y.ncols()
    }

    /// `N = n·p`.
    pub fn total_observations(&self) -> usize {
        self.n() * self.p()
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.y
    }

    /// Influence matrix of condition `k` (0 or 1).
    pub fn influence(&self, k: usize) -> &InfluenceMatrix {
        &self.influence[k]
    }

    /// Condition (0 or 1) of sample `j`.
    pub fn condition_of(&self, j: usize) -> usize {
        usize::from(j >= self.n1)
    }

    pub(crate) fn count(&self, k: usize) -> usize {
        if k == 0 {
            self.n1()
        } else {
            self.n2()
        }
    }

    pub(crate) fn lambda(&self, k: usize) -> &DMatrix<f64> {
        self.influence[k].matrix()
    }

    pub(crate) fn outer(&self, k: usize) -> &DMatrix<f64> {
        &self.outer[k]
    }

    pub(crate) fn mean(&self, k: usize) -> &DVector<f64> {
        &self.means[k]
    }

    pub(crate) fn scatter(&self, k: usize) -> &DMatrix<f64> {
        &self.scatter[k]
    }
}

/// Block structure of the stacked model `𝒴 = Ψβ + Πγ + ε`.
///
/// Row block `j` of `Ψ` is `[Λ¹ 0]` or `[0 Λ²]` depending on the condition
/// of sample `j`; `Π` is block diagonal with the same `Λ` blocks, and the
/// covariance `W` is block diagonal with block `j` equal to `σ²_ε Σᵏ`.
/// Nothing of size `np × np` is ever stored.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DesignBlocks {
    p: usize,
    conditions: Vec<usize>,
}

impl DesignBlocks {
    pub fn p(&self) -> usize {
        self.p
    }

    /// Condition of each diagonal block of `W` (and row block of `Ψ`).
    pub fn block_conditions(&self) -> &[usize] {
        &self.conditions
    }

    pub fn psi_rows(&self) -> usize {
        self.conditions.len() * self.p
    }

    pub fn psi_cols(&self) -> usize {
        2 * self.p
    }

    /// Dense `Ψ`. Only meant for small checks.
    pub fn psi_dense(&self, d: &TwoConditionDesign) -> DMatrix<f64> {
        let p = self.p;
        let mut psi = DMatrix::zeros(self.psi_rows(), self.psi_cols());
        for (j, &k) in self.conditions.iter().enumerate() {
            psi.view_mut((j * p, k * p), (p, p)).copy_from(d.lambda(k));
        }
        psi
    }

    /// Dense `Π`. Only meant for small checks.
    pub fn pi_dense(&self, d: &TwoConditionDesign) -> DMatrix<f64> {
        let p = self.p;
        let rows = self.psi_rows();
        let mut pi = DMatrix::zeros(rows, rows);
        for (j, &k) in self.conditions.iter().enumerate() {
            pi.view_mut((j * p, j * p), (p, p)).copy_from(d.lambda(k));
        }
        pi
    }
}

pub fn build_design(d: &TwoConditionDesign) -> DesignBlocks {
    DesignBlocks { p: d.p(), conditions: (0..d.n()).map(|j| d.condition_of(j)).collect() }
}

//! Supervised locality preserving projection.
//!
//! Samples sharing a label are joined in a binary affinity graph `W`, with
//! degree matrix `D` and Laplacian `L = D - W`. With samples as the rows of
//! `X`, the projection minimises `a' X' L X a` subject to `a' X' D X a = 1`.
//! Both sides get a ridge of `rho_eff = rho * mean(diag(X' D X))`, and the
//! `k` smallest eigenpairs of
//!
//! ```text
//! (X' L X + rho_eff I) a = lambda (X' D X + rho_eff I) a
//! ```
//!
//! are found by Cholesky-reducing the right-hand side to a standard symmetric
//! problem.
//!
//! Rows are L2-normalised before fitting and before projecting, and projected
//! rows are L2-normalised again, so Euclidean distances in the subspace behave
//! like cosine distances.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use thiserror::Error;

use crate::feature_store::{FeatureSet, FormatError};

pub const DEFAULT_RHO: f64 = 1e-3;

/// Relative residual every returned eigenpair must satisfy.
pub const RESIDUAL_TOL: f64 = 1e-6;

const EIGEN_EPS: f64 = 1e-15;
const EIGEN_MAX_ITER: usize = 10_000;

#[derive(Debug, Error)]
pub enum SubspaceError {
    #[error("affinity graph needs at least 2 samples, got {0}")]
    SingleSample(usize),

    #[error("need at least 2 distinct labels, got {0}")]
    TooFewClasses(usize),

    #[error("label count {labels} does not match row count {rows}")]
    LabelCount { labels: usize, rows: usize },

    #[error("feature set has no labels")]
    MissingLabels,

    #[error("subspace dimension {k} must be in 1..={d}")]
    BadDim { k: usize, d: usize },

    #[error("regulariser must be finite and non-negative, got {0}")]
    BadRho(f64),

    #[error("no two samples share a label; every direction is equally good")]
    EigenDegenerate,

    #[error("degree-side matrix is not positive definite after regularisation")]
    RankDeficient,

    #[error("eigensolver failed: {0}")]
    EigenFailure(String),

    #[error("dimension mismatch: projection expects {expected} columns, got {found}")]
    DimMismatch { expected: usize, found: usize },

    #[error(transparent)]
    Format(#[from] FormatError),
}

pub type Result<T> = std::result::Result<T, SubspaceError>;

/// Binary same-class affinity graph.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinityGraph {
    weights: DMatrix<f64>,
    degrees: DVector<f64>,
}

impl AffinityGraph {
    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn degrees(&self) -> &DVector<f64> {
        &self.degrees
    }

    pub fn degree_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.degrees)
    }

    pub fn laplacian(&self) -> DMatrix<f64> {
        self.degree_matrix() - &self.weights
    }
}

/// `W[i][j] = 1` iff `i != j` and the two samples share a label.
pub fn build_affinity(labels: &[usize]) -> Result<AffinityGraph> {
    let n = labels.len();
    if n < 2 {
        return Err(SubspaceError::SingleSample(n));
    }
    let weights = DMatrix::from_fn(n, n, |i, j| {
        if i != j && labels[i] == labels[j] {
            1.0
        } else {
            0.0
        }
    });
    let degrees = DVector::from_iterator(n, weights.row_iter().map(|r| r.sum()));
    Ok(AffinityGraph { weights, degrees })
}

/// Scales every row to unit L2 norm. Zero rows stay zero.
pub fn normalize_rows(x: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = x.clone();
    for mut row in out.row_iter_mut() {
        let norm = row.norm();
        if norm > 0.0 {
            row /= norm;
        }
    }
    out
}

/// The regularised matrix pair of one LPP fit.
#[derive(Debug, Clone)]
pub struct LppProblem {
    /// `X' L X + rho_eff I`
    pub lhs: DMatrix<f64>,
    /// `X' D X + rho_eff I`
    pub rhs: DMatrix<f64>,
    pub rho_eff: f64,
}

impl LppProblem {
    /// Builds the pair from raw rows (normalised here) and their labels.
    ///
    /// The Laplacian side is accumulated as `sum_c n_c * S_c`, with `S_c` the
    /// centred scatter of class `c`, which equals `X' L X` for the binary
    /// same-class graph without forming the `n x n` matrices.
    pub fn build(x: &DMatrix<f64>, labels: &[usize], rho: f64) -> Result<Self> {
        let (n, d) = x.shape();
        if labels.len() != n {
            return Err(SubspaceError::LabelCount {
                labels: labels.len(),
                rows: n,
            });
        }
        if n < 2 {
            return Err(SubspaceError::SingleSample(n));
        }
        if !rho.is_finite() || rho < 0.0 {
            return Err(SubspaceError::BadRho(rho));
        }
        let num_classes = labels.iter().max().map_or(0, |&m| m + 1);
        let mut members: Vec<Vec<usize>> = vec![Vec::new(); num_classes];
        for (i, &c) in labels.iter().enumerate() {
            members[c].push(i);
        }
        let distinct = members.iter().filter(|m| !m.is_empty()).count();
        if distinct < 2 {
            return Err(SubspaceError::TooFewClasses(distinct));
        }
        if members.iter().all(|m| m.len() < 2) {
            return Err(SubspaceError::EigenDegenerate);
        }

        let x = normalize_rows(x);
        let mut lhs = DMatrix::<f64>::zeros(d, d);
        let mut rhs = DMatrix::<f64>::zeros(d, d);
        for rows in members.iter().filter(|m| m.len() >= 2) {
            let n_c = rows.len() as f64;
            let block = x.select_rows(rows);
            let mean = block.row_sum() / n_c;
            let mut centred = block.clone();
            for mut row in centred.row_iter_mut() {
                row -= &mean;
            }
            lhs.gemm_tr(n_c, &centred, &centred, 1.0);
            rhs.gemm_tr(n_c - 1.0, &block, &block, 1.0);
        }

        let rho_eff = rho * rhs.diagonal().mean();
        for i in 0..d {
            lhs[(i, i)] += rho_eff;
            rhs[(i, i)] += rho_eff;
        }
        Ok(LppProblem {
            lhs: symmetrize(lhs),
            rhs: symmetrize(rhs),
            rho_eff,
        })
    }

    /// Solves for the `k` smallest generalised eigenpairs.
    pub fn solve(&self, k: usize) -> Result<Projection> {
        let d = self.lhs.nrows();
        if k == 0 || k > d {
            return Err(SubspaceError::BadDim { k, d });
        }
        let chol = Cholesky::new(self.rhs.clone()).ok_or(SubspaceError::RankDeficient)?;
        let lower = chol.l();
        let upper = lower.transpose();

        // reduced = G^-1 lhs G^-T with rhs = G G'
        let half = lower
            .solve_lower_triangular(&self.lhs)
            .ok_or(SubspaceError::RankDeficient)?;
        let reduced = lower
            .solve_lower_triangular(&half.transpose())
            .ok_or(SubspaceError::RankDeficient)?;
        let eigen = SymmetricEigen::try_new(symmetrize(reduced), EIGEN_EPS, EIGEN_MAX_ITER)
            .ok_or_else(|| SubspaceError::EigenFailure("no convergence".into()))?;

        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| {
            eigen.eigenvalues[a]
                .total_cmp(&eigen.eigenvalues[b])
                .then(a.cmp(&b))
        });
        order.truncate(k);

        let eigenvalues: Vec<f64> = order.iter().map(|&i| eigen.eigenvalues[i]).collect();
        let reduced_vectors = eigen.eigenvectors.select_columns(&order);
        let mut basis = upper
            .solve_upper_triangular(&reduced_vectors)
            .ok_or(SubspaceError::RankDeficient)?;
        for mut col in basis.column_iter_mut() {
            let mut pivot = 0;
            for i in 1..col.len() {
                if col[i].abs() > col[pivot].abs() {
                    pivot = i;
                }
            }
            if col[pivot] < 0.0 {
                col.neg_mut();
            }
        }

        let projection = Projection { basis, eigenvalues };
        let lhs_norm = self.lhs.norm();
        for (j, residual) in projection.residuals(self).into_iter().enumerate() {
            let bound = RESIDUAL_TOL * projection.basis.column(j).norm() * lhs_norm;
            if residual.is_nan() || residual > bound {
                return Err(SubspaceError::EigenFailure(format!(
                    "eigenpair {j} residual {residual:e} exceeds {bound:e}"
                )));
            }
        }
        Ok(projection)
    }
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

/// A learned `d x k` linear map with ascending generalised eigenvalues.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    basis: DMatrix<f64>,
    eigenvalues: Vec<f64>,
}

impl Projection {
    /// Wraps an arbitrary basis, e.g. the identity. Eigenvalues are left empty.
    pub fn from_basis(basis: DMatrix<f64>) -> Self {
        Projection {
            basis,
            eigenvalues: Vec::new(),
        }
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn input_dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.basis.ncols()
    }

    /// `||lhs a - lambda rhs a||_2` for each eigenpair.
    pub fn residuals(&self, problem: &LppProblem) -> Vec<f64> {
        self.basis
            .column_iter()
            .zip(&self.eigenvalues)
            .map(|(a, &lambda)| (&problem.lhs * a - (&problem.rhs * a) * lambda).norm())
            .collect()
    }

    /// Projects raw rows: `normalize(normalize(x) * A)`.
    pub fn project(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.ncols() != self.input_dim() {
            return Err(SubspaceError::DimMismatch {
                expected: self.input_dim(),
                found: x.ncols(),
            });
        }
        Ok(normalize_rows(&(normalize_rows(x) * &self.basis)))
    }
}

pub fn fit_lpp_rows(x: &DMatrix<f64>, labels: &[usize], k: usize, rho: f64) -> Result<Projection> {
    LppProblem::build(x, labels, rho)?.solve(k)
}

pub fn fit_lpp(x: &FeatureSet, k: usize, rho: f64) -> Result<Projection> {
    let labels = x.labels().ok_or(SubspaceError::MissingLabels)?;
    fit_lpp_rows(&x.to_f64(), labels.values(), k, rho)
}

/// Projects a feature set, keeping its domain and labels.
pub fn transform(projection: &Projection, x: &FeatureSet) -> Result<FeatureSet> {
    let z = projection.project(&x.to_f64())?;
    let out = FeatureSet::new(z.map(|v| v as f32), x.domain())?;
    Ok(match x.labels() {
        Some(labels) => out.with_labels(labels.clone())?,
        None => out,
    })
}

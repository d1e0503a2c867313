//! Classifiers that run in the learned subspace.
//!
//! Nearest class mean (NCM) labels each sample by its closest class mean.
//! Structured prediction (SP) clusters the target samples with k-means
//! seeded at the class means, then matches clusters to classes one-to-one
//! by solving an assignment problem on centroid-to-mean distances. Both
//! report a softmax over negative squared distances as confidence.

use nalgebra::{DMatrix, RowDVector};
use thiserror::Error;

pub const SP_MAX_ITER: usize = 100;
pub const SP_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum ClassifyError {
    #[error("dimension mismatch: expected {expected} columns, got {found}")]
    DimMismatch { expected: usize, found: usize },

    #[error("cost matrix is not square: {rows} x {cols}")]
    NonSquare { rows: usize, cols: usize },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("class {0} has no samples")]
    ClassMissing(usize),

    #[error("bad parameters: {0}")]
    BadParams(String),
}

pub type Result<T> = std::result::Result<T, ClassifyError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Origin {
    Ncm,
    Sp,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub label: usize,
    /// Softmax probability of `label`, in `[0, 1]`.
    pub confidence: f64,
    pub origin: Origin,
}

/// Unit-norm class means, one row per class.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassMeans {
    means: DMatrix<f64>,
}

impl ClassMeans {
    /// Averages the rows of each class and L2-normalises the result.
    pub fn fit(z: &DMatrix<f64>, labels: &[usize], num_classes: usize) -> Result<Self> {
        if labels.len() != z.nrows() {
            return Err(ClassifyError::LengthMismatch {
                left: labels.len(),
                right: z.nrows(),
            });
        }
        let mut sums = DMatrix::<f64>::zeros(num_classes, z.ncols());
        let mut counts = vec![0usize; num_classes];
        for (i, &c) in labels.iter().enumerate() {
            if c >= num_classes {
                return Err(ClassifyError::BadParams(format!(
                    "label {c} out of range for {num_classes} classes"
                )));
            }
            let mut row = sums.row_mut(c);
            row += z.row(i);
            counts[c] += 1;
        }
        if let Some(missing) = counts.iter().position(|&n| n == 0) {
            return Err(ClassifyError::ClassMissing(missing));
        }
        for (c, &n) in counts.iter().enumerate() {
            let mut row = sums.row_mut(c);
            row /= n as f64;
        }
        Ok(ClassMeans::from_rows(sums))
    }

    /// Uses the given rows as means after normalising them.
    pub fn from_rows(means: DMatrix<f64>) -> Self {
        ClassMeans {
            means: crate::subspace::normalize_rows(&means),
        }
    }

    pub fn means(&self) -> &DMatrix<f64> {
        &self.means
    }

    pub fn num_classes(&self) -> usize {
        self.means.nrows()
    }

    pub fn dim(&self) -> usize {
        self.means.ncols()
    }
}

fn squared_distance(a: &RowDVector<f64>, b: &RowDVector<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn squared_distances(point: &RowDVector<f64>, centers: &DMatrix<f64>) -> Vec<f64> {
    centers
        .row_iter()
        .map(|c| squared_distance(point, &c.into_owned()))
        .collect()
}

/// First index of the minimum.
fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v < values[best] {
            best = i;
        }
    }
    best
}

/// `softmax(-distances / temperature)`.
pub fn softmax_neg(distances: &[f64], temperature: f64) -> Vec<f64> {
    let min = distances.iter().copied().fold(f64::INFINITY, f64::min);
    let weights: Vec<f64> = distances
        .iter()
        .map(|&d| (-(d - min) / temperature).exp())
        .collect();
    let total: f64 = weights.iter().sum();
    weights.into_iter().map(|w| w / total).collect()
}

fn check_dim(z: &DMatrix<f64>, expected: usize) -> Result<()> {
    if z.ncols() != expected {
        return Err(ClassifyError::DimMismatch {
            expected,
            found: z.ncols(),
        });
    }
    Ok(())
}

pub fn ncm_predict(z: &DMatrix<f64>, means: &ClassMeans) -> Result<Vec<Prediction>> {
    ncm_predict_with_temperature(z, means, 1.0)
}

pub fn ncm_predict_with_temperature(
    z: &DMatrix<f64>,
    means: &ClassMeans,
    temperature: f64,
) -> Result<Vec<Prediction>> {
    check_dim(z, means.dim())?;
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(ClassifyError::BadParams(format!(
            "temperature must be positive, got {temperature}"
        )));
    }
    Ok(z.row_iter()
        .map(|row| {
            let dists = squared_distances(&row.into_owned(), means.means());
            let label = argmin(&dists);
            Prediction {
                label,
                confidence: softmax_neg(&dists, temperature)[label],
                origin: Origin::Ncm,
            }
        })
        .collect())
}

/// Result of Lloyd's k-means.
#[derive(Debug, Clone, PartialEq)]
pub struct KMeans {
    pub assignments: Vec<usize>,
    pub centroids: DMatrix<f64>,
    pub iterations: usize,
    /// Sum of squared distances to the assigned centroid after each iteration.
    pub objective: Vec<f64>,
}

/// Lloyd iterations from a supplied initialisation.
///
/// Stops once no centroid moves by more than `tol` (L2), or after `max_iter`
/// iterations. Empty clusters keep their centroid. Ties go to the lowest
/// cluster id.
pub fn kmeans(z: &DMatrix<f64>, init: &DMatrix<f64>, max_iter: usize, tol: f64) -> Result<KMeans> {
    let k = init.nrows();
    check_dim(z, init.ncols())?;
    if k == 0 || z.nrows() < k {
        return Err(ClassifyError::BadParams(format!(
            "need 1 <= clusters <= samples, got {k} clusters for {} samples",
            z.nrows()
        )));
    }
    if init.iter().any(|v| !v.is_finite()) {
        return Err(ClassifyError::BadParams(
            "initial centroids must be finite".into(),
        ));
    }
    if max_iter == 0 || tol.is_nan() || tol < 0.0 {
        return Err(ClassifyError::BadParams(format!(
            "need max_iter >= 1 and tol >= 0, got {max_iter} and {tol}"
        )));
    }

    let rows: Vec<RowDVector<f64>> = z.row_iter().map(|r| r.into_owned()).collect();
    let mut centroids = init.clone();
    let mut assignments = vec![0usize; rows.len()];
    let mut objective = Vec::new();
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        for (a, row) in assignments.iter_mut().zip(&rows) {
            *a = argmin(&squared_distances(row, &centroids));
        }

        let mut sums = DMatrix::<f64>::zeros(k, z.ncols());
        let mut counts = vec![0usize; k];
        for (&a, row) in assignments.iter().zip(&rows) {
            let mut s = sums.row_mut(a);
            s += row;
            counts[a] += 1;
        }
        let mut movement = 0.0f64;
        for (j, &count) in counts.iter().enumerate() {
            if count == 0 {
                continue;
            }
            let updated = sums.row(j) / count as f64;
            movement =
                movement.max(squared_distance(&updated, &centroids.row(j).into_owned()).sqrt());
            centroids.set_row(j, &updated);
        }

        objective.push(
            assignments
                .iter()
                .zip(&rows)
                .map(|(&a, row)| squared_distance(row, &centroids.row(a).into_owned()))
                .sum(),
        );
        if movement <= tol {
            break;
        }
    }
    Ok(KMeans {
        assignments,
        centroids,
        iterations,
        objective,
    })
}

/// Minimum-cost perfect assignment; `result[row] = column`.
///
/// Among equal-cost optima the lexicographically smallest permutation is
/// returned: after the O(n^3) shortest-augmenting-path solve, every optimal
/// assignment uses only edges with zero reduced cost, so rows are pinned one
/// at a time to their smallest column that still admits a perfect matching
/// on those edges.
pub fn hungarian(cost: &DMatrix<f64>) -> Result<Vec<usize>> {
    let (rows, cols) = cost.shape();
    if rows != cols {
        return Err(ClassifyError::NonSquare { rows, cols });
    }
    if cost.iter().any(|v| !v.is_finite()) {
        return Err(ClassifyError::BadParams(
            "cost entries must be finite".into(),
        ));
    }
    let n = rows;
    if n == 0 {
        return Ok(Vec::new());
    }

    // 1-based potentials; column 0 is the virtual root
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[(i0 - 1, j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut row_to_col = vec![0usize; n];
    let mut col_to_row = vec![0usize; n];
    for j in 1..=n {
        row_to_col[owner[j] - 1] = j - 1;
        col_to_row[j - 1] = owner[j] - 1;
    }

    let scale = cost.amax().max(1.0);
    let eps = 1e-9 * scale;
    let tight = |i: usize, j: usize| cost[(i, j)] - u[i + 1] - v[j + 1] <= eps;

    let mut fixed = vec![false; n];
    for i in 0..n {
        for c in 0..n {
            if fixed[c] || !tight(i, c) {
                continue;
            }
            if row_to_col[i] == c || reroute(i, c, &tight, &fixed, &mut row_to_col, &mut col_to_row)
            {
                break;
            }
        }
        fixed[row_to_col[i]] = true;
    }
    Ok(row_to_col)
}

/// Tries to move row `i` onto column `c` while keeping a perfect matching on
/// tight edges, re-matching only rows after `i` and unfixed columns.
fn reroute(
    i: usize,
    c: usize,
    tight: &impl Fn(usize, usize) -> bool,
    fixed: &[bool],
    row_to_col: &mut [usize],
    col_to_row: &mut [usize],
) -> bool {
    let n = row_to_col.len();
    let start = col_to_row[c];
    let goal = row_to_col[i];
    let mut parent = vec![usize::MAX; n];
    let mut queue = std::collections::VecDeque::from([start]);
    let mut found = false;
    'search: while let Some(x) = queue.pop_front() {
        for y in 0..n {
            if fixed[y] || y == c || parent[y] != usize::MAX || !tight(x, y) {
                continue;
            }
            parent[y] = x;
            if y == goal {
                found = true;
                break 'search;
            }
            queue.push_back(col_to_row[y]);
        }
    }
    if !found {
        return false;
    }
    let mut y = goal;
    loop {
        let x = parent[y];
        let previous = row_to_col[x];
        row_to_col[x] = y;
        col_to_row[y] = x;
        if x == start {
            break;
        }
        y = previous;
    }
    row_to_col[i] = c;
    col_to_row[c] = i;
    true
}

/// Full SP output, kept for inspection.
#[derive(Debug, Clone)]
pub struct StructuredPrediction {
    pub predictions: Vec<Prediction>,
    pub clustering: KMeans,
    /// `cluster_to_class[j]` is the class matched to cluster `j`.
    pub cluster_to_class: Vec<usize>,
}

pub fn structured_prediction(
    z: &DMatrix<f64>,
    means: &ClassMeans,
    temperature: f64,
) -> Result<StructuredPrediction> {
    check_dim(z, means.dim())?;
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(ClassifyError::BadParams(format!(
            "temperature must be positive, got {temperature}"
        )));
    }
    let clustering = kmeans(z, means.means(), SP_MAX_ITER, SP_TOL)?;
    let c = means.num_classes();
    let cost = DMatrix::from_fn(c, c, |j, class| {
        squared_distance(
            &clustering.centroids.row(j).into_owned(),
            &means.means().row(class).into_owned(),
        )
    });
    let cluster_to_class = hungarian(&cost)?;
    let predictions = z
        .row_iter()
        .zip(&clustering.assignments)
        .map(|(row, &cluster)| {
            let dists = squared_distances(&row.into_owned(), &clustering.centroids);
            Prediction {
                label: cluster_to_class[cluster],
                confidence: softmax_neg(&dists, temperature)[cluster],
                origin: Origin::Sp,
            }
        })
        .collect();
    Ok(StructuredPrediction {
        predictions,
        clustering,
        cluster_to_class,
    })
}

pub fn sp_predict(z: &DMatrix<f64>, means: &ClassMeans) -> Result<Vec<Prediction>> {
    Ok(structured_prediction(z, means, 1.0)?.predictions)
}

/// Keeps the more confident prediction per sample; ties keep NCM.
pub fn combine(ncm: &[Prediction], sp: &[Prediction]) -> Result<Vec<Prediction>> {
    if ncm.len() != sp.len() {
        return Err(ClassifyError::LengthMismatch {
            left: ncm.len(),
            right: sp.len(),
        });
    }
    Ok(ncm
        .iter()
        .zip(sp)
        .map(|(a, b)| if b.confidence > a.confidence { *b } else { *a })
        .collect())
}

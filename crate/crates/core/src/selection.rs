//! Classwise, confidence-ranked pseudo-label selection on a linear ramp.
//!
//! At step `t` of `T`, a class with `N_c` candidate predictions admits its
//! `ceil(t * N_c / T)` most confident ones, so every non-empty class
//! contributes from the first step and everything is admitted at `t = T`.

use thiserror::Error;

use crate::classify::Prediction;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SelectionError {
    #[error("no predictions to select from")]
    EmptyPredictions,

    #[error("prediction {index} has label {label}, out of range for {num_classes} classes")]
    LabelOutOfRange {
        index: usize,
        label: usize,
        num_classes: usize,
    },

    #[error("schedule step {t} must be in 1..={total}")]
    BadSchedule { t: usize, total: usize },
}

pub type Result<T> = std::result::Result<T, SelectionError>;

/// Step `t` of a `total`-step linear ramp.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SelectionSchedule {
    t: usize,
    total: usize,
}

impl SelectionSchedule {
    pub fn new(t: usize, total: usize) -> Result<Self> {
        if t == 0 || t > total {
            return Err(SelectionError::BadSchedule { t, total });
        }
        Ok(SelectionSchedule { t, total })
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn fraction(&self) -> f64 {
        self.t as f64 / self.total as f64
    }

    pub fn is_last(&self) -> bool {
        self.t == self.total
    }

    /// `ceil(t / T * pool)` in exact integer arithmetic.
    pub fn quota(&self, pool: usize) -> usize {
        (self.t * pool).div_ceil(self.total)
    }
}

/// Selected target samples with their pseudo labels, sorted by index.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PseudoLabelSet {
    pub indices: Vec<usize>,
    pub labels: Vec<usize>,
    pub confidences: Vec<f64>,
}

impl PseudoLabelSet {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn counts_per_class(&self, num_classes: usize) -> Vec<usize> {
        let mut counts = vec![0; num_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }
}

fn candidates_by_class(preds: &[Prediction], num_classes: usize) -> Result<Vec<Vec<usize>>> {
    if preds.is_empty() {
        return Err(SelectionError::EmptyPredictions);
    }
    let mut pools = vec![Vec::new(); num_classes];
    for (index, p) in preds.iter().enumerate() {
        if p.label >= num_classes {
            return Err(SelectionError::LabelOutOfRange {
                index,
                label: p.label,
                num_classes,
            });
        }
        pools[p.label].push(index);
    }
    Ok(pools)
}

/// Per-class admission counts `n_c` for this step.
pub fn ramp_counts(
    preds: &[Prediction],
    sched: SelectionSchedule,
    num_classes: usize,
) -> Result<Vec<usize>> {
    Ok(candidates_by_class(preds, num_classes)?
        .iter()
        .map(|pool| sched.quota(pool.len()))
        .collect())
}

pub fn select(
    preds: &[Prediction],
    sched: SelectionSchedule,
    num_classes: usize,
) -> Result<PseudoLabelSet> {
    let mut chosen = Vec::new();
    for mut pool in candidates_by_class(preds, num_classes)? {
        let quota = sched.quota(pool.len());
        pool.sort_by(|&a, &b| {
            preds[b]
                .confidence
                .total_cmp(&preds[a].confidence)
                .then(a.cmp(&b))
        });
        chosen.extend_from_slice(&pool[..quota]);
    }
    chosen.sort_unstable();
    Ok(PseudoLabelSet {
        labels: chosen.iter().map(|&i| preds[i].label).collect(),
        confidences: chosen.iter().map(|&i| preds[i].confidence).collect(),
        indices: chosen,
    })
}

//! The iterative selective pseudo-labelling loop.
//!
//! Each iteration fits the subspace on the labelled source plus the target
//! samples selected so far (source only on the first pass), projects both
//! domains, builds class means from every labelled or pseudo-labelled
//! embedding, predicts the whole target set with NCM and SP, keeps the more
//! confident of the two, and re-selects pseudo labels on the linear ramp.
//! Target ground truth, when present, is read only to fill in the report.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classify::{
    combine, ncm_predict, ncm_predict_with_temperature, structured_prediction, ClassMeans,
    ClassifyError, Prediction,
};
use crate::feature_store::{FeatureSet, FormatError, LabelVector};
use crate::selection::{select, PseudoLabelSet, SelectionError, SelectionSchedule};
use crate::subspace::{fit_lpp_rows, normalize_rows, SubspaceError, DEFAULT_RHO};

pub const DEFAULT_ITERATIONS: usize = 10;

#[derive(Debug, Error)]
pub enum AdaptError {
    #[error("source class {0} has no samples")]
    ClassMissing(usize),

    #[error("{0} feature set has no labels")]
    MissingLabels(&'static str),

    #[error("source has {source_dim} feature columns but target has {target_dim}")]
    DimMismatch {
        source_dim: usize,
        target_dim: usize,
    },

    #[error("need at least 2 source classes, got {0}")]
    TooFewClasses(usize),

    #[error("length mismatch: {left} predictions vs {right} labels")]
    LengthMismatch { left: usize, right: usize },

    #[error("cannot score an empty label vector")]
    Empty,

    #[error("invalid configuration: {0}")]
    BadConfig(String),

    #[error(transparent)]
    Format(#[from] FormatError),

    #[error(transparent)]
    Subspace(#[from] SubspaceError),

    #[error(transparent)]
    Classify(#[from] ClassifyError),

    #[error(transparent)]
    Selection(#[from] SelectionError),
}

pub type Result<T> = std::result::Result<T, AdaptError>;

#[derive(Debug, Clone, PartialEq)]
pub struct AdaptConfig {
    /// Number of SPL iterations `T`.
    pub iterations: usize,
    /// Subspace dimension; `None` picks `min(C, d)`.
    pub dim: Option<usize>,
    pub rho: f64,
    pub temperature: f64,
    /// Echoed in the report. The loop itself draws no random numbers.
    pub seed: u64,
}

impl Default for AdaptConfig {
    fn default() -> Self {
        AdaptConfig {
            iterations: DEFAULT_ITERATIONS,
            dim: None,
            rho: DEFAULT_RHO,
            temperature: 1.0,
            seed: 0,
        }
    }
}

impl AdaptConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(AdaptError::BadConfig(
                "iterations must be at least 1".into(),
            ));
        }
        if self.dim == Some(0) {
            return Err(AdaptError::BadConfig(
                "subspace dimension must be at least 1".into(),
            ));
        }
        if !(self.rho >= 0.0 && self.rho.is_finite()) {
            return Err(AdaptError::BadConfig(format!(
                "rho must be finite and non-negative, got {}",
                self.rho
            )));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(AdaptError::BadConfig(format!(
                "temperature must be positive, got {}",
                self.temperature
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub iters: usize,
    pub dim: usize,
    pub rho: f64,
    pub temperature: f64,
    pub seed: u64,
    pub num_classes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub t: usize,
    pub selected_per_class: Vec<usize>,
    pub accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: ConfigEcho,
    pub iterations: Vec<IterationRecord>,
    pub final_accuracy: Option<f64>,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }
}

#[derive(Debug, Clone)]
pub struct Adaptation {
    pub predictions: LabelVector,
    /// Combined predictions of the final iteration, with confidences.
    pub final_predictions: Vec<Prediction>,
    pub report: RunReport,
}

fn source_classes(source: &FeatureSet) -> Result<(usize, &LabelVector)> {
    let labels = source.labels().ok_or(AdaptError::MissingLabels("source"))?;
    let num_classes = labels.num_classes();
    if let Some(missing) = labels.class_counts().iter().position(|&n| n == 0) {
        return Err(AdaptError::ClassMissing(missing));
    }
    if num_classes < 2 {
        return Err(AdaptError::TooFewClasses(num_classes));
    }
    Ok((num_classes, labels))
}

fn check_dims(source: &FeatureSet, target: &FeatureSet) -> Result<()> {
    if source.cols() != target.cols() {
        return Err(AdaptError::DimMismatch {
            source_dim: source.cols(),
            target_dim: target.cols(),
        });
    }
    Ok(())
}

/// Source rows followed by the selected target rows.
fn stack(source: &DMatrix<f64>, target: &DMatrix<f64>, selected: &[usize]) -> DMatrix<f64> {
    let picked = target.select_rows(selected);
    let mut out = DMatrix::zeros(source.nrows() + picked.nrows(), source.ncols());
    out.rows_mut(0, source.nrows()).copy_from(source);
    out.rows_mut(source.nrows(), picked.nrows())
        .copy_from(&picked);
    out
}

fn labels_of(preds: &[Prediction]) -> Vec<usize> {
    preds.iter().map(|p| p.label).collect()
}

/// Runs `cfg.iterations` rounds of subspace learning and pseudo-labelling.
pub fn adapt(source: &FeatureSet, target: &FeatureSet, cfg: &AdaptConfig) -> Result<Adaptation> {
    cfg.validate()?;
    check_dims(source, target)?;
    let (num_classes, source_labels) = source_classes(source)?;
    let truth = target
        .labels()
        .map(|l| l.clone().into_classes(num_classes.max(l.num_classes())))
        .transpose()?;
    let dim = cfg.dim.unwrap_or(num_classes.min(source.cols()));

    let xs = source.to_f64();
    let xt = target.to_f64();
    let mut selected = PseudoLabelSet::default();
    let mut records = Vec::with_capacity(cfg.iterations);
    let mut combined = Vec::new();
    for t in 1..=cfg.iterations {
        let stacked = stack(&xs, &xt, &selected.indices);
        let mut labels = source_labels.values().to_vec();
        labels.extend_from_slice(&selected.labels);

        let projection = fit_lpp_rows(&stacked, &labels, dim, cfg.rho)?;
        let zs = projection.project(&xs)?;
        let zt = projection.project(&xt)?;
        let means = ClassMeans::fit(&stack(&zs, &zt, &selected.indices), &labels, num_classes)?;

        let ncm = ncm_predict_with_temperature(&zt, &means, cfg.temperature)?;
        let sp = structured_prediction(&zt, &means, cfg.temperature)?.predictions;
        combined = combine(&ncm, &sp)?;

        selected = select(
            &combined,
            SelectionSchedule::new(t, cfg.iterations)?,
            num_classes,
        )?;
        let accuracy = truth
            .as_ref()
            .map(|truth| accuracy(&labels_of(&combined), truth.values()))
            .transpose()?;
        records.push(IterationRecord {
            t,
            selected_per_class: selected.counts_per_class(num_classes),
            accuracy,
        });
    }

    let predictions = LabelVector::with_classes(labels_of(&combined), num_classes)?;
    let final_accuracy = records.last().and_then(|r| r.accuracy);
    Ok(Adaptation {
        predictions,
        final_predictions: combined,
        report: RunReport {
            config: ConfigEcho {
                iters: cfg.iterations,
                dim,
                rho: cfg.rho,
                temperature: cfg.temperature,
                seed: cfg.seed,
                num_classes,
            },
            iterations: records,
            final_accuracy,
        },
    })
}

/// No-adaptation reference: NCM on L2-normalised raw features.
pub fn eval_ncm_baseline(source: &FeatureSet, target: &FeatureSet) -> Result<f64> {
    check_dims(source, target)?;
    let (num_classes, source_labels) = source_classes(source)?;
    let truth = target.labels().ok_or(AdaptError::MissingLabels("target"))?;
    let means = ClassMeans::fit(
        &normalize_rows(&source.to_f64()),
        source_labels.values(),
        num_classes,
    )?;
    let preds = ncm_predict(&normalize_rows(&target.to_f64()), &means)?;
    accuracy(&labels_of(&preds), truth.values())
}

/// Fraction of positions where `pred` equals `truth`.
pub fn accuracy(pred: &[usize], truth: &[usize]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(AdaptError::LengthMismatch {
            left: pred.len(),
            right: truth.len(),
        });
    }
    if pred.is_empty() {
        return Err(AdaptError::Empty);
    }
    let hits = pred.iter().zip(truth).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / pred.len() as f64)
}

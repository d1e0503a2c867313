//! Unsupervised domain adaptation over precomputed feature vectors.
//!
//! A labelled source domain and an unlabelled target domain are projected
//! into a class-discriminative subspace learned by supervised locality
//! preserving projection. Target samples are then pseudo-labelled with a
//! combination of nearest-class-mean and structured (cluster-matching)
//! prediction, and the most confident pseudo labels of each class are fed
//! back into the next subspace fit on a linear ramp until every target
//! sample is used.
//!
//! | module | contents |
//! |--------|----------|
//! | [`feature_store`] | FVEC/label file formats, synthetic two-domain data |
//! | [`subspace`] | affinity graph, regularised generalised eigenproblem, projection |
//! | [`classify`] | NCM, k-means, Hungarian assignment, SP, combination |
//! | [`selection`] | classwise linear-ramp pseudo-label selection |
//! | [`pipeline`] | the adaptation loop, baseline and report |
//! | [`cli`] | the `spl` command |

pub mod classify;
pub mod cli;
pub mod feature_store;
pub mod pipeline;
pub mod selection;
pub mod subspace;

pub use classify::{ClassMeans, Origin, Prediction};
pub use feature_store::{Domain, FeatureSet, LabelVector};
pub use pipeline::{adapt, eval_ncm_baseline, AdaptConfig, RunReport};
pub use selection::{PseudoLabelSet, SelectionSchedule};
pub use subspace::Projection;

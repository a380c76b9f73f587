//! Accuracy metrics, significance testing, interpretability measures,
//! and vegetation indices.

pub mod interpret;
pub mod metrics;
pub mod significance;
pub mod vegetation;

pub use interpret::{dunn_index, feature_distribution, per_class_entropy, r_squared, shannon_entropy, LogBase};
pub use metrics::{confusion, kappa, metrics_report, oa_aa, sens_spec, ConfusionMatrix, MetricsReport};
pub use significance::{mcnemar, mcnemar_csv, mcnemar_from_counts, McNemar, Significance};
pub use vegetation::{index_map, nearest_band, vegetation_index, VegetationIndex, DEFAULT_TOLERANCE_NM};

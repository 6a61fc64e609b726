//! Quantitative and qualitative checks on attribution results.

mod abnormal;
mod auc;
mod beeswarm;
mod counterfactual;
mod importance;
mod topk;

pub use abnormal::{detect_abnormal, spearman, AbnormalPoint, DEFAULT_TAIL_QUANTILE, DEFAULT_TAU};
pub use auc::{bootstrap_auc_ci, compute_auc, AucResult};
pub use beeswarm::{beeswarm_points, export_beeswarm, BeeswarmExport, BeeswarmPoint};
pub use counterfactual::{counterfactual_probe, probe_with_value, nearest_donor, ProbeResult};
pub use importance::{global_importance, ImportanceRanking};
pub use topk::{evaluate_topk, fit_and_score, topk_seed, write_wide_csv, TopkCache, TopkRow, TopkSpec, TopkTable};

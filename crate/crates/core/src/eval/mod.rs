//! Trial lists, EER/ACC scoring, enrollment, fusion and cohorts.

pub mod cohort;
pub mod metrics;
pub mod report;
pub mod scoring;
pub mod trials;

pub use cohort::{cohort_filter, time_span_cohorts};
pub use metrics::{compute_acc, compute_eer, DetPoint, EerResult};
pub use report::{results_table, EvalReport};
pub use scoring::{enroll, fuse_embeddings, fuse_scores, score_trials, score_trials_enrolled, znorm};
pub use trials::{build_trials, Label, Trial, TrialSet};

//! Value-aligned feed ranking toolkit.
//!
//! Posts are scored on eight anti-democratic attitude variables (each on a
//! 1-3 scale, summed into an 8-24 total) either by manual coders or by an
//! LLM rater driven by fixed prompt templates. Rater columns can be compared
//! with ordinal Krippendorff's alpha, Spearman's rho and classification
//! metrics, and scored corpora are turned into the seven feed conditions used
//! for experiments.
//!
//! The numeric core in [`agreement`] is generic over the scalar type (see
//! [`scalar::Real`]); the aliases at the crate root fix it to `f64` or `f32`.

pub mod agreement;
pub mod codebook;
pub mod corpus;
pub mod feed;
pub mod rater;
pub mod scalar;

pub use codebook::{AttitudeScore, FactorProfile, Score, VariableId, VariableRating};
pub use corpus::{AnnotationColumn, Corpus, EngagementCounts, Ideology, Post};
pub use feed::{BuildInputs, Condition, FeedSlot, RankedFeed};
pub use scalar::Real;

/// Agreement report computed in double precision.
pub type AgreementReport = agreement::AgreementReport<f64>;
/// Agreement report computed in single precision.
pub type AgreementReportF32 = agreement::AgreementReport<f32>;
/// Metric value (or explicit undefined marker) in double precision.
pub type Metric = agreement::Metric<f64>;
/// Macro-averaged classification result in double precision.
pub type ClassificationMetrics = agreement::ClassificationMetrics<f64>;

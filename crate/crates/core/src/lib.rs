//! Requirements-analysis engine for privacy-relevant user stories: parsing,
//! normalization, ambiguity detection, GDPR article mapping, compliance
//! descriptions, enforcement-case matching and attitude scoring.

pub mod ambiguity;
pub mod cases;
pub mod data;
pub mod describe;
pub mod diagnostic;
pub mod kg;
pub mod normalize;
pub mod num;
pub mod story;
pub mod survey;
pub mod text;

pub use num::Scalar;
pub use num_rational::Rational64;

/// Attitude score in exact arithmetic.
pub type ExactScore = survey::AttitudeScore<Rational64>;
/// Attitude score in floating point, for display.
pub type FloatScore = survey::AttitudeScore<f64>;
pub type ExactDelta = survey::DeltaReport<Rational64>;
pub type FloatDelta = survey::DeltaReport<f64>;
pub type ExactCaseMatch = cases::CaseMatch<Rational64>;
pub type FloatCaseMatch = cases::CaseMatch<f64>;

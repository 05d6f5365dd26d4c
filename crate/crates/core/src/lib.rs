//! Vaccine effectiveness under competing variants and multiple vaccines.
//!
//! The core crate holds the exponential competing-risks model, the three VE
//! measures with their closed forms and limits, test-negative design expected
//! counts, and sample-size and precision calculations.

pub mod document;
pub mod hazard;
pub mod measures;
pub mod model;
pub mod numerics;
pub mod oracle;
pub mod rng;
pub mod samplesize;
pub mod scenario;
pub mod tnd;

pub use measures::{Comparison, VeError, VeMeasureKind, VeNumber, VeValue, Vanished};
pub use model::{
    AllOrNoneProfile, ArmProfile, CohortComponents, EpidemicRates, LeakyProfile, ModelError,
    StudyHorizon, VariantSet,
};
pub use scenario::{time_grid, GridSpacing, LimitRegime, Scenario, VeCurve};
pub use document::{ComparisonDoc, DocumentError, ResolvedScenario, ScenarioDocument, SCHEMA_VERSION};

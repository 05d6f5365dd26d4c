//! Minimum detectable VE and expected precision for cohort, case-control and
//! test-negative designs.
//!
//! Tests are two-sided at level `α`. Confounding is handled by inflating the
//! variance of every estimate by `1/(1-ρ²)`.

mod ci;
mod joint;
mod mdve;
mod multinomial;
mod plan;
mod power;
mod precision;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::measures::{VeError, VeMeasureKind};
use crate::model::ModelError;

pub use ci::{ci_for_ratio, RatioCounts, RatioInterval};
pub use joint::{CaseShares, ScenarioJoint};
pub use mdve::{min_detectable_ve, power_curve, MdveResult, PowerSample};
pub use multinomial::sample_multinomial;
pub use plan::{CaseRestriction, CohortRestriction, Restriction, StudyPlan, Target};
pub use power::PowerModel;
pub use precision::{PrecisionResult, DEGENERATE_WARNING_SHARE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DesignKind {
    CohortCrr,
    CohortIrr,
    CaseControlOr,
    TndInclusiveOr,
}

impl DesignKind {
    pub fn is_cohort(self) -> bool {
        matches!(self, DesignKind::CohortCrr | DesignKind::CohortIrr)
    }

    /// The VE measure the design's estimator targets.
    pub fn target_kind(self) -> VeMeasureKind {
        match self {
            DesignKind::CohortCrr | DesignKind::TndInclusiveOr => VeMeasureKind::Crr,
            DesignKind::CohortIrr => VeMeasureKind::Irr,
            DesignKind::CaseControlOr => VeMeasureKind::Or,
        }
    }

    /// The ratio the test and interval are built on.
    pub fn ratio_kind(self) -> VeMeasureKind {
        match self {
            DesignKind::CohortCrr => VeMeasureKind::Crr,
            DesignKind::CohortIrr => VeMeasureKind::Irr,
            DesignKind::CaseControlOr | DesignKind::TndInclusiveOr => VeMeasureKind::Or,
        }
    }
}

fn default_rho() -> f64 {
    0.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignSpec {
    pub design: DesignKind,
    /// Total cohort size.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<u64>,
    /// Total cases `x`.
    #[serde(default, alias = "x", skip_serializing_if = "Option::is_none")]
    pub cases: Option<u64>,
    /// Controls per case `r`.
    #[serde(default, alias = "r", skip_serializing_if = "Option::is_none")]
    pub controls_per_case: Option<f64>,
    pub alpha: f64,
    pub power: f64,
    #[serde(default = "default_rho")]
    pub confounder_rho: f64,
}

impl DesignSpec {
    pub fn validate(&self) -> Result<(), SampleSizeError> {
        let bad = |m: String| Err(SampleSizeError::InvalidDesign(m));
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        if !(self.power > 0.0 && self.power < 1.0) {
            return bad(format!("power must lie in (0, 1), got {}", self.power));
        }
        if !(self.confounder_rho >= 0.0 && self.confounder_rho < 1.0) {
            return bad(format!("confounder_rho must lie in [0, 1), got {}", self.confounder_rho));
        }
        if self.design.is_cohort() {
            match self.n {
                Some(n) if n >= 2 => {}
                _ => return bad("cohort designs need n >= 2".into()),
            }
        } else {
            match self.cases {
                Some(x) if x >= 1 => {}
                _ => return bad("case-based designs need cases >= 1".into()),
            }
            match self.controls_per_case {
                Some(r) if r.is_finite() && r > 0.0 => {}
                _ => return bad("case-based designs need controls_per_case > 0".into()),
            }
        }
        Ok(())
    }

    /// `1/(1-ρ²)`
    pub fn variance_inflation(&self) -> f64 {
        1.0 / (1.0 - self.confounder_rho * self.confounder_rho)
    }

    /// Controls drawn in a case-based design, `round(r·x)`.
    pub fn n_controls(&self) -> u64 {
        match (self.cases, self.controls_per_case) {
            (Some(x), Some(r)) => (r * x as f64).round() as u64,
            _ => 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SampleSizeError {
    #[error("invalid design: {0}")]
    InvalidDesign(String),
    #[error("degenerate design: {0}")]
    Degenerate(String),
    #[error("target power unattainable; maximum attainable power is {max_power}")]
    Unattainable { max_power: f64 },
    #[error("all {n_sim} replicates were degenerate")]
    NoInformation { n_sim: usize },
    #[error(transparent)]
    Ve(#[from] VeError),
}

impl From<ModelError> for SampleSizeError {
    fn from(e: ModelError) -> Self {
        SampleSizeError::Ve(VeError::Model(e))
    }
}

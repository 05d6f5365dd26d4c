use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::SampleSizeError;

/// Counts behind a ratio estimate. Person-time and denominators may be real
/// valued so expected cells can be used as well as sampled ones.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "ratio", rename_all = "snake_case")]
pub enum RatioCounts {
    /// Exposed cases `a`, unexposed cases `b`, exposed controls `c`,
    /// unexposed controls `d`.
    Odds { a: f64, b: f64, c: f64, d: f64 },
    /// `a` of `n1` exposed and `c` of `n0` unexposed.
    Risk { a: f64, n1: f64, c: f64, n0: f64 },
    /// `a` events over `pt1` exposed person-time, `c` over `pt0`.
    Rate { a: f64, pt1: f64, c: f64, pt0: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatioInterval {
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
    /// Standard error of the log ratio after variance inflation.
    pub log_se: f64,
}

impl RatioInterval {
    /// The same interval as VE `1 - ratio`, `(estimate, lower, upper)`.
    pub fn to_ve(&self) -> (f64, f64, f64) {
        (1.0 - self.estimate, 1.0 - self.upper, 1.0 - self.lower)
    }

    pub fn log_width(&self) -> f64 {
        self.upper.ln() - self.lower.ln()
    }
}

pub(crate) fn z_two_sided(alpha: f64) -> f64 {
    Normal::standard().inverse_cdf(1.0 - alpha / 2.0)
}

/// Log-scale normal interval `exp(log θ̂ ± z_{1-α/2} · SE / √(1-ρ²))`.
pub fn ci_for_ratio(counts: RatioCounts, alpha: f64, rho: f64) -> Result<RatioInterval, SampleSizeError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(SampleSizeError::InvalidDesign(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if !(0.0..1.0).contains(&rho) {
        return Err(SampleSizeError::InvalidDesign(format!("rho must lie in [0, 1), got {rho}")));
    }
    let cells = match counts {
        RatioCounts::Odds { a, b, c, d } => [a, b, c, d],
        RatioCounts::Risk { a, n1, c, n0 } => [a, n1, c, n0],
        RatioCounts::Rate { a, pt1, c, pt0 } => [a, pt1, c, pt0],
    };
    if cells.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
        return Err(SampleSizeError::Degenerate(format!("zero or invalid cell in {counts:?}")));
    }
    let (estimate, var) = match counts {
        RatioCounts::Odds { a, b, c, d } => ((a * d) / (b * c), 1.0 / a + 1.0 / b + 1.0 / c + 1.0 / d),
        RatioCounts::Risk { a, n1, c, n0 } => ((a / n1) / (c / n0), 1.0 / a - 1.0 / n1 + 1.0 / c - 1.0 / n0),
        RatioCounts::Rate { a, pt1, c, pt0 } => ((a / pt1) / (c / pt0), 1.0 / a + 1.0 / c),
    };
    let log_se = (var.max(0.0) / (1.0 - rho * rho)).sqrt();
    let half = z_two_sided(alpha) * log_se;
    let centre = estimate.ln();
    Ok(RatioInterval { estimate, lower: (centre - half).exp(), upper: (centre + half).exp(), log_se })
}

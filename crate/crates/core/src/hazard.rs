//! Relative VE across two variants when the forces of infection vary in time
//! but keep a constant ratio `λ_i(s) = f λ_j(s)`.
//!
//! The hazard of variant `j` is piecewise constant, so every integral
//! `∫ λ_j(s) S(s) ds` is evaluated in closed form segment by segment.

use serde::{Deserialize, Serialize};

use crate::measures::{VeError, Vanished};

/// Piecewise-constant hazard: `rates[k]` applies on `[starts[k], starts[k+1])`,
/// the last rate extends to infinity. `starts[0]` is 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseHazard {
    starts: Vec<f64>,
    rates: Vec<f64>,
}

impl PiecewiseHazard {
    pub fn new(starts: Vec<f64>, rates: Vec<f64>) -> Result<Self, VeError> {
        if starts.is_empty() || starts.len() != rates.len() {
            return Err(VeError::InvalidInput(
                "hazard needs one rate per segment start and at least one segment".into(),
            ));
        }
        if starts[0] != 0.0 {
            return Err(VeError::InvalidInput("first hazard segment must start at 0".into()));
        }
        if starts.windows(2).any(|w| !(w[1] > w[0]) || !w[1].is_finite()) {
            return Err(VeError::InvalidInput("segment starts must be strictly increasing".into()));
        }
        if let Some(r) = rates.iter().find(|r| !r.is_finite() || **r < 0.0) {
            return Err(VeError::InvalidInput(format!("hazard segments must be nonnegative, got {r}")));
        }
        Ok(Self { starts, rates })
    }

    pub fn constant(rate: f64) -> Result<Self, VeError> {
        Self::new(vec![0.0], vec![rate])
    }

    /// Hazard value at time `s`.
    pub fn rate_at(&self, s: f64) -> f64 {
        let k = self.starts.partition_point(|&b| b <= s).saturating_sub(1);
        self.rates[k]
    }

    /// `(start, end, rate)` for the segments intersecting `[0, t]`.
    fn segments(&self, t: f64) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        (0..self.starts.len()).filter_map(move |k| {
            let a = self.starts[k];
            let b = self.starts.get(k + 1).copied().unwrap_or(f64::INFINITY).min(t);
            (a < t).then_some((a, b, self.rates[k]))
        })
    }

    /// `∫_0^t λ(s) exp(-c ∫_0^s λ) ds`, exact for piecewise-constant `λ`.
    pub fn weighted_exposure(&self, c: f64, t: f64) -> f64 {
        let mut survival = 1.0;
        let mut acc = 0.0;
        for (a, b, rate) in self.segments(t) {
            let mass = rate * (b - a);
            if c > 0.0 {
                acc += survival * crate::numerics::one_minus_exp_neg(c * mass) / c;
                survival *= (-c * mass).exp();
            } else {
                acc += survival * mass;
            }
        }
        acc
    }
}

/// Leaky protection of one arm against variants `i` and `j`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoVariantProtection {
    pub theta_i: f64,
    pub theta_j: f64,
}

impl TwoVariantProtection {
    pub const PLACEBO: TwoVariantProtection = TwoVariantProtection { theta_i: 1.0, theta_j: 1.0 };

    /// `(P(C=i), P(C=j))` at `t` for the arm.
    fn case_probabilities(self, hazard: &PiecewiseHazard, ratio: f64, t: f64) -> (f64, f64) {
        let c = self.theta_i * ratio + self.theta_j;
        let exposure = hazard.weighted_exposure(c, t);
        (self.theta_i * ratio * exposure, self.theta_j * exposure)
    }

    fn validate(self) -> Result<(), VeError> {
        for th in [self.theta_i, self.theta_j] {
            if !(0.0..=1.0).contains(&th) {
                return Err(VeError::InvalidInput(format!("theta must lie in [0, 1], got {th}")));
            }
        }
        Ok(())
    }
}

/// Relative VE of the vaccine arm across variants `i` and `j` at time `t`
/// when `λ_i(s) = ratio · λ_j(s)` and `λ_j` is `hazard_j`.
pub fn relative_ve_varying_hazard(
    hazard_j: &PiecewiseHazard,
    ratio: f64,
    vaccine: TwoVariantProtection,
    reference: TwoVariantProtection,
    t: f64,
) -> Result<f64, VeError> {
    if !(ratio.is_finite() && ratio > 0.0) {
        return Err(VeError::InvalidInput(format!("hazard ratio must be positive, got {ratio}")));
    }
    if !(t.is_finite() && t > 0.0) {
        return Err(VeError::InvalidInput(format!("horizon must be positive, got {t}")));
    }
    vaccine.validate()?;
    reference.validate()?;
    let (pi_m, pj_m) = vaccine.case_probabilities(hazard_j, ratio, t);
    let (pi_r, pj_r) = reference.case_probabilities(hazard_j, ratio, t);
    if pi_r <= 0.0 || pj_r <= 0.0 {
        return Err(VeError::Undefined(Vanished::ReferenceCase));
    }
    if pj_m <= 0.0 {
        return Err(VeError::Undefined(Vanished::OtherVariantCase));
    }
    Ok(1.0 - (pi_m / pj_m) / (pi_r / pj_r))
}

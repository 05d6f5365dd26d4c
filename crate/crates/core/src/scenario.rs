//! A validated study scenario: rates, one placebo arm and `M` vaccine arms.
//!
//! This is where comparisons are resolved against concrete arms, closed forms
//! are chosen when one exists, and curves and limits are evaluated.

use serde::{Deserialize, Serialize};

use crate::measures::{
    aon_relative_ve_closed_form, aon_ve_closed_form, leaky_relative_vaccines_closed_form,
    leaky_relative_variants_closed_form, leaky_ve_closed_form, relative_ve_two_variants,
    relative_ve_two_vaccines, ve_from_components, AonRelative, Comparison, VeError, VeMeasureKind,
    VeNumber, VeValue, Vanished,
};
use crate::model::{
    ArmProfile, CohortComponents, EpidemicRates, LeakyProfile, ModelError, StudyHorizon,
};

/// Absolute spread below which a curve is flagged time-invariant.
pub const DEFAULT_INVARIANCE_THRESHOLD: f64 = 1e-9;

/// Rate multiplier used to approach `Λt → 0` numerically for all-or-none arms.
pub const SMALL_LIMIT_RATE_SCALE: f64 = 1e-9;

/// Relative tolerance under which two overall effectivenesses count as equal.
const OVERALL_TIE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Scenario {
    rates: EpidemicRates,
    arms: Vec<ArmProfile>,
    horizon: StudyHorizon,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LimitRegime {
    /// `Λt → 0`
    SmallLambdaT,
    /// `Λt → ∞`
    LargeLambdaT,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VeCurve {
    pub kind: VeMeasureKind,
    pub comparison: Comparison,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub time_invariant: bool,
}

impl VeCurve {
    pub fn spread(&self) -> f64 {
        let max = self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = self.values.iter().cloned().fold(f64::INFINITY, f64::min);
        max - min
    }
}

/// Validates a time grid: nonempty, finite, positive and strictly increasing.
pub fn validate_grid(times: &[f64]) -> Result<(), VeError> {
    if times.is_empty() {
        return Err(VeError::InvalidGrid("grid is empty".into()));
    }
    if let Some(t) = times.iter().find(|t| !(t.is_finite() && **t > 0.0)) {
        return Err(VeError::InvalidGrid(format!("times must be finite and positive, got {t}")));
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(VeError::InvalidGrid("times must be strictly increasing".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridSpacing {
    Linear,
    Log,
}

/// `points` times from `start` to `stop` inclusive, evenly spaced on a linear
/// or logarithmic scale.
pub fn time_grid(start: f64, stop: f64, points: usize, spacing: GridSpacing) -> Result<Vec<f64>, VeError> {
    if points < 2 {
        return Err(VeError::InvalidGrid(format!("a grid needs at least 2 points, got {points}")));
    }
    if !(start.is_finite() && stop.is_finite() && start > 0.0 && stop > start) {
        return Err(VeError::InvalidGrid(format!("need 0 < start < stop, got start={start}, stop={stop}")));
    }
    let last = (points - 1) as f64;
    let grid: Vec<f64> = (0..points)
        .map(|k| {
            if k == points - 1 {
                return stop;
            }
            let f = k as f64 / last;
            match spacing {
                GridSpacing::Linear => start + f * (stop - start),
                GridSpacing::Log => (start.ln() + f * (stop.ln() - start.ln())).exp(),
            }
        })
        .collect();
    validate_grid(&grid)?;
    Ok(grid)
}

impl Scenario {
    /// `vaccines` become arms `1..=M`; arm 0 is placebo.
    pub fn new(
        rates: EpidemicRates,
        vaccines: Vec<ArmProfile>,
        horizon: StudyHorizon,
    ) -> Result<Self, ModelError> {
        let mut arms = Vec::with_capacity(vaccines.len() + 1);
        arms.push(ArmProfile::Placebo);
        for v in vaccines {
            let found = match &v {
                ArmProfile::Placebo => rates.n_variants(),
                ArmProfile::Leaky(p) => p.n_variants(),
                ArmProfile::AllOrNone(p) => p.n_variants(),
            };
            if found != rates.n_variants() {
                return Err(ModelError::Dimension { expected: rates.n_variants(), found });
            }
            arms.push(v);
        }
        Ok(Self { rates, arms, horizon })
    }

    pub fn rates(&self) -> &EpidemicRates {
        &self.rates
    }

    pub fn horizon(&self) -> StudyHorizon {
        self.horizon
    }

    pub fn arms(&self) -> &[ArmProfile] {
        &self.arms
    }

    pub fn arm(&self, index: usize) -> Result<&ArmProfile, VeError> {
        self.arms.get(index).ok_or_else(|| {
            VeError::InvalidInput(format!("arm {index} out of range for {} arms", self.arms.len()))
        })
    }

    pub fn n_arms(&self) -> usize {
        self.arms.len()
    }

    pub fn n_variants(&self) -> usize {
        self.rates.n_variants()
    }

    /// Same scenario with a different horizon.
    pub fn at_horizon(&self, horizon: StudyHorizon) -> Self {
        Self { horizon, ..self.clone() }
    }

    pub fn components(&self, arm: usize, t: f64) -> Result<CohortComponents, VeError> {
        Ok(self.arm(arm)?.components(&self.rates, StudyHorizon::new(t)?)?)
    }

    /// Components of every arm at the scenario horizon, placebo first.
    pub fn all_components(&self) -> Result<Vec<CohortComponents>, VeError> {
        (0..self.arms.len()).map(|a| self.components(a, self.horizon.t())).collect()
    }

    pub fn check_comparison(&self, comparison: &Comparison) -> Result<(), VeError> {
        let nv = self.n_variants();
        let variant_ok = |v: usize| {
            if v < nv {
                Ok(())
            } else {
                Err(VeError::InvalidInput(format!("variant {v} out of range for {nv} variants")))
            }
        };
        let vaccine_ok = |a: usize| {
            if a >= 1 && a < self.arms.len() {
                Ok(())
            } else {
                Err(VeError::InvalidInput(format!(
                    "vaccine arm {a} out of range 1..={}",
                    self.arms.len() - 1
                )))
            }
        };
        match *comparison {
            Comparison::VariantSpecific { variant, vaccine } => {
                variant_ok(variant)?;
                vaccine_ok(vaccine)
            }
            Comparison::RelativeVariants { variant, other, vaccine } => {
                variant_ok(variant)?;
                variant_ok(other)?;
                vaccine_ok(vaccine)
            }
            Comparison::RelativeVaccines { variant, vaccine, reference } => {
                variant_ok(variant)?;
                vaccine_ok(vaccine)?;
                // placebo is accepted as reference; it reduces to variant-specific VE
                self.arm(reference).map(|_| ())
            }
        }
    }

    /// VE through the generic component formulas.
    pub fn ve_via_components(
        &self,
        kind: VeMeasureKind,
        comparison: &Comparison,
        t: f64,
    ) -> Result<f64, VeError> {
        self.check_comparison(comparison)?;
        match *comparison {
            Comparison::VariantSpecific { variant, vaccine } => {
                ve_from_components(kind, &self.components(vaccine, t)?, &self.components(0, t)?, variant)
            }
            Comparison::RelativeVariants { variant, other, vaccine } => relative_ve_two_variants(
                kind,
                &self.components(vaccine, t)?,
                &self.components(0, t)?,
                variant,
                other,
            ),
            Comparison::RelativeVaccines { variant, vaccine, reference } => relative_ve_two_vaccines(
                kind,
                &self.components(vaccine, t)?,
                &self.components(reference, t)?,
                variant,
            ),
        }
    }

    /// VE through the specialised closed forms, or `None` when the arms mix
    /// vaccine modes and no closed form exists.
    pub fn ve_closed_form(
        &self,
        kind: VeMeasureKind,
        comparison: &Comparison,
        t: f64,
    ) -> Result<Option<f64>, VeError> {
        self.check_comparison(comparison)?;
        let rates = &self.rates;
        let value = match *comparison {
            Comparison::VariantSpecific { variant, vaccine } => match self.arm(vaccine)? {
                ArmProfile::Placebo => Some(0.0),
                ArmProfile::Leaky(p) => Some(leaky_ve_closed_form(kind, rates, p, variant, t)?),
                ArmProfile::AllOrNone(p) => Some(aon_ve_closed_form(kind, rates, p, variant, t)?),
            },
            Comparison::RelativeVariants { variant, other, vaccine } => match self.arm(vaccine)? {
                ArmProfile::Placebo => Some(0.0),
                ArmProfile::Leaky(p) => Some(leaky_relative_variants_closed_form(p, variant, other)?),
                ArmProfile::AllOrNone(p) => Some(aon_relative_ve_closed_form(
                    kind,
                    AonRelative::Variants { profile: p, variant, other },
                    rates,
                    t,
                )?),
            },
            Comparison::RelativeVaccines { variant, vaccine, reference } => {
                match (self.arm(vaccine)?, self.arm(reference)?) {
                    (m, n) if m.is_leaky_like() && n.is_leaky_like() => {
                        let (pm, pn) = (self.leaky_view(vaccine), self.leaky_view(reference));
                        Some(leaky_relative_vaccines_closed_form(kind, rates, &pm, &pn, variant, t)?)
                    }
                    (ArmProfile::AllOrNone(pm), ArmProfile::AllOrNone(pn)) => {
                        Some(aon_relative_ve_closed_form(
                            kind,
                            AonRelative::Vaccines { arm_m: pm, arm_n: pn, variant },
                            rates,
                            t,
                        )?)
                    }
                    (ArmProfile::AllOrNone(pm), ArmProfile::Placebo) => {
                        Some(aon_ve_closed_form(kind, rates, pm, variant, t)?)
                    }
                    _ => None,
                }
            }
        };
        Ok(value)
    }

    /// VE at time `t`, by closed form where one exists.
    pub fn ve_at(&self, kind: VeMeasureKind, comparison: &Comparison, t: f64) -> Result<f64, VeError> {
        StudyHorizon::new(t)?;
        match self.ve_closed_form(kind, comparison, t)? {
            Some(v) => Ok(v),
            None => self.ve_via_components(kind, comparison, t),
        }
    }

    /// VE at the scenario horizon.
    pub fn ve(&self, kind: VeMeasureKind, comparison: &Comparison) -> Result<VeValue, VeError> {
        let v = self.ve_at(kind, comparison, self.horizon.t())?;
        Ok(VeValue { value: VeNumber::Finite(v), kind, comparison: *comparison })
    }

    /// Pointwise curve over `times`; flagged time-invariant when the spread is
    /// below `threshold`.
    pub fn curve(
        &self,
        kind: VeMeasureKind,
        comparison: &Comparison,
        times: &[f64],
        threshold: f64,
    ) -> Result<VeCurve, VeError> {
        validate_grid(times)?;
        use rayon::prelude::*;
        let values = times
            .par_iter()
            .map(|&t| self.ve_at(kind, comparison, t))
            .collect::<Result<Vec<f64>, VeError>>()?;
        let mut curve = VeCurve {
            kind,
            comparison: *comparison,
            times: times.to_vec(),
            values,
            time_invariant: false,
        };
        curve.time_invariant = curve.spread() < threshold;
        Ok(curve)
    }

    /// Placebo viewed as an inert leaky vaccine.
    fn leaky_view(&self, arm: usize) -> LeakyProfile {
        match &self.arms[arm] {
            ArmProfile::Leaky(p) => p.clone(),
            _ => LeakyProfile::inert(self.n_variants()),
        }
    }

    /// Analytic `Λt → 0` and `Λt → ∞` limits for leaky arms. For all-or-none
    /// arms only the small-`Λt` side is offered, evaluated numerically with
    /// every rate scaled by [`SMALL_LIMIT_RATE_SCALE`].
    pub fn limit(
        &self,
        kind: VeMeasureKind,
        comparison: &Comparison,
        regime: LimitRegime,
    ) -> Result<VeNumber, VeError> {
        self.check_comparison(comparison)?;
        let arms_involved: Vec<usize> = match *comparison {
            Comparison::VariantSpecific { vaccine, .. } => vec![vaccine],
            Comparison::RelativeVariants { vaccine, .. } => vec![vaccine],
            Comparison::RelativeVaccines { vaccine, reference, .. } => vec![vaccine, reference],
        };
        let all_leaky = arms_involved.iter().all(|&a| self.arms[a].is_leaky_like());
        if !all_leaky {
            return match regime {
                LimitRegime::SmallLambdaT => {
                    let scaled = Scenario {
                        rates: self.rates.scaled(SMALL_LIMIT_RATE_SCALE)?,
                        ..self.clone()
                    };
                    Ok(VeNumber::Finite(scaled.ve_at(kind, comparison, self.horizon.t())?))
                }
                LimitRegime::LargeLambdaT => Err(VeError::NotAvailable(
                    "no closed-form large-Λt limit for all-or-none vaccines".into(),
                )),
            };
        }
        let rates = &self.rates;
        let finite = |v: f64| Ok(VeNumber::Finite(v));
        match *comparison {
            Comparison::VariantSpecific { variant, vaccine } => {
                let p = self.leaky_view(vaccine);
                let theta = p.theta(variant);
                let overall = p.overall(rates)?;
                match (regime, kind) {
                    (LimitRegime::SmallLambdaT, _) | (LimitRegime::LargeLambdaT, VeMeasureKind::Irr) => {
                        finite(1.0 - theta)
                    }
                    (LimitRegime::LargeLambdaT, VeMeasureKind::Crr) => {
                        if overall == 0.0 {
                            finite(1.0)
                        } else {
                            finite(1.0 - theta / overall)
                        }
                    }
                    (LimitRegime::LargeLambdaT, VeMeasureKind::Or) => {
                        if overall < 1.0 {
                            finite(1.0)
                        } else {
                            finite(1.0 - theta)
                        }
                    }
                }
            }
            Comparison::RelativeVariants { variant, other, vaccine } => {
                finite(leaky_relative_variants_closed_form(&self.leaky_view(vaccine), variant, other)?)
            }
            Comparison::RelativeVaccines { variant, vaccine, reference } => {
                let (pm, pn) = (self.leaky_view(vaccine), self.leaky_view(reference));
                let (tm, tn) = (pm.theta(variant), pn.theta(variant));
                if tn == 0.0 {
                    return Err(VeError::Undefined(Vanished::ReferenceCase));
                }
                if tm == 0.0 {
                    return finite(1.0);
                }
                let base = tm / tn;
                let (om, on) = (pm.overall(rates)?, pn.overall(rates)?);
                match (regime, kind) {
                    (LimitRegime::SmallLambdaT, _) | (LimitRegime::LargeLambdaT, VeMeasureKind::Irr) => {
                        finite(1.0 - base)
                    }
                    (LimitRegime::LargeLambdaT, VeMeasureKind::Crr) => finite(1.0 - base * on / om),
                    (LimitRegime::LargeLambdaT, VeMeasureKind::Or) => {
                        if (om - on).abs() <= OVERALL_TIE * om.max(on) {
                            finite(1.0 - base)
                        } else if om < on {
                            finite(1.0)
                        } else {
                            Ok(VeNumber::NegativeInfinity)
                        }
                    }
                }
            }
        }
    }
}

//! Expected counts of a test-negative design and the VE it estimates.
//!
//! Cases are care-seeking subjects infected by a target variant; controls are
//! care-seeking subjects presenting with an off-target infection `Ω`, which
//! recurs at a constant rate and never confers immunity. Counts are real
//! valued and a subject may appear as a control more than once.

use serde::{Deserialize, Serialize};

use crate::measures::{Comparison, VeError, VeMeasureKind, VeNumber, VeValue, Vanished};
use crate::model::{CohortComponents, ModelError, StudyHorizon, MIXTURE_TOLERANCE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TndSampling {
    /// Controls counted over the whole window.
    Inclusive,
    /// Controls counted only while at risk of the target pathogen.
    Density,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TndParams {
    pub population: f64,
    pub rate_offtarget: f64,
    /// `P(S=1 | C=i)` per variant.
    pub p_symptom_case: Vec<f64>,
    /// `P(S=1 | C=Ω)`.
    pub p_symptom_offtarget: f64,
    /// `P(Z=1 | S=1, V=m)` per arm, placebo first.
    pub p_seek_care: Vec<f64>,
    /// `P(V=m)` per arm, placebo first.
    pub p_vaccinated: Vec<f64>,
    pub sampling: TndSampling,
}

fn unit_interval(name: &str, p: f64, allow_zero: bool) -> Result<(), ModelError> {
    let ok = p.is_finite() && p <= 1.0 && if allow_zero { p >= 0.0 } else { p > 0.0 };
    if ok {
        Ok(())
    } else {
        let range = if allow_zero { "[0, 1]" } else { "(0, 1]" };
        Err(ModelError::InvalidInput(format!("{name} must lie in {range}, got {p}")))
    }
}

impl TndParams {
    /// Checks ranges and that the parameters cover `n_arms` arms and
    /// `n_variants` variants.
    pub fn validate(&self, n_variants: usize, n_arms: usize) -> Result<(), ModelError> {
        if !(self.population.is_finite() && self.population > 0.0) {
            return Err(ModelError::InvalidInput(format!(
                "population must be positive, got {}",
                self.population
            )));
        }
        if !(self.rate_offtarget.is_finite() && self.rate_offtarget > 0.0) {
            return Err(ModelError::InvalidInput(format!(
                "off-target rate must be positive, got {}",
                self.rate_offtarget
            )));
        }
        if self.p_symptom_case.len() != n_variants {
            return Err(ModelError::Dimension { expected: n_variants, found: self.p_symptom_case.len() });
        }
        for v in [&self.p_seek_care, &self.p_vaccinated] {
            if v.len() != n_arms {
                return Err(ModelError::Dimension { expected: n_arms, found: v.len() });
            }
        }
        // a variant that never causes symptoms simply yields no cases
        for &p in &self.p_symptom_case {
            unit_interval("p_symptom_case", p, true)?;
        }
        unit_interval("p_symptom_offtarget", self.p_symptom_offtarget, false)?;
        for &p in &self.p_seek_care {
            unit_interval("p_seek_care", p, false)?;
        }
        for &p in &self.p_vaccinated {
            unit_interval("p_vaccinated", p, true)?;
        }
        let total: f64 = self.p_vaccinated.iter().sum();
        if (total - 1.0).abs() > MIXTURE_TOLERANCE {
            return Err(ModelError::InvalidInput(format!(
                "vaccination distribution sums to {total}, expected 1"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TndExpectedCounts {
    /// `E(N_{i,m})`, indexed `[variant][arm]`.
    pub cases: Vec<Vec<f64>>,
    /// `E(N_{Ω,m})` per arm.
    pub controls: Vec<f64>,
    pub sampling: TndSampling,
}

fn check_arms(params: &TndParams, components: &[CohortComponents]) -> Result<usize, ModelError> {
    let n_variants = components.first().map(|c| c.n_variants()).unwrap_or(params.p_symptom_case.len());
    params.validate(n_variants, components.len())?;
    if let Some(c) = components.iter().find(|c| c.n_variants() != n_variants) {
        return Err(ModelError::Dimension { expected: n_variants, found: c.n_variants() });
    }
    Ok(n_variants)
}

/// `E(N_{i,m}) = n · P(Z|S,V=m) · P(S|C=i) · P(C=i|V=m) · P(V=m)`.
pub fn expected_cases(
    params: &TndParams,
    components: &[CohortComponents],
) -> Result<Vec<Vec<f64>>, ModelError> {
    let n_variants = check_arms(params, components)?;
    Ok((0..n_variants)
        .map(|i| {
            components
                .iter()
                .enumerate()
                .map(|(m, c)| {
                    params.population
                        * params.p_seek_care[m]
                        * params.p_symptom_case[i]
                        * c.p_case[i]
                        * params.p_vaccinated[m]
                })
                .collect()
        })
        .collect())
}

/// Off-target presentations per arm over `t` (inclusive) or over the expected
/// time at risk `E(Y|V=m)` (density).
pub fn expected_controls(
    params: &TndParams,
    components: &[CohortComponents],
    horizon: StudyHorizon,
) -> Result<Vec<f64>, ModelError> {
    check_arms(params, components)?;
    Ok(components
        .iter()
        .enumerate()
        .map(|(m, c)| {
            let exposure = match params.sampling {
                TndSampling::Inclusive => horizon.t(),
                TndSampling::Density => c.expected_person_time,
            };
            params.population
                * exposure
                * params.p_seek_care[m]
                * params.p_symptom_offtarget
                * params.p_vaccinated[m]
                * params.rate_offtarget
        })
        .collect())
}

pub fn expected_counts(
    params: &TndParams,
    components: &[CohortComponents],
    horizon: StudyHorizon,
) -> Result<TndExpectedCounts, ModelError> {
    Ok(TndExpectedCounts {
        cases: expected_cases(params, components)?,
        controls: expected_controls(params, components, horizon)?,
        sampling: params.sampling,
    })
}

impl TndExpectedCounts {
    /// A case cell used in a numerator, where zero is allowed.
    fn case_count(&self, variant: usize, arm: usize) -> Result<f64, VeError> {
        let n_arms = self.controls.len();
        let row = self.cases.get(variant).ok_or_else(|| {
            VeError::InvalidInput(format!("variant {variant} out of range for {} variants", self.cases.len()))
        })?;
        let v = *row
            .get(arm)
            .ok_or_else(|| VeError::InvalidInput(format!("arm {arm} out of range for {n_arms} arms")))?;
        Ok(v)
    }

    fn case(&self, variant: usize, arm: usize) -> Result<f64, VeError> {
        positive(self.case_count(variant, arm)?)
    }

    fn control(&self, arm: usize) -> Result<f64, VeError> {
        let v = *self.controls.get(arm).ok_or_else(|| {
            VeError::InvalidInput(format!("arm {arm} out of range for {} arms", self.controls.len()))
        })?;
        positive(v)
    }
}

fn positive(v: f64) -> Result<f64, VeError> {
    if v > 0.0 {
        Ok(v)
    } else {
        Err(VeError::Undefined(Vanished::ExpectedCount))
    }
}

/// `1 - (N_{i,m}/N_{i,0}) / (N_{Ω,m}/N_{Ω,0})`.
pub fn tnd_ve(counts: &TndExpectedCounts, variant: usize, vaccine: usize) -> Result<f64, VeError> {
    tnd_relative_vaccines(counts, variant, vaccine, 0)
}

/// `1 - (N_{i,m}/N_{i,0}) / (N_{j,m}/N_{j,0})`; controls cancel. A zero
/// numerator cell gives VE = 1, as for the cohort measures.
pub fn tnd_relative_variants(
    counts: &TndExpectedCounts,
    variant: usize,
    other: usize,
    vaccine: usize,
) -> Result<f64, VeError> {
    let ri = counts.case_count(variant, vaccine)? / counts.case(variant, 0)?;
    let rj = counts.case(other, vaccine)? / counts.case(other, 0)?;
    Ok(1.0 - ri / rj)
}

/// `1 - (N_{i,m}/N_{i,n}) / (N_{Ω,m}/N_{Ω,n})`.
pub fn tnd_relative_vaccines(
    counts: &TndExpectedCounts,
    variant: usize,
    vaccine: usize,
    reference: usize,
) -> Result<f64, VeError> {
    let cases = counts.case_count(variant, vaccine)? / counts.case(variant, reference)?;
    let controls = counts.control(vaccine)? / counts.control(reference)?;
    Ok(1.0 - cases / controls)
}

/// The cohort measure the TND estimator reproduces under `sampling`.
pub fn equivalent_cohort_kind(sampling: TndSampling) -> VeMeasureKind {
    match sampling {
        TndSampling::Inclusive => VeMeasureKind::Crr,
        TndSampling::Density => VeMeasureKind::Irr,
    }
}

/// TND VE for any comparison, labelled with the equivalent cohort kind.
pub fn tnd_ve_for(counts: &TndExpectedCounts, comparison: &Comparison) -> Result<VeValue, VeError> {
    let v = match *comparison {
        Comparison::VariantSpecific { variant, vaccine } => tnd_ve(counts, variant, vaccine)?,
        Comparison::RelativeVariants { variant, other, vaccine } => {
            tnd_relative_variants(counts, variant, other, vaccine)?
        }
        Comparison::RelativeVaccines { variant, vaccine, reference } => {
            tnd_relative_vaccines(counts, variant, vaccine, reference)?
        }
    };
    Ok(VeValue {
        value: VeNumber::Finite(v),
        kind: equivalent_cohort_kind(counts.sampling),
        comparison: *comparison,
    })
}

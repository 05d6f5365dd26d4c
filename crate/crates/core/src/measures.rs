//! Vaccine-effectiveness measures.
//!
//! Three ratio bases (incidence rate, cumulative risk, exposure odds) applied
//! to three comparisons (vaccine vs placebo for one variant, one vaccine
//! across two variants, two vaccines for one variant). Two independent
//! routes are provided: generic formulas on [`CohortComponents`] and
//! closed forms specialised to leaky and all-or-none vaccines. They must
//! agree; the tests and the acceptance suite hold them to `1e-12`.

use std::fmt;

use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

use crate::model::{
    AllOrNoneProfile, CohortComponents, EpidemicRates, LeakyProfile, ModelError, VariantSet,
};
use crate::numerics::{exposure_fraction, growth_fraction_ratio};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VeMeasureKind {
    Irr,
    Crr,
    Or,
}

impl VeMeasureKind {
    pub const ALL: [VeMeasureKind; 3] = [VeMeasureKind::Irr, VeMeasureKind::Crr, VeMeasureKind::Or];

    pub fn as_str(self) -> &'static str {
        match self {
            VeMeasureKind::Irr => "irr",
            VeMeasureKind::Crr => "crr",
            VeMeasureKind::Or => "or",
        }
    }
}

impl fmt::Display for VeMeasureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for VeMeasureKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "irr" => Ok(Self::Irr),
            "crr" => Ok(Self::Crr),
            "or" => Ok(Self::Or),
            other => Err(format!("unknown measure '{other}', expected irr, crr or or")),
        }
    }
}

/// What is compared. Arms are indexed with 0 for placebo and `1..=M` for the
/// vaccines; variants are 0-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Comparison {
    /// Vaccine arm against placebo for one variant.
    VariantSpecific { variant: usize, vaccine: usize },
    /// One vaccine, variant `variant` relative to variant `other`.
    RelativeVariants { variant: usize, other: usize, vaccine: usize },
    /// Vaccine `vaccine` relative to vaccine `reference` for one variant.
    RelativeVaccines { variant: usize, vaccine: usize, reference: usize },
}

impl Comparison {
    pub fn label(&self) -> String {
        match *self {
            Comparison::VariantSpecific { variant, vaccine } => {
                format!("variant_specific(i={variant},m={vaccine})")
            }
            Comparison::RelativeVariants { variant, other, vaccine } => {
                format!("relative_variants(i={variant},j={other},m={vaccine})")
            }
            Comparison::RelativeVaccines { variant, vaccine, reference } => {
                format!("relative_vaccines(i={variant},m={vaccine},n={reference})")
            }
        }
    }
}

/// A VE value, or the divergent limit `-∞` kept out of arithmetic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum VeNumber {
    Finite(f64),
    NegativeInfinity,
}

impl VeNumber {
    pub fn finite(self) -> Option<f64> {
        match self {
            VeNumber::Finite(v) => Some(v),
            VeNumber::NegativeInfinity => None,
        }
    }
}

impl Serialize for VeNumber {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;
        match self {
            VeNumber::Finite(v) => serializer.serialize_f64(*v),
            VeNumber::NegativeInfinity => {
                let mut map = serializer.serialize_map(Some(1))?;
                map.serialize_entry("divergent", "-inf")?;
                map.end()
            }
        }
    }
}

impl<'de> Deserialize<'de> for VeNumber {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Number(f64),
            Divergent { divergent: String },
        }
        match Repr::deserialize(deserializer)? {
            Repr::Number(v) => Ok(VeNumber::Finite(v)),
            Repr::Divergent { divergent } if divergent == "-inf" => Ok(VeNumber::NegativeInfinity),
            Repr::Divergent { divergent } => {
                Err(serde::de::Error::custom(format!("unknown divergent marker '{divergent}'")))
            }
        }
    }
}

impl fmt::Display for VeNumber {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VeNumber::Finite(v) => write!(f, "{v}"),
            VeNumber::NegativeInfinity => f.write_str("-inf"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VeValue {
    pub value: VeNumber,
    pub kind: VeMeasureKind,
    pub comparison: Comparison,
}

/// Which probability made a VE ratio undefined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Vanished {
    /// `P(C=i | reference arm)`
    ReferenceCase,
    /// `P(C=j | arm)` in a relative-variants ratio.
    OtherVariantCase,
    /// `P(C=0 | reference arm)`
    ReferenceControl,
    /// `P(C=0 | vaccine arm)`
    VaccineControl,
    /// An expected count of a test-negative design cell.
    ExpectedCount,
}

impl fmt::Display for Vanished {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Vanished::ReferenceCase => "P(C=i | reference arm)",
            Vanished::OtherVariantCase => "P(C=j | arm)",
            Vanished::ReferenceControl => "P(C=0 | reference arm)",
            Vanished::VaccineControl => "P(C=0 | vaccine arm)",
            Vanished::ExpectedCount => "an expected cell count",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VeError {
    #[error("VE undefined: {0} is zero")]
    Undefined(Vanished),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("not available: {0}")]
    NotAvailable(String),
    #[error("invalid time grid: {0}")]
    InvalidGrid(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

fn nonzero(x: f64, what: Vanished) -> Result<f64, VeError> {
    if x > 0.0 {
        Ok(x)
    } else {
        Err(VeError::Undefined(what))
    }
}

fn check_variant(comp: &CohortComponents, variant: usize) -> Result<(), VeError> {
    if variant < comp.n_variants() {
        Ok(())
    } else {
        Err(VeError::InvalidInput(format!(
            "variant index {variant} out of range for {} variants",
            comp.n_variants()
        )))
    }
}

/// `1 - ratio` of the arm's measure to the reference arm's measure for
/// variant `i`. The reference is placebo for variant-specific VE or a second
/// vaccine for relative VE of two vaccines.
pub fn ve_from_components(
    kind: VeMeasureKind,
    arm: &CohortComponents,
    reference: &CohortComponents,
    variant: usize,
) -> Result<f64, VeError> {
    Ok(1.0 - measure_ratio(kind, arm, reference, variant)?)
}

fn measure_ratio(
    kind: VeMeasureKind,
    arm: &CohortComponents,
    reference: &CohortComponents,
    variant: usize,
) -> Result<f64, VeError> {
    check_variant(arm, variant)?;
    check_variant(reference, variant)?;
    let case_ref = nonzero(reference.p_case[variant], Vanished::ReferenceCase)?;
    let crr = arm.p_case[variant] / case_ref;
    let ratio = match kind {
        VeMeasureKind::Crr => crr,
        VeMeasureKind::Irr => {
            crr * reference.expected_person_time / arm.expected_person_time
        }
        VeMeasureKind::Or => {
            let ctl_ref = nonzero(reference.p_control, Vanished::ReferenceControl)?;
            if arm.p_case[variant] == 0.0 {
                0.0
            } else {
                let ctl_arm = nonzero(arm.p_control, Vanished::VaccineControl)?;
                crr / (ctl_arm / ctl_ref)
            }
        }
    };
    Ok(ratio)
}

/// Relative VE of one vaccine against variant `i` versus variant `j`:
/// `1 - (1 - VE_i) / (1 - VE_j)`. The three kinds coincide.
pub fn relative_ve_two_variants(
    kind: VeMeasureKind,
    arm: &CohortComponents,
    reference: &CohortComponents,
    variant: usize,
    other: usize,
) -> Result<f64, VeError> {
    check_variant(arm, other)?;
    if variant == other {
        check_variant(arm, variant)?;
        return Ok(0.0);
    }
    nonzero(reference.p_case[other], Vanished::ReferenceCase)?;
    let ratio_i = measure_ratio(kind, arm, reference, variant)?;
    let ratio_j = nonzero(measure_ratio(kind, arm, reference, other)?, Vanished::OtherVariantCase)?;
    Ok(1.0 - ratio_i / ratio_j)
}

/// Relative VE of vaccine `m` against vaccine `n` for variant `i`; vaccine `n`
/// plays the reference arm.
pub fn relative_ve_two_vaccines(
    kind: VeMeasureKind,
    arm_m: &CohortComponents,
    arm_n: &CohortComponents,
    variant: usize,
) -> Result<f64, VeError> {
    ve_from_components(kind, arm_m, arm_n, variant)
}

/// Closed-form variant-specific VE of a leaky vaccine.
///
/// IRR is `1 - θ_i`; CRR and OR carry the time-dependent person-time and
/// survival factors. When the vaccine protects fully (`Θ = 0`) every kind is 1.
pub fn leaky_ve_closed_form(
    kind: VeMeasureKind,
    rates: &EpidemicRates,
    profile: &LeakyProfile,
    variant: usize,
    t: f64,
) -> Result<f64, VeError> {
    rates.check_variant(variant)?;
    let overall = profile.overall(rates)?;
    let theta = profile.theta(variant);
    let x = rates.total() * t;
    let ratio = match kind {
        VeMeasureKind::Irr => theta,
        VeMeasureKind::Crr => theta * exposure_fraction(overall * x) / exposure_fraction(x),
        VeMeasureKind::Or => theta * growth_fraction_ratio(overall * x, x),
    };
    Ok(1.0 - ratio)
}

/// Closed-form relative VE of a leaky vaccine across two variants,
/// `1 - θ_i / θ_j` for every kind and every `t`.
pub fn leaky_relative_variants_closed_form(
    profile: &LeakyProfile,
    variant: usize,
    other: usize,
) -> Result<f64, VeError> {
    let th_j = nonzero(profile.theta(other), Vanished::OtherVariantCase)?;
    Ok(1.0 - profile.theta(variant) / th_j)
}

/// Closed-form relative VE of two leaky vaccines for one variant.
pub fn leaky_relative_vaccines_closed_form(
    kind: VeMeasureKind,
    rates: &EpidemicRates,
    arm_m: &LeakyProfile,
    arm_n: &LeakyProfile,
    variant: usize,
    t: f64,
) -> Result<f64, VeError> {
    rates.check_variant(variant)?;
    let th_n = nonzero(arm_n.theta(variant), Vanished::ReferenceCase)?;
    let base = arm_m.theta(variant) / th_n;
    let x = rates.total() * t;
    let (om, on) = (arm_m.overall(rates)?, arm_n.overall(rates)?);
    let ratio = match kind {
        VeMeasureKind::Irr => base,
        VeMeasureKind::Crr => base * exposure_fraction(om * x) / exposure_fraction(on * x),
        VeMeasureKind::Or => base * growth_fraction_ratio(om * x, on * x),
    };
    Ok(1.0 - ratio)
}

/// `Σ_{g ∌ i} θ_g · Λ(1 - e^{-a_g t}) / (a_g (1 - e^{-Λt}))`, i.e. the
/// all-or-none arm's cumulative risk of variant `i` relative to placebo.
/// With `variant = None` the sum runs over every stratum, giving the
/// person-time ratio against placebo.
fn aon_relative_exposure(
    rates: &EpidemicRates,
    profile: &AllOrNoneProfile,
    variant: Option<usize>,
    t: f64,
) -> f64 {
    let base = exposure_fraction(rates.total() * t);
    profile
        .strata()
        .filter(|(set, _)| variant.is_none_or(|i| !set.contains(i)))
        .map(|(set, th)| th * exposure_fraction(rates.residual_rate(set) * t) / base)
        .sum()
}

/// `Σ_g θ_g e^{λ_g t}`, the inverse control-odds factor of an all-or-none arm.
fn aon_survival_factor(rates: &EpidemicRates, profile: &AllOrNoneProfile, t: f64) -> f64 {
    profile.strata().map(|(set, th)| th * (rates.rate_of(set) * t).exp()).sum()
}

fn aon_ratio_to_placebo(
    kind: VeMeasureKind,
    rates: &EpidemicRates,
    profile: &AllOrNoneProfile,
    variant: usize,
    t: f64,
) -> f64 {
    let crr = aon_relative_exposure(rates, profile, Some(variant), t);
    match kind {
        VeMeasureKind::Crr => crr,
        VeMeasureKind::Irr => crr / aon_relative_exposure(rates, profile, None, t),
        VeMeasureKind::Or => crr / aon_survival_factor(rates, profile, t),
    }
}

/// Closed-form variant-specific VE of an all-or-none vaccine.
pub fn aon_ve_closed_form(
    kind: VeMeasureKind,
    rates: &EpidemicRates,
    profile: &AllOrNoneProfile,
    variant: usize,
    t: f64,
) -> Result<f64, VeError> {
    rates.check_variant(variant)?;
    profile.check(rates)?;
    Ok(1.0 - aon_ratio_to_placebo(kind, rates, profile, variant, t))
}

/// Relative comparisons with closed-form expansions for all-or-none vaccines.
#[derive(Debug, Clone, Copy)]
pub enum AonRelative<'a> {
    Variants { profile: &'a AllOrNoneProfile, variant: usize, other: usize },
    Vaccines { arm_m: &'a AllOrNoneProfile, arm_n: &'a AllOrNoneProfile, variant: usize },
}

/// Closed-form relative VE for all-or-none vaccines.
pub fn aon_relative_ve_closed_form(
    kind: VeMeasureKind,
    comparison: AonRelative<'_>,
    rates: &EpidemicRates,
    t: f64,
) -> Result<f64, VeError> {
    match comparison {
        AonRelative::Variants { profile, variant, other } => {
            rates.check_variant(variant)?;
            rates.check_variant(other)?;
            profile.check(rates)?;
            if variant == other {
                return Ok(0.0);
            }
            let si = aon_relative_exposure(rates, profile, Some(variant), t);
            let sj = nonzero(aon_relative_exposure(rates, profile, Some(other), t), Vanished::OtherVariantCase)?;
            Ok(1.0 - si / sj)
        }
        AonRelative::Vaccines { arm_m, arm_n, variant } => {
            rates.check_variant(variant)?;
            arm_m.check(rates)?;
            arm_n.check(rates)?;
            let rm = aon_ratio_to_placebo(kind, rates, arm_m, variant, t);
            let rn = nonzero(aon_ratio_to_placebo(kind, rates, arm_n, variant, t), Vanished::ReferenceCase)?;
            Ok(1.0 - rm / rn)
        }
    }
}

/// The rate-free long-run value of all-or-none relative VE across variants:
/// `1 - (1 - ψ_i) / (1 - ψ_j)` with `ψ_i = Σ_{g ∋ i} θ_g`.
pub fn aon_immunity_ratio(profile: &AllOrNoneProfile, variant: usize, other: usize) -> Result<f64, VeError> {
    let sj = nonzero(1.0 - profile.immune_share(other), Vanished::OtherVariantCase)?;
    Ok(1.0 - (1.0 - profile.immune_share(variant)) / sj)
}

/// Every variant subset not containing `variant`.
pub fn subsets_excluding(n_variants: usize, variant: usize) -> impl Iterator<Item = VariantSet> {
    let full = VariantSet::full(n_variants).bits();
    let without = full & !(1u64 << variant);
    // enumerate submasks of `without`, including the empty set
    let mut next = Some(without);
    std::iter::from_fn(move || {
        let cur = next?;
        next = if cur == 0 { None } else { Some((cur - 1) & without) };
        Some(VariantSet::from_bits(cur))
    })
}

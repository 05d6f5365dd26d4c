//! Competing-variants exponential model.
//!
//! Every subject is exposed to `I` variants with constant forces of infection
//! `λ_i`. The first infection ends follow-up, so the variants are competing
//! events. This module evaluates, at a study horizon `t`, the probability of
//! staying uninfected, of being a case of each variant, and the expected
//! person-time (the restricted mean survival time) for placebo subjects and
//! for subjects vaccinated with a leaky or an all-or-none vaccine.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::{one_minus_exp_neg, restricted_mean};

/// Default cap on the number of variants an all-or-none profile may address.
pub const DEFAULT_MAX_VARIANTS: usize = 32;

/// Tolerance on the all-or-none mixture summing to one.
pub const MIXTURE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("dimension mismatch: expected {expected} variants, found {found}")]
    Dimension { expected: usize, found: usize },
    #[error("invalid all-or-none profile: {0}")]
    InvalidProfile(String),
    #[error("{variants} variants exceed the all-or-none capacity of {max}")]
    Capacity { variants: usize, max: usize },
}

/// Per-variant forces of infection among unvaccinated subjects.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpidemicRates {
    lambdas: Vec<f64>,
    total: f64,
}

impl EpidemicRates {
    pub fn new(lambdas: Vec<f64>) -> Result<Self, ModelError> {
        if lambdas.is_empty() {
            return Err(ModelError::InvalidInput("at least one variant is required".into()));
        }
        for (i, &l) in lambdas.iter().enumerate() {
            if !l.is_finite() || l <= 0.0 {
                return Err(ModelError::InvalidInput(format!(
                    "rate of variant {i} must be finite and positive, got {l}"
                )));
            }
        }
        let total = lambdas.iter().sum();
        Ok(Self { lambdas, total })
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn lambda(&self, variant: usize) -> f64 {
        self.lambdas[variant]
    }

    /// `Λ = Σ λ_i`.
    pub fn total(&self) -> f64 {
        self.total
    }

    pub fn n_variants(&self) -> usize {
        self.lambdas.len()
    }

    /// Every rate multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self, ModelError> {
        Self::new(self.lambdas.iter().map(|l| l * factor).collect())
    }

    /// Sum of the rates of the variants in `set`.
    pub fn rate_of(&self, set: VariantSet) -> f64 {
        set.iter().map(|i| self.lambdas[i]).sum()
    }

    /// Sum of the rates of the variants *outside* `set`, computed directly
    /// rather than as `Λ - rate_of(set)`.
    pub fn residual_rate(&self, set: VariantSet) -> f64 {
        self.lambdas
            .iter()
            .enumerate()
            .filter(|(i, _)| !set.contains(*i))
            .map(|(_, l)| l)
            .sum()
    }

    pub(crate) fn check_variant(&self, variant: usize) -> Result<(), ModelError> {
        if variant < self.n_variants() {
            Ok(())
        } else {
            Err(ModelError::InvalidInput(format!(
                "variant index {variant} out of range for {} variants",
                self.n_variants()
            )))
        }
    }
}

/// Study length `t > 0`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize)]
pub struct StudyHorizon(f64);

impl StudyHorizon {
    pub fn new(t: f64) -> Result<Self, ModelError> {
        if t.is_finite() && t > 0.0 {
            Ok(Self(t))
        } else {
            Err(ModelError::InvalidInput(format!(
                "study horizon must be finite and positive, got {t}"
            )))
        }
    }

    pub fn t(self) -> f64 {
        self.0
    }
}

/// A subset of variants, encoded as a bitmask over 0-based variant indices.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VariantSet(u64);

impl VariantSet {
    pub const EMPTY: VariantSet = VariantSet(0);

    pub fn from_bits(bits: u64) -> Self {
        Self(bits)
    }

    pub fn bits(self) -> u64 {
        self.0
    }

    /// The set of all `n` variants.
    pub fn full(n: usize) -> Self {
        if n >= 64 {
            Self(u64::MAX)
        } else {
            Self((1u64 << n) - 1)
        }
    }

    pub fn singleton(variant: usize) -> Self {
        Self(1u64 << variant)
    }

    pub fn with(self, variant: usize) -> Self {
        Self(self.0 | (1u64 << variant))
    }

    pub fn contains(self, variant: usize) -> bool {
        variant < 64 && self.0 & (1u64 << variant) != 0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    /// Highest variant index plus one (0 for the empty set).
    pub fn span(self) -> usize {
        64 - self.0.leading_zeros() as usize
    }

    pub fn iter(self) -> impl Iterator<Item = usize> {
        (0..64).filter(move |&i| self.0 & (1u64 << i) != 0)
    }
}

impl FromIterator<usize> for VariantSet {
    fn from_iter<T: IntoIterator<Item = usize>>(iter: T) -> Self {
        iter.into_iter().fold(Self::EMPTY, Self::with)
    }
}

impl fmt::Debug for VariantSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

/// Leaky action: vaccine `m` multiplies the force of infection of variant `i`
/// by `θ_{i,m}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LeakyProfile {
    thetas: Vec<f64>,
}

impl LeakyProfile {
    pub fn new(thetas: Vec<f64>) -> Result<Self, ModelError> {
        if thetas.is_empty() {
            return Err(ModelError::InvalidInput("leaky profile has no variants".into()));
        }
        for (i, &th) in thetas.iter().enumerate() {
            if !(0.0..=1.0).contains(&th) {
                return Err(ModelError::InvalidInput(format!(
                    "theta of variant {i} must lie in [0, 1], got {th}"
                )));
            }
        }
        Ok(Self { thetas })
    }

    /// A profile that leaves every rate unchanged.
    pub fn inert(n_variants: usize) -> Self {
        Self { thetas: vec![1.0; n_variants] }
    }

    pub fn thetas(&self) -> &[f64] {
        &self.thetas
    }

    pub fn theta(&self, variant: usize) -> f64 {
        self.thetas[variant]
    }

    pub fn n_variants(&self) -> usize {
        self.thetas.len()
    }

    /// `Θ_m = Σ θ_{i,m} λ_i / Λ`.
    pub fn overall(&self, rates: &EpidemicRates) -> Result<f64, ModelError> {
        self.check(rates)?;
        let weighted: f64 = self.thetas.iter().zip(rates.lambdas()).map(|(th, l)| th * l).sum();
        Ok((weighted / rates.total()).clamp(0.0, 1.0))
    }

    /// The vaccinated forces of infection `θ_{i,m} λ_i`.
    pub fn thinned_rates(&self, rates: &EpidemicRates) -> Result<Vec<f64>, ModelError> {
        self.check(rates)?;
        Ok(self.thetas.iter().zip(rates.lambdas()).map(|(th, l)| th * l).collect())
    }

    fn check(&self, rates: &EpidemicRates) -> Result<(), ModelError> {
        if self.thetas.len() == rates.n_variants() {
            Ok(())
        } else {
            Err(ModelError::Dimension { expected: rates.n_variants(), found: self.thetas.len() })
        }
    }
}

/// All-or-none action: a proportion `θ_{g,m}` of vaccinees becomes completely
/// immune to the variant subset `g` and stays fully susceptible to the rest.
///
/// Strata are stored sparsely; only subsets with a positive share are kept.
/// The empty subset (no immunity at all) is an ordinary stratum.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AllOrNoneProfile {
    n_variants: usize,
    strata: BTreeMap<VariantSet, f64>,
}

impl AllOrNoneProfile {
    /// Builds a profile whose listed strata, including the empty set, must sum
    /// to one.
    pub fn new(
        n_variants: usize,
        strata: impl IntoIterator<Item = (VariantSet, f64)>,
    ) -> Result<Self, ModelError> {
        Self::with_capacity(n_variants, strata, DEFAULT_MAX_VARIANTS)
    }

    pub fn with_capacity(
        n_variants: usize,
        strata: impl IntoIterator<Item = (VariantSet, f64)>,
        max_variants: usize,
    ) -> Result<Self, ModelError> {
        let max = max_variants.min(64);
        if n_variants > max {
            return Err(ModelError::Capacity { variants: n_variants, max });
        }
        if n_variants == 0 {
            return Err(ModelError::InvalidInput("all-or-none profile has no variants".into()));
        }
        let mut map = BTreeMap::new();
        for (set, theta) in strata {
            if set.span() > n_variants {
                return Err(ModelError::InvalidProfile(format!(
                    "stratum {set:?} refers to a variant outside the {n_variants}-variant universe"
                )));
            }
            if !theta.is_finite() || theta < 0.0 {
                return Err(ModelError::InvalidProfile(format!(
                    "stratum {set:?} has invalid share {theta}"
                )));
            }
            *map.entry(set).or_insert(0.0) += theta;
        }
        let sum: f64 = map.values().sum();
        if (sum - 1.0).abs() > MIXTURE_TOLERANCE {
            return Err(ModelError::InvalidProfile(format!(
                "stratum shares sum to {sum}, expected 1"
            )));
        }
        map.retain(|_, th| *th > 0.0);
        Ok(Self { n_variants, strata: map })
    }

    /// Builds a profile from the non-empty strata and assigns the remainder
    /// `1 - Σ θ_g` to the empty stratum.
    pub fn fill_remainder(
        n_variants: usize,
        strata: impl IntoIterator<Item = (VariantSet, f64)>,
    ) -> Result<Self, ModelError> {
        let mut listed: Vec<(VariantSet, f64)> = strata.into_iter().collect();
        if listed.iter().any(|(set, _)| set.is_empty()) {
            return Err(ModelError::InvalidProfile(
                "the empty stratum is implied when filling the remainder".into(),
            ));
        }
        let used: f64 = listed.iter().map(|(_, th)| th).sum();
        let remainder = 1.0 - used;
        if remainder < -MIXTURE_TOLERANCE {
            return Err(ModelError::InvalidProfile(format!(
                "stratum shares sum to {used}, more than 1"
            )));
        }
        listed.push((VariantSet::EMPTY, remainder.max(0.0)));
        Self::new(n_variants, listed)
    }

    /// All vaccinees unprotected: behaves like placebo.
    pub fn inert(n_variants: usize) -> Result<Self, ModelError> {
        Self::new(n_variants, [(VariantSet::EMPTY, 1.0)])
    }

    pub fn n_variants(&self) -> usize {
        self.n_variants
    }

    /// Positive strata in ascending bitmask order.
    pub fn strata(&self) -> impl Iterator<Item = (VariantSet, f64)> + '_ {
        self.strata.iter().map(|(s, th)| (*s, *th))
    }

    pub fn share(&self, set: VariantSet) -> f64 {
        self.strata.get(&set).copied().unwrap_or(0.0)
    }

    /// Proportion of vaccinees immune to variant `i`: `Σ_{g ∋ i} θ_g`.
    pub fn immune_share(&self, variant: usize) -> f64 {
        self.strata().filter(|(s, _)| s.contains(variant)).map(|(_, th)| th).sum()
    }

    pub(crate) fn check(&self, rates: &EpidemicRates) -> Result<(), ModelError> {
        if self.n_variants == rates.n_variants() {
            Ok(())
        } else {
            Err(ModelError::Dimension { expected: rates.n_variants(), found: self.n_variants })
        }
    }
}

/// The protection model of one study arm.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ArmProfile {
    Placebo,
    Leaky(LeakyProfile),
    AllOrNone(AllOrNoneProfile),
}

impl ArmProfile {
    pub fn components(
        &self,
        rates: &EpidemicRates,
        horizon: StudyHorizon,
    ) -> Result<CohortComponents, ModelError> {
        match self {
            ArmProfile::Placebo => Ok(placebo_components(rates, horizon)),
            ArmProfile::Leaky(p) => leaky_components(rates, p, horizon),
            ArmProfile::AllOrNone(p) => all_or_none_components(rates, p, horizon),
        }
    }

    pub fn is_leaky_like(&self) -> bool {
        matches!(self, ArmProfile::Placebo | ArmProfile::Leaky(_))
    }
}

/// Cell probabilities and expected person-time of one arm at the horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortComponents {
    /// `P(C=0 | V)`
    pub p_control: f64,
    /// `P(C=i | V)` for each variant.
    pub p_case: Vec<f64>,
    /// `E(Y | V)`
    pub expected_person_time: f64,
}

impl CohortComponents {
    pub fn total_probability(&self) -> f64 {
        self.p_control + self.p_case.iter().sum::<f64>()
    }

    pub fn n_variants(&self) -> usize {
        self.p_case.len()
    }
}

fn competing_exponential(rates: &[f64], horizon: StudyHorizon) -> CohortComponents {
    let t = horizon.t();
    let total: f64 = rates.iter().sum();
    if total == 0.0 {
        return CohortComponents {
            p_control: 1.0,
            p_case: vec![0.0; rates.len()],
            expected_person_time: t,
        };
    }
    let infected = one_minus_exp_neg(total * t);
    CohortComponents {
        p_control: (-total * t).exp(),
        p_case: rates.iter().map(|l| l / total * infected).collect(),
        expected_person_time: restricted_mean(total, t),
    }
}

/// Placebo arm: `P(C=0) = e^{-Λt}`, `P(C=i) = λ_i/Λ (1 - e^{-Λt})`,
/// `E(Y) = (1 - e^{-Λt}) / Λ`.
pub fn placebo_components(rates: &EpidemicRates, horizon: StudyHorizon) -> CohortComponents {
    competing_exponential(rates.lambdas(), horizon)
}

/// Leaky arm: the placebo formulas with `λ_i ↦ θ_{i,m} λ_i`.
pub fn leaky_components(
    rates: &EpidemicRates,
    profile: &LeakyProfile,
    horizon: StudyHorizon,
) -> Result<CohortComponents, ModelError> {
    let thinned = profile.thinned_rates(rates)?;
    Ok(competing_exponential(&thinned, horizon))
}

/// All-or-none arm: law of total probability over the immunity strata.
/// Each stratum competes only the variants it is not immune to; the stratum
/// immune to everything contributes `t θ` to person-time and nothing else.
pub fn all_or_none_components(
    rates: &EpidemicRates,
    profile: &AllOrNoneProfile,
    horizon: StudyHorizon,
) -> Result<CohortComponents, ModelError> {
    profile.check(rates)?;
    let t = horizon.t();
    let mut out = CohortComponents {
        p_control: 0.0,
        p_case: vec![0.0; rates.n_variants()],
        expected_person_time: 0.0,
    };
    for (set, theta) in profile.strata() {
        let residual = rates.residual_rate(set);
        if residual == 0.0 {
            out.p_control += theta;
            out.expected_person_time += theta * t;
            continue;
        }
        out.p_control += theta * (-residual * t).exp();
        let infected = one_minus_exp_neg(residual * t);
        for (i, &l) in rates.lambdas().iter().enumerate() {
            if !set.contains(i) {
                out.p_case[i] += theta * l / residual * infected;
            }
        }
        out.expected_person_time += theta * restricted_mean(residual, t);
    }
    Ok(out)
}

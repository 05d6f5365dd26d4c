//! Random scenarios and hand-written reference formulas shared by the
//! integration tests and the acceptance run.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vecalc_core::model::CohortComponents;
use vecalc_core::{
    AllOrNoneProfile, ArmProfile, EpidemicRates, LeakyProfile, Scenario, StudyHorizon, VariantSet,
};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn leaky(thetas: &[f64]) -> ArmProfile {
    ArmProfile::Leaky(LeakyProfile::new(thetas.to_vec()).unwrap())
}

pub fn all_or_none(n_variants: usize, strata: &[(u64, f64)]) -> ArmProfile {
    let strata = strata.iter().map(|&(bits, th)| (VariantSet::from_bits(bits), th));
    ArmProfile::AllOrNone(AllOrNoneProfile::new(n_variants, strata).unwrap())
}

pub fn scenario(lambdas: &[f64], vaccines: Vec<ArmProfile>, t: f64) -> Scenario {
    Scenario::new(EpidemicRates::new(lambdas.to_vec()).unwrap(), vaccines, StudyHorizon::new(t).unwrap())
        .unwrap()
}

/// λ = {0.10, 0.05}, vaccine m leaky θ = {0.4, 0.8}, vaccine n leaky
/// θ = {0.5, 0.7}, t = 2.
pub fn leaky_reference() -> Scenario {
    scenario(&[0.10, 0.05], vec![leaky(&[0.4, 0.8]), leaky(&[0.5, 0.7])], 2.0)
}

/// λ = {0.10, 0.05}; θ_∅ = 0.4, θ_{1} = 0.3, θ_{2} = 0.2, θ_{1,2} = 0.1; t = 2.
pub fn aon_reference() -> Scenario {
    scenario(&[0.10, 0.05], vec![all_or_none(2, &[(0b00, 0.4), (0b01, 0.3), (0b10, 0.2), (0b11, 0.1)])], 2.0)
}

fn random_leaky(rng: &mut impl Rng, n: usize, lo: f64, hi: f64) -> ArmProfile {
    let thetas: Vec<f64> = (0..n).map(|_| rng.random_range(lo..hi)).collect();
    leaky(&thetas)
}

fn random_all_or_none(rng: &mut impl Rng, n: usize) -> ArmProfile {
    let subsets = 1u64 << n;
    let k = rng.random_range(1..=subsets.min(6) as usize);
    let mut picked: Vec<u64> = Vec::new();
    while picked.len() < k {
        let s = rng.random_range(0..subsets);
        if !picked.contains(&s) {
            picked.push(s);
        }
    }
    let weights: Vec<f64> = picked.iter().map(|_| rng.random_range(0.05..1.0)).collect();
    let total: f64 = weights.iter().sum();
    let mut strata: Vec<(u64, f64)> = picked.iter().zip(&weights).map(|(&s, &w)| (s, w / total)).collect();
    // make the shares sum to one exactly
    let head: f64 = strata[..k - 1].iter().map(|s| s.1).sum();
    strata[k - 1].1 = 1.0 - head;
    all_or_none(n, &strata)
}

/// I in 1..=5, M in 1..=3, rates in [0.01, 1], t in [0.1, 10], leaky and
/// all-or-none vaccines mixed.
pub fn random_scenario(rng: &mut impl Rng) -> Scenario {
    let n = rng.random_range(1..=5);
    let lambdas: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..1.0)).collect();
    let m = rng.random_range(1..=3);
    let vaccines = (0..m)
        .map(|_| if rng.random_bool(0.5) { random_leaky(rng, n, 0.0, 1.0) } else { random_all_or_none(rng, n) })
        .collect();
    scenario(&lambdas, vaccines, rng.random_range(0.1..10.0))
}

/// Leaky vaccines only, every θ strictly inside (0, 1).
pub fn random_leaky_scenario(rng: &mut impl Rng) -> Scenario {
    let n = rng.random_range(1..=5);
    let lambdas: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..1.0)).collect();
    let m = rng.random_range(1..=3);
    let vaccines = (0..m).map(|_| random_leaky(rng, n, 0.05, 0.95)).collect();
    scenario(&lambdas, vaccines, rng.random_range(0.1..10.0))
}

/// Competing exponentials with the given per-variant rates, written out
/// with plain `exp`.
fn competing(rates: &[f64], t: f64) -> (f64, Vec<f64>, f64) {
    let total: f64 = rates.iter().sum();
    if total == 0.0 {
        return (1.0, vec![0.0; rates.len()], t);
    }
    let surv = (-total * t).exp();
    (surv, rates.iter().map(|r| r / total * (1.0 - surv)).collect(), (1.0 - surv) / total)
}

/// Components of `arm` by direct summation over every subset of variants.
pub fn naive_components(lambdas: &[f64], arm: &ArmProfile, t: f64) -> CohortComponents {
    let n = lambdas.len();
    let mut p_control = 0.0;
    let mut p_case = vec![0.0; n];
    let mut person_time = 0.0;
    let mut add = |weight: f64, rates: &[f64]| {
        let (s, c, y) = competing(rates, t);
        p_control += weight * s;
        for (acc, v) in p_case.iter_mut().zip(c) {
            *acc += weight * v;
        }
        person_time += weight * y;
    };
    match arm {
        ArmProfile::Placebo => add(1.0, lambdas),
        ArmProfile::Leaky(p) => {
            let rates: Vec<f64> = lambdas.iter().zip(p.thetas()).map(|(l, th)| l * th).collect();
            add(1.0, &rates)
        }
        ArmProfile::AllOrNone(p) => {
            for bits in 0..(1u64 << n) {
                let share = p.share(VariantSet::from_bits(bits));
                if share == 0.0 {
                    continue;
                }
                let rates: Vec<f64> =
                    (0..n).map(|i| if bits >> i & 1 == 1 { 0.0 } else { lambdas[i] }).collect();
                add(share, &rates);
            }
        }
    }
    CohortComponents { p_control, p_case, expected_person_time: person_time }
}

pub fn naive_all(s: &Scenario) -> Vec<CohortComponents> {
    s.arms().iter().map(|a| naive_components(s.rates().lambdas(), a, s.horizon().t())).collect()
}

pub fn naive_irr(m: &CohortComponents, r: &CohortComponents, i: usize) -> f64 {
    1.0 - (m.p_case[i] / m.expected_person_time) / (r.p_case[i] / r.expected_person_time)
}

pub fn naive_crr(m: &CohortComponents, r: &CohortComponents, i: usize) -> f64 {
    1.0 - m.p_case[i] / r.p_case[i]
}

pub fn naive_or(m: &CohortComponents, r: &CohortComponents, i: usize) -> f64 {
    1.0 - (m.p_case[i] / m.p_control) / (r.p_case[i] / r.p_control)
}

pub fn naive_relative_variants(m: &CohortComponents, r: &CohortComponents, i: usize, j: usize) -> f64 {
    1.0 - (m.p_case[i] / m.p_case[j]) / (r.p_case[i] / r.p_case[j])
}

/// Two-sided standard normal quantile by bisection on the complementary
/// error function.
pub fn z_quantile(alpha: f64) -> f64 {
    let tail = |z: f64| statrs::function::erf::erfc(z / std::f64::consts::SQRT_2) / 2.0;
    let (mut lo, mut hi) = (0.0_f64, 40.0_f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if tail(mid) > alpha / 2.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

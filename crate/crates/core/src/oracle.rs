//! Subject-level Monte-Carlo simulation of the competing-variants model.
//!
//! Each subject draws an independent exponential infection time per variant
//! it is susceptible to; the earliest one wins and the follow-up is censored
//! at the horizon. For all-or-none arms the subject first draws its immunity
//! stratum. The empirical frequencies are an independent check on the closed
//! forms in [`crate::model`], and the same sampler drives person-time in the
//! precision simulations.

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;
use serde::Serialize;

use crate::model::{ArmProfile, CohortComponents, EpidemicRates, ModelError, StudyHorizon};
use crate::rng::stream_rng;

/// Subjects simulated per random stream.
const BLOCK: usize = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubjectOutcome {
    /// Variant index of the infection, `None` for a control.
    pub infected_by: Option<usize>,
    pub person_time: f64,
}

/// Draws single subjects of one arm.
#[derive(Debug, Clone)]
pub struct SubjectSampler {
    /// `(cumulative share, per-variant susceptible rates)` per stratum.
    strata: Vec<(f64, Vec<f64>)>,
    t: f64,
}

impl SubjectSampler {
    pub fn new(
        rates: &EpidemicRates,
        arm: &ArmProfile,
        horizon: StudyHorizon,
    ) -> Result<Self, ModelError> {
        let strata = match arm {
            ArmProfile::Placebo => vec![(1.0, rates.lambdas().to_vec())],
            ArmProfile::Leaky(p) => vec![(1.0, p.thinned_rates(rates)?)],
            ArmProfile::AllOrNone(p) => {
                p.check(rates)?;
                let mut cum = 0.0;
                let mut out: Vec<(f64, Vec<f64>)> = p
                    .strata()
                    .map(|(set, th)| {
                        cum += th;
                        let r = rates
                            .lambdas()
                            .iter()
                            .enumerate()
                            .map(|(i, &l)| if set.contains(i) { 0.0 } else { l })
                            .collect();
                        (cum, r)
                    })
                    .collect();
                if let Some(last) = out.last_mut() {
                    last.0 = f64::INFINITY;
                }
                out
            }
        };
        Ok(Self { strata, t: horizon.t() })
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> SubjectOutcome {
        let rates = if self.strata.len() == 1 {
            &self.strata[0].1
        } else {
            let u: f64 = rng.random();
            &self.strata.iter().find(|(cum, _)| u < *cum).unwrap_or(&self.strata[0]).1
        };
        let mut first = self.t;
        let mut infected_by = None;
        for (i, &rate) in rates.iter().enumerate() {
            if rate > 0.0 {
                let e: f64 = Exp1.sample(rng);
                let time = e / rate;
                if time < first {
                    first = time;
                    infected_by = Some(i);
                }
            }
        }
        SubjectOutcome { infected_by, person_time: first }
    }

    pub fn n_variants(&self) -> usize {
        self.strata[0].1.len()
    }
}

/// Empirical components with their Monte-Carlo standard errors.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleEstimate {
    pub components: CohortComponents,
    pub n_subjects: usize,
    pub se_control: f64,
    pub se_case: Vec<f64>,
    pub se_person_time: f64,
}

impl OracleEstimate {
    /// Largest absolute z-score of `closed` against the empirical estimate.
    /// Frequencies use the binomial standard error at the closed-form value,
    /// so rare cells with no observed events still get a finite score.
    /// A zero standard error only tolerates exact agreement.
    pub fn max_z(&self, closed: &CohortComponents) -> f64 {
        let z = |emp: f64, se: f64, exact: f64| {
            if se > 0.0 {
                (emp - exact).abs() / se
            } else if (emp - exact).abs() <= 1e-12 * (1.0 + exact.abs()) {
                0.0
            } else {
                f64::INFINITY
            }
        };
        let n = self.n_subjects as f64;
        let binomial = |p: f64| (p * (1.0 - p) / n).sqrt();
        let mut worst = z(self.components.p_control, binomial(closed.p_control), closed.p_control);
        for (emp, exact) in self.components.p_case.iter().zip(&closed.p_case) {
            worst = worst.max(z(*emp, binomial(*exact), *exact));
        }
        worst.max(z(
            self.components.expected_person_time,
            self.se_person_time,
            closed.expected_person_time,
        ))
    }
}

#[derive(Clone)]
struct Tally {
    controls: u64,
    cases: Vec<u64>,
    sum_y: f64,
    sum_y2: f64,
}

impl Tally {
    fn new(n_variants: usize) -> Self {
        Self { controls: 0, cases: vec![0; n_variants], sum_y: 0.0, sum_y2: 0.0 }
    }

    fn merge(mut self, other: &Tally) -> Self {
        self.controls += other.controls;
        for (a, b) in self.cases.iter_mut().zip(&other.cases) {
            *a += b;
        }
        self.sum_y += other.sum_y;
        self.sum_y2 += other.sum_y2;
        self
    }
}

/// Simulates `n_subjects` subjects of one arm. Deterministic given `seed`
/// and independent of the rayon thread count.
pub fn simulate_cohort_oracle(
    rates: &EpidemicRates,
    arm: &ArmProfile,
    horizon: StudyHorizon,
    n_subjects: usize,
    seed: u64,
) -> Result<OracleEstimate, ModelError> {
    if n_subjects == 0 {
        return Err(ModelError::InvalidInput("oracle needs at least one subject".into()));
    }
    let sampler = SubjectSampler::new(rates, arm, horizon)?;
    let n_variants = sampler.n_variants();
    let n_blocks = n_subjects.div_ceil(BLOCK);
    let tallies: Vec<Tally> = (0..n_blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream_rng(seed, b as u64);
            let size = BLOCK.min(n_subjects - b * BLOCK);
            let mut tally = Tally::new(n_variants);
            for _ in 0..size {
                let out = sampler.draw(&mut rng);
                match out.infected_by {
                    Some(i) => tally.cases[i] += 1,
                    None => tally.controls += 1,
                }
                tally.sum_y += out.person_time;
                tally.sum_y2 += out.person_time * out.person_time;
            }
            tally
        })
        .collect();
    let total = tallies.iter().fold(Tally::new(n_variants), |acc, t| acc.merge(t));

    let n = n_subjects as f64;
    let freq = |k: u64| k as f64 / n;
    let se = |p: f64| (p * (1.0 - p) / n).sqrt();
    let p_control = freq(total.controls);
    let p_case: Vec<f64> = total.cases.iter().map(|&k| freq(k)).collect();
    let mean_y = total.sum_y / n;
    let se_person_time = if n_subjects > 1 {
        let var = ((total.sum_y2 - n * mean_y * mean_y) / (n - 1.0)).max(0.0);
        (var / n).sqrt()
    } else {
        0.0
    };
    Ok(OracleEstimate {
        se_control: se(p_control),
        se_case: p_case.iter().map(|&p| se(p)).collect(),
        se_person_time,
        components: CohortComponents { p_control, p_case, expected_person_time: mean_y },
        n_subjects,
    })
}

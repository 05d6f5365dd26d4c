use rayon::prelude::*;
use serde::Serialize;

use super::ci::{ci_for_ratio, RatioCounts};
use super::multinomial::sample_multinomial;
use super::plan::{StudyPlan, Target};
use super::{DesignKind, SampleSizeError};
use crate::measures::VeMeasureKind;
use crate::model::StudyHorizon;
use crate::oracle::SubjectSampler;
use crate::rng::{stream_rng, SimRng};

/// Share of degenerate replicates above which a warning is raised.
pub const DEGENERATE_WARNING_SHARE: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrecisionResult {
    pub kind: VeMeasureKind,
    pub estimate_mean: f64,
    /// Mean lower and mean upper VE bounds over non-degenerate replicates.
    pub expected_ci: (f64, f64),
    pub sd_of_estimates: f64,
    pub mean_log_width: f64,
    pub true_ve: f64,
    /// Share of replicate intervals containing `true_ve`.
    pub coverage: f64,
    pub n_sim: usize,
    pub n_degenerate: usize,
    pub degenerate_warning: bool,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy)]
struct Replicate {
    ve: f64,
    lower: f64,
    upper: f64,
    log_width: f64,
}

enum Sampler {
    /// Flattened `[outcome][arm]` cell probabilities.
    Cells(Vec<f64>),
    Subjects { coverage: Vec<f64>, vaccine: SubjectSampler, reference: SubjectSampler },
    Cases { cases: Vec<f64>, controls: Vec<f64>, n_controls: u64 },
}

impl StudyPlan {
    fn sampler(&self) -> Result<Sampler, SampleSizeError> {
        let Target { vaccine: m, reference: r, .. } = self.target;
        Ok(match (self.spec.design, &self.shares) {
            (DesignKind::CohortCrr, _) => Sampler::Cells(self.joint.cells.iter().flatten().copied().collect()),
            (DesignKind::CohortIrr, _) => {
                let rates = self.scenario.rates();
                let h: StudyHorizon = self.scenario.horizon();
                let arms = self.scenario.arms();
                Sampler::Subjects {
                    coverage: self.joint.coverage.clone(),
                    vaccine: SubjectSampler::new(rates, &arms[m], h)?,
                    reference: SubjectSampler::new(rates, &arms[r], h)?,
                }
            }
            (_, Some(shares)) => Sampler::Cases {
                cases: shares.flat_cases(),
                controls: shares.controls.clone(),
                n_controls: self.spec.n_controls(),
            },
            (_, None) => unreachable!("case-based plans always carry shares"),
        })
    }

    fn replicate(&self, sampler: &Sampler, rng: &mut SimRng) -> Option<Replicate> {
        let Target { variant: i, vaccine: m, reference: r } = self.target;
        let n_arms = self.joint.n_arms();
        let counts = match sampler {
            Sampler::Cells(probs) => {
                let n = self.spec.n.unwrap_or(0);
                let cells = sample_multinomial(rng, n, probs);
                let arm_total = |arm: usize| (0..=self.joint.n_variants()).map(|c| cells[c * n_arms + arm]).sum::<u64>();
                RatioCounts::Risk {
                    a: cells[(i + 1) * n_arms + m] as f64,
                    n1: arm_total(m) as f64,
                    c: cells[(i + 1) * n_arms + r] as f64,
                    n0: arm_total(r) as f64,
                }
            }
            Sampler::Subjects { coverage, vaccine, reference } => {
                let n = self.spec.n.unwrap_or(0);
                let sizes = sample_multinomial(rng, n, coverage);
                let mut follow = |s: &SubjectSampler, size: u64| {
                    let (mut events, mut time) = (0u64, 0.0);
                    for _ in 0..size {
                        let out = s.draw(rng);
                        events += u64::from(out.infected_by == Some(i));
                        time += out.person_time;
                    }
                    (events as f64, time)
                };
                let (a, pt1) = follow(vaccine, sizes[m]);
                let (c, pt0) = follow(reference, sizes[r]);
                RatioCounts::Rate { a, pt1, c, pt0 }
            }
            Sampler::Cases { cases, controls, n_controls } => {
                let x = self.spec.cases.unwrap_or(0);
                let drawn_cases = sample_multinomial(rng, x, cases);
                let drawn_controls = sample_multinomial(rng, *n_controls, controls);
                RatioCounts::Odds {
                    a: drawn_cases[i * n_arms + m] as f64,
                    b: drawn_cases[i * n_arms + r] as f64,
                    c: drawn_controls[m] as f64,
                    d: drawn_controls[r] as f64,
                }
            }
        };
        let ci = ci_for_ratio(counts, self.spec.alpha, self.spec.confounder_rho).ok()?;
        let (ve, lower, upper) = ci.to_ve();
        Some(Replicate { ve, lower, upper, log_width: ci.log_width() })
    }

    /// Monte-Carlo precision of the design. Replicate `k` draws from stream
    /// `k` of `seed`, and replicates are combined in index order, so the
    /// result is bitwise reproducible for any thread count.
    pub fn simulate_precision(&self, n_sim: usize, seed: u64) -> Result<PrecisionResult, SampleSizeError> {
        if n_sim == 0 {
            return Err(SampleSizeError::InvalidDesign("n_sim must be at least 1".into()));
        }
        let true_ve = self.true_ve()?;
        let sampler = self.sampler()?;
        let replicates: Vec<Option<Replicate>> = (0..n_sim)
            .into_par_iter()
            .map(|k| self.replicate(&sampler, &mut stream_rng(seed, k as u64)))
            .collect();
        let kept: Vec<Replicate> = replicates.into_iter().flatten().collect();
        let n_degenerate = n_sim - kept.len();
        if kept.is_empty() {
            return Err(SampleSizeError::NoInformation { n_sim });
        }
        let k = kept.len() as f64;
        let mean = |f: fn(&Replicate) -> f64| kept.iter().map(f).sum::<f64>() / k;
        let estimate_mean = mean(|r| r.ve);
        let sd_of_estimates = if kept.len() > 1 {
            (kept.iter().map(|r| (r.ve - estimate_mean).powi(2)).sum::<f64>() / (k - 1.0)).sqrt()
        } else {
            0.0
        };
        let covered = kept.iter().filter(|r| r.lower <= true_ve && true_ve <= r.upper).count();
        let degenerate_warning = n_degenerate as f64 > DEGENERATE_WARNING_SHARE * n_sim as f64;
        if degenerate_warning {
            log::warn!("{n_degenerate} of {n_sim} replicates had an empty cell and were discarded");
        }
        Ok(PrecisionResult {
            kind: self.spec.design.target_kind(),
            estimate_mean,
            expected_ci: (mean(|r| r.lower), mean(|r| r.upper)),
            sd_of_estimates,
            mean_log_width: mean(|r| r.log_width),
            true_ve,
            coverage: covered as f64 / k,
            n_sim,
            n_degenerate,
            degenerate_warning,
            seed,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::Comparison;
    use crate::model::{ArmProfile, EpidemicRates, LeakyProfile};
    use crate::samplesize::DesignSpec;
    use crate::scenario::Scenario;

    fn plan(design: DesignKind, n: u64) -> StudyPlan {
        let s = Scenario::new(
            EpidemicRates::new(vec![0.10, 0.05]).unwrap(),
            vec![ArmProfile::Leaky(LeakyProfile::new(vec![0.4, 0.8]).unwrap())],
            StudyHorizon::new(2.0).unwrap(),
        )
        .unwrap();
        let spec = DesignSpec {
            design,
            n: Some(n),
            cases: Some(n / 10),
            controls_per_case: Some(1.0),
            alpha: 0.05,
            power: 0.8,
            confounder_rho: 0.0,
        };
        StudyPlan::new(&s, &[0.5, 0.5], None, spec, &Comparison::VariantSpecific { variant: 0, vaccine: 1 }).unwrap()
    }

    #[test]
    fn single_replicate_repeats_bitwise() {
        for design in [DesignKind::CohortCrr, DesignKind::CohortIrr, DesignKind::CaseControlOr] {
            let p = plan(design, 2000);
            let a = p.simulate_precision(1, 7).unwrap();
            let b = p.simulate_precision(1, 7).unwrap();
            assert_eq!(format!("{a:?}"), format!("{b:?}"));
            assert_eq!(a.n_sim, 1);
        }
    }

    #[test]
    fn bounds_bracket_the_mean() {
        let r = plan(DesignKind::CohortCrr, 4000).simulate_precision(200, 3).unwrap();
        assert!(r.expected_ci.0 <= r.estimate_mean && r.estimate_mean <= r.expected_ci.1);
        assert!(r.n_degenerate <= r.n_sim);
    }

    #[test]
    fn tiny_design_is_mostly_degenerate() {
        let r = plan(DesignKind::CohortCrr, 4).simulate_precision(200, 1);
        match r {
            Ok(res) => assert!(res.degenerate_warning),
            Err(e) => assert!(matches!(e, SampleSizeError::NoInformation { .. })),
        }
    }
}

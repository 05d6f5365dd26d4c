use serde::Serialize;

use super::ci::{ci_for_ratio, RatioCounts, RatioInterval};
use super::joint::{CaseShares, ScenarioJoint};
use super::mdve::{min_detectable_ve, power_curve, MdveResult, PowerSample};
use super::power::PowerModel;
use super::{DesignKind, DesignSpec, SampleSizeError};
use crate::measures::Comparison;
use crate::scenario::Scenario;
use crate::tnd::TndParams;

/// Variant `i`, vaccine arm `m` and the reference arm it is compared with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Target {
    pub variant: usize,
    pub vaccine: usize,
    pub reference: usize,
}

impl Target {
    pub fn from_comparison(comparison: &Comparison) -> Result<Self, SampleSizeError> {
        match *comparison {
            Comparison::VariantSpecific { variant, vaccine } => Ok(Target { variant, vaccine, reference: 0 }),
            Comparison::RelativeVaccines { variant, vaccine, reference } => Ok(Target { variant, vaccine, reference }),
            Comparison::RelativeVariants { .. } => Err(SampleSizeError::InvalidDesign(
                "sample size is defined for two-arm comparisons only".into(),
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CohortRestriction {
    /// Vaccinated share of the restricted cohort.
    pub coverage: f64,
    /// Subjects left after dropping the other arms and other-variant cases.
    pub n_eff: f64,
    /// `P(C=i | V=reference)`
    pub p0: f64,
    /// `E(Y | V=m)` and `E(Y | V=reference)`
    pub person_time_vaccine: f64,
    pub person_time_reference: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CaseRestriction {
    pub cases_eff: f64,
    pub controls_eff: f64,
    pub r_eff: f64,
    /// Vaccinated share among the restricted controls.
    pub pi0: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "restriction", rename_all = "snake_case")]
pub enum Restriction {
    Cohort(CohortRestriction),
    CaseBased(CaseRestriction),
}

/// A design applied to one comparison within a scenario.
#[derive(Debug, Clone)]
pub struct StudyPlan {
    pub(super) scenario: Scenario,
    pub(super) joint: ScenarioJoint,
    pub(super) shares: Option<CaseShares>,
    pub(super) spec: DesignSpec,
    pub(super) target: Target,
    pub(super) comparison: Comparison,
}

fn degenerate<T>(what: &str) -> Result<T, SampleSizeError> {
    Err(SampleSizeError::Degenerate(format!("{what} is empty for this comparison")))
}

impl StudyPlan {
    /// `tnd` supplies the behavioural layer of a test-negative design and is
    /// required only for that design.
    pub fn new(
        scenario: &Scenario,
        coverage: &[f64],
        tnd: Option<&TndParams>,
        spec: DesignSpec,
        comparison: &Comparison,
    ) -> Result<Self, SampleSizeError> {
        spec.validate()?;
        scenario.check_comparison(comparison)?;
        let target = Target::from_comparison(comparison)?;
        if target.vaccine == target.reference {
            return Err(SampleSizeError::InvalidDesign("vaccine and reference arms coincide".into()));
        }
        let joint = ScenarioJoint::new(scenario, coverage)?;
        let shares = match spec.design {
            DesignKind::CohortCrr | DesignKind::CohortIrr => None,
            DesignKind::CaseControlOr => Some(CaseShares::case_control(&joint)),
            DesignKind::TndInclusiveOr => {
                let params = tnd.ok_or_else(|| {
                    SampleSizeError::InvalidDesign("test-negative design needs TND parameters".into())
                })?;
                Some(CaseShares::test_negative(scenario, &joint, params)?)
            }
        };
        Ok(Self { scenario: scenario.clone(), joint, shares, spec, target, comparison: *comparison })
    }

    pub fn joint(&self) -> &ScenarioJoint {
        &self.joint
    }

    pub fn shares(&self) -> Option<&CaseShares> {
        self.shares.as_ref()
    }

    pub fn spec(&self) -> &DesignSpec {
        &self.spec
    }

    pub fn target(&self) -> Target {
        self.target
    }

    pub fn comparison(&self) -> Comparison {
        self.comparison
    }

    /// Recomputes coverage and size over the subjects the comparison uses.
    pub fn restriction(&self) -> Result<Restriction, SampleSizeError> {
        let Target { variant: i, vaccine: m, reference: r } = self.target;
        match &self.shares {
            None => {
                let j = &self.joint;
                let vacc = j.case_cell(i, m) + j.control_cell(m);
                let refr = j.case_cell(i, r) + j.control_cell(r);
                if vacc <= 0.0 {
                    return degenerate("vaccinated arm");
                }
                if refr <= 0.0 {
                    return degenerate("reference arm");
                }
                let p0 = j.components[r].p_case[i];
                if p0 <= 0.0 {
                    return degenerate("reference case cell");
                }
                let n = self.spec.n.unwrap_or(0) as f64;
                Ok(Restriction::Cohort(CohortRestriction {
                    coverage: vacc / (vacc + refr),
                    n_eff: n * (vacc + refr),
                    p0,
                    person_time_vaccine: j.components[m].expected_person_time,
                    person_time_reference: j.components[r].expected_person_time,
                }))
            }
            Some(shares) => {
                let x = self.spec.cases.unwrap_or(0) as f64;
                let (qm, qr) = (shares.cases[i][m], shares.cases[i][r]);
                let (cm, cr) = (shares.controls[m], shares.controls[r]);
                if qm + qr <= 0.0 {
                    return degenerate("case cell");
                }
                if cm <= 0.0 || cr <= 0.0 {
                    return degenerate("control cell");
                }
                let cases_eff = x * (qm + qr);
                let controls_eff = self.spec.n_controls() as f64 * (cm + cr);
                Ok(Restriction::CaseBased(CaseRestriction {
                    cases_eff,
                    controls_eff,
                    r_eff: controls_eff / cases_eff,
                    pi0: cm / (cm + cr),
                }))
            }
        }
    }

    pub fn power_model(&self) -> Result<PowerModel, SampleSizeError> {
        Ok(match self.restriction()? {
            Restriction::Cohort(c) => {
                let n1 = c.n_eff * c.coverage;
                let n0 = c.n_eff * (1.0 - c.coverage);
                match self.spec.design {
                    DesignKind::CohortIrr => PowerModel::CohortIrr {
                        n1,
                        n0,
                        p0: c.p0,
                        pt1: c.person_time_vaccine,
                        pt0: c.person_time_reference,
                    },
                    _ => PowerModel::CohortCrr { n1, n0, p0: c.p0 },
                }
            }
            Restriction::CaseBased(c) => {
                PowerModel::CaseBased { cases: c.cases_eff, controls: c.controls_eff, pi0: c.pi0 }
            }
        })
    }

    pub fn power_at(&self, ve: f64) -> Result<f64, SampleSizeError> {
        Ok(self.power_model()?.power(ve, self.spec.alpha, self.spec.variance_inflation()))
    }

    pub fn min_detectable_ve(&self) -> Result<MdveResult, SampleSizeError> {
        min_detectable_ve(&self.power_model()?, self.spec.alpha, self.spec.power, self.spec.variance_inflation())
    }

    pub fn power_curve(&self, points: usize) -> Result<Vec<PowerSample>, SampleSizeError> {
        Ok(power_curve(&self.power_model()?, self.spec.alpha, self.spec.variance_inflation(), points))
    }

    /// The VE the design's estimator converges to in this scenario.
    pub fn true_ve(&self) -> Result<f64, SampleSizeError> {
        let t = self.scenario.horizon().t();
        Ok(self.scenario.ve_at(self.spec.design.target_kind(), &self.comparison, t)?)
    }

    /// Expected (non-random) cells of the estimator.
    pub fn expected_cells(&self) -> Result<RatioCounts, SampleSizeError> {
        let Target { variant: i, vaccine: m, reference: r } = self.target;
        let j = &self.joint;
        Ok(match (&self.shares, self.spec.design) {
            (None, design) => {
                let n = self.spec.n.unwrap_or(0) as f64;
                let (a, c) = (n * j.case_cell(i, m), n * j.case_cell(i, r));
                let (n1, n0) = (n * j.coverage[m], n * j.coverage[r]);
                if design == DesignKind::CohortIrr {
                    RatioCounts::Rate {
                        a,
                        pt1: n1 * j.components[m].expected_person_time,
                        c,
                        pt0: n0 * j.components[r].expected_person_time,
                    }
                } else {
                    RatioCounts::Risk { a, n1, c, n0 }
                }
            }
            (Some(s), _) => {
                let x = self.spec.cases.unwrap_or(0) as f64;
                let y = self.spec.n_controls() as f64;
                RatioCounts::Odds {
                    a: x * s.cases[i][m],
                    b: x * s.cases[i][r],
                    c: y * s.controls[m],
                    d: y * s.controls[r],
                }
            }
        })
    }

    /// The CI formula applied to expected cell counts instead of sampled ones.
    pub fn expected_cell_precision(&self) -> Result<RatioInterval, SampleSizeError> {
        ci_for_ratio(self.expected_cells()?, self.spec.alpha, self.spec.confounder_rho)
    }

    /// Random draws one precision run of `n_sim` replicates costs.
    pub fn simulation_draws(&self, n_sim: usize) -> f64 {
        let per = if self.spec.design.is_cohort() {
            self.spec.n.unwrap_or(0) as f64
        } else {
            self.spec.cases.unwrap_or(0) as f64 + self.spec.n_controls() as f64
        };
        per * n_sim as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ArmProfile, EpidemicRates, LeakyProfile, StudyHorizon};
    use approx::assert_relative_eq;

    fn spec(design: DesignKind) -> DesignSpec {
        DesignSpec {
            design,
            n: Some(10_000),
            cases: Some(400),
            controls_per_case: Some(2.0),
            alpha: 0.05,
            power: 0.8,
            confounder_rho: 0.0,
        }
    }

    const VS: Comparison = Comparison::VariantSpecific { variant: 0, vaccine: 1 };

    #[test]
    fn single_variant_single_vaccine_restriction_is_identity() {
        let s = Scenario::new(
            EpidemicRates::new(vec![0.1]).unwrap(),
            vec![ArmProfile::Leaky(LeakyProfile::new(vec![0.5]).unwrap())],
            StudyHorizon::new(2.0).unwrap(),
        )
        .unwrap();
        let plan = StudyPlan::new(&s, &[0.4, 0.6], None, spec(DesignKind::CohortCrr), &VS).unwrap();
        match plan.restriction().unwrap() {
            Restriction::Cohort(c) => {
                assert_relative_eq!(c.coverage, 0.6, max_relative = 1e-14);
                assert_relative_eq!(c.n_eff, 10_000.0, max_relative = 1e-14);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn symmetric_two_vaccine_restriction_halves_coverage() {
        let leaky = ArmProfile::Leaky(LeakyProfile::new(vec![0.5, 0.5]).unwrap());
        let s = Scenario::new(
            EpidemicRates::new(vec![0.1, 0.1]).unwrap(),
            vec![leaky.clone(), leaky],
            StudyHorizon::new(1.0).unwrap(),
        )
        .unwrap();
        let cmp = Comparison::RelativeVaccines { variant: 1, vaccine: 1, reference: 2 };
        let plan = StudyPlan::new(&s, &[0.2, 0.4, 0.4], None, spec(DesignKind::CohortCrr), &cmp).unwrap();
        match plan.restriction().unwrap() {
            Restriction::Cohort(c) => assert_relative_eq!(c.coverage, 0.5, max_relative = 1e-14),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn reference_scenario_cells_by_hand() {
        let s = Scenario::new(
            EpidemicRates::new(vec![0.10, 0.05]).unwrap(),
            vec![ArmProfile::Leaky(LeakyProfile::new(vec![0.4, 0.8]).unwrap())],
            StudyHorizon::new(2.0).unwrap(),
        )
        .unwrap();
        let plan = StudyPlan::new(&s, &[0.4, 0.6], None, spec(DesignKind::CohortCrr), &VS).unwrap();
        // placebo: P(C=0)=e^{-0.3}, P(C=1)=(2/3)(1-e^{-0.3}); vaccine: Λ'=0.08
        let p0c = (-0.3f64).exp();
        let p01 = 2.0 / 3.0 * (1.0 - p0c);
        let p1c = (-0.16f64).exp();
        let p11 = 0.04 / 0.08 * (1.0 - p1c);
        let vacc = 0.6 * (p11 + p1c);
        let refr = 0.4 * (p01 + p0c);
        match plan.restriction().unwrap() {
            Restriction::Cohort(c) => {
                assert_relative_eq!(c.coverage, vacc / (vacc + refr), max_relative = 1e-12);
                assert_relative_eq!(c.n_eff, 10_000.0 * (vacc + refr), max_relative = 1e-12);
                assert_relative_eq!(c.p0, p01, max_relative = 1e-12);
            }
            other => panic!("{other:?}"),
        }
        let cc = StudyPlan::new(&s, &[0.4, 0.6], None, spec(DesignKind::CaseControlOr), &VS).unwrap();
        let infected = 0.4 * (1.0 - p0c) + 0.6 * (1.0 - p1c);
        let uninfected = 0.4 * p0c + 0.6 * p1c;
        match cc.restriction().unwrap() {
            Restriction::CaseBased(c) => {
                assert_relative_eq!(c.cases_eff, 400.0 * (0.6 * p11 + 0.4 * p01) / infected, max_relative = 1e-12);
                assert_relative_eq!(c.controls_eff, 800.0, max_relative = 1e-12);
                assert_relative_eq!(c.pi0, 0.6 * p1c / uninfected, max_relative = 1e-12);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn relative_variants_and_missing_tnd_rejected() {
        let s = Scenario::new(
            EpidemicRates::new(vec![0.10, 0.05]).unwrap(),
            vec![ArmProfile::Leaky(LeakyProfile::new(vec![0.4, 0.8]).unwrap())],
            StudyHorizon::new(2.0).unwrap(),
        )
        .unwrap();
        let rv = Comparison::RelativeVariants { variant: 0, other: 1, vaccine: 1 };
        assert!(StudyPlan::new(&s, &[0.5, 0.5], None, spec(DesignKind::CohortCrr), &rv).is_err());
        assert!(StudyPlan::new(&s, &[0.5, 0.5], None, spec(DesignKind::TndInclusiveOr), &VS).is_err());
    }

    #[test]
    fn empty_reference_arm_is_degenerate() {
        let s = Scenario::new(
            EpidemicRates::new(vec![0.10]).unwrap(),
            vec![ArmProfile::Leaky(LeakyProfile::new(vec![0.4]).unwrap())],
            StudyHorizon::new(2.0).unwrap(),
        )
        .unwrap();
        let plan = StudyPlan::new(&s, &[0.0, 1.0], None, spec(DesignKind::CohortCrr), &VS).unwrap();
        assert!(matches!(plan.restriction(), Err(SampleSizeError::Degenerate(_))));
        assert!(plan.expected_cell_precision().is_err());
    }
}

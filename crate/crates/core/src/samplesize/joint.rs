use serde::Serialize;

use crate::model::{CohortComponents, ModelError};
use crate::scenario::Scenario;
use crate::tnd::{expected_counts, TndExpectedCounts, TndParams, TndSampling};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioJoint {
    /// `P(C=c, V=m)` indexed `[c][m]`; outcome 0 is "uninfected", outcome
    /// `i+1` is infection by variant `i`.
    pub cells: Vec<Vec<f64>>,
    pub coverage: Vec<f64>,
    pub components: Vec<CohortComponents>,
}

impl ScenarioJoint {
    /// `coverage` is `P(V=m)` per arm, placebo first.
    pub fn new(scenario: &Scenario, coverage: &[f64]) -> Result<Self, ModelError> {
        if coverage.len() != scenario.n_arms() {
            return Err(ModelError::Dimension { expected: scenario.n_arms(), found: coverage.len() });
        }
        if let Some(p) = coverage.iter().find(|p| !(p.is_finite() && (0.0..=1.0).contains(*p))) {
            return Err(ModelError::InvalidInput(format!("coverage must lie in [0, 1], got {p}")));
        }
        let total: f64 = coverage.iter().sum();
        if (total - 1.0).abs() > crate::model::MIXTURE_TOLERANCE {
            return Err(ModelError::InvalidInput(format!("coverage sums to {total}, expected 1")));
        }
        let components = scenario
            .all_components()
            .map_err(|e| ModelError::InvalidInput(e.to_string()))?;
        let n_outcomes = scenario.n_variants() + 1;
        let cells = (0..n_outcomes)
            .map(|c| {
                components
                    .iter()
                    .zip(coverage)
                    .map(|(comp, &cov)| {
                        cov * if c == 0 { comp.p_control } else { comp.p_case[c - 1] }
                    })
                    .collect()
            })
            .collect();
        Ok(Self { cells, coverage: coverage.to_vec(), components })
    }

    pub fn n_arms(&self) -> usize {
        self.coverage.len()
    }

    pub fn n_variants(&self) -> usize {
        self.cells.len() - 1
    }

    pub fn total(&self) -> f64 {
        self.cells.iter().flatten().sum()
    }

    /// `P(C=i, V=m)` for variant `i`.
    pub fn case_cell(&self, variant: usize, arm: usize) -> f64 {
        self.cells[variant + 1][arm]
    }

    /// `P(C=0, V=m)`
    pub fn control_cell(&self, arm: usize) -> f64 {
        self.cells[0][arm]
    }

    /// `P(V=m, C=i | C≠0)`
    pub fn case_conditional(&self, variant: usize, arm: usize) -> f64 {
        let infected: f64 = self.cells[1..].iter().flatten().sum();
        self.case_cell(variant, arm) / infected
    }

    /// `P(V=m | C=0)`
    pub fn control_conditional(&self, arm: usize) -> f64 {
        let uninfected: f64 = self.cells[0].iter().sum();
        self.control_cell(arm) / uninfected
    }
}

/// Where the cases and the controls of a case-based design come from.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CaseShares {
    /// Share of all cases by `[variant][arm]`, summing to 1.
    pub cases: Vec<Vec<f64>>,
    /// Share of all controls by arm, summing to 1.
    pub controls: Vec<f64>,
}

impl CaseShares {
    /// Classic case-control: cases from `P(V, C=i | C≠0)`, controls from the
    /// uninfected, `P(V | C=0)`.
    pub fn case_control(joint: &ScenarioJoint) -> Self {
        let cases = (0..joint.n_variants())
            .map(|i| (0..joint.n_arms()).map(|m| joint.case_conditional(i, m)).collect())
            .collect();
        let controls = (0..joint.n_arms()).map(|m| joint.control_conditional(m)).collect();
        Self { cases, controls }
    }

    /// Test-negative design with inclusive sampling: cases and controls in
    /// proportion to the expected TND counts.
    pub fn test_negative(
        scenario: &Scenario,
        joint: &ScenarioJoint,
        params: &TndParams,
    ) -> Result<Self, ModelError> {
        let params = TndParams { sampling: TndSampling::Inclusive, ..params.clone() };
        let counts = expected_counts(&params, &joint.components, scenario.horizon())?;
        Ok(Self::from_counts(&counts))
    }

    pub fn from_counts(counts: &TndExpectedCounts) -> Self {
        let case_total: f64 = counts.cases.iter().flatten().sum();
        let control_total: f64 = counts.controls.iter().sum();
        Self {
            cases: counts
                .cases
                .iter()
                .map(|row| row.iter().map(|c| c / case_total).collect())
                .collect(),
            controls: counts.controls.iter().map(|c| c / control_total).collect(),
        }
    }

    pub fn flat_cases(&self) -> Vec<f64> {
        self.cases.iter().flatten().copied().collect()
    }
}

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use super::ci::z_two_sided;

/// Normal-approximation power of each design as a function of the true VE.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum PowerModel {
    /// Two-proportion test with pooled variance under the null; `n1`
    /// vaccinated subjects with risk `(1-VE) p0`, `n0` reference subjects with
    /// risk `p0`.
    CohortCrr { n1: f64, n0: f64, p0: f64 },
    /// Wald test on the log rate ratio, `Var = 1/E[a] + 1/E[c]`. Person-time
    /// per subject is fixed at `pt1` and `pt0`.
    CohortIrr { n1: f64, n0: f64, p0: f64, pt1: f64, pt0: f64 },
    /// Wald test on the log odds ratio with `Var = 1/a+1/b+1/c+1/d` on the
    /// expected cells; `pi0` is the vaccinated share among controls.
    CaseBased { cases: f64, controls: f64, pi0: f64 },
}

fn phi(x: f64) -> f64 {
    Normal::standard().cdf(x)
}

/// Two-sided power of a Wald test with effect `delta` and standard error `se`.
fn wald_power(delta: f64, se: f64, z: f64) -> f64 {
    if !se.is_finite() {
        return 2.0 * phi(-z);
    }
    let d = delta.abs() / se;
    phi(d - z) + phi(-d - z)
}

impl PowerModel {
    /// Power of the two-sided level-`alpha` test of `VE = 0` when the true VE
    /// is `ve`; `vif` multiplies every variance.
    pub fn power(&self, ve: f64, alpha: f64, vif: f64) -> f64 {
        let z = z_two_sided(alpha);
        let psi = 1.0 - ve;
        match *self {
            PowerModel::CohortCrr { n1, n0, p0 } => {
                let p1 = psi * p0;
                let pooled = (n1 * p1 + n0 * p0) / (n1 + n0);
                let s0 = (vif * pooled * (1.0 - pooled) * (1.0 / n1 + 1.0 / n0)).sqrt();
                let s1 = (vif * (p1 * (1.0 - p1) / n1 + p0 * (1.0 - p0) / n0)).sqrt();
                let delta = (p0 - p1).abs();
                if s1 == 0.0 {
                    return if delta > z * s0 { 1.0 } else { 0.0 };
                }
                phi((delta - z * s0) / s1) + phi((-delta - z * s0) / s1)
            }
            PowerModel::CohortIrr { n1, n0, p0, pt1, pt0 } => {
                let a = psi * p0 / pt0 * n1 * pt1;
                let c = n0 * p0;
                wald_power(psi.ln(), (vif * (1.0 / a + 1.0 / c)).sqrt(), z)
            }
            PowerModel::CaseBased { cases, controls, pi0 } => {
                let pi1 = psi * pi0 / (1.0 - pi0 + psi * pi0);
                let var = 1.0 / (cases * pi1)
                    + 1.0 / (cases * (1.0 - pi1))
                    + 1.0 / (controls * pi0)
                    + 1.0 / (controls * (1.0 - pi0));
                wald_power(psi.ln(), (vif * var).sqrt(), z)
            }
        }
    }
}

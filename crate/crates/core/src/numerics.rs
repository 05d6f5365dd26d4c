//! Small, numerically careful helpers shared by the closed forms.

/// Below this magnitude `1 - exp(-x)` is replaced by its two-term series.
pub const SERIES_CUTOFF: f64 = 1e-12;

/// `1 - exp(-x)` without cancellation for small `x`.
#[inline]
pub fn one_minus_exp_neg(x: f64) -> f64 {
    if x.abs() < SERIES_CUTOFF {
        x - 0.5 * x * x
    } else {
        -(-x).exp_m1()
    }
}

/// `(1 - exp(-x)) / x`, continuous at zero where it equals 1.
#[inline]
pub fn exposure_fraction(x: f64) -> f64 {
    if x.abs() < SERIES_CUTOFF {
        1.0 - 0.5 * x
    } else {
        one_minus_exp_neg(x) / x
    }
}

/// Restricted mean of an exponential lifetime with `rate`, censored at `t`:
/// `(1 - exp(-rate t)) / rate`, equal to `t` when `rate == 0`.
#[inline]
pub fn restricted_mean(rate: f64, t: f64) -> f64 {
    t * exposure_fraction(rate * t)
}

/// `ln((exp(x) - 1) / x)` for `x >= 0`, finite for arbitrarily large `x`.
pub fn ln_growth_fraction(x: f64) -> f64 {
    debug_assert!(x >= 0.0);
    if x < SERIES_CUTOFF {
        (0.5 * x).ln_1p()
    } else if x < 30.0 {
        (x.exp_m1() / x).ln()
    } else {
        x + (-(-x).exp()).ln_1p() - x.ln()
    }
}

/// `(exp(a) - 1) / (exp(b) - 1)` scaled by `b / a`, i.e. the ratio of
/// growth fractions, computed in log space.
pub fn growth_fraction_ratio(a: f64, b: f64) -> f64 {
    (ln_growth_fraction(a) - ln_growth_fraction(b)).exp()
}

/// Relative closeness used by tests and invariance checks.
pub fn rel_diff(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

use serde::Serialize;

use super::power::PowerModel;
use super::SampleSizeError;

const BISECTION_TOLERANCE: f64 = 1e-12;
const MAX_ITERATIONS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MdveResult {
    pub ve: f64,
    pub achieved_power: f64,
    pub target_power: f64,
    /// The VE at which the power curve peaks; log-ratio tests lose power as
    /// VE approaches 1 because the vaccinated cell empties.
    pub peak_ve: f64,
    pub peak_power: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PowerSample {
    pub ve: f64,
    pub power: f64,
}

/// Scan points on `(0, 1)`: a uniform grid plus points crowding toward 1.
fn scan_grid() -> Vec<f64> {
    let mut grid: Vec<f64> = (1..512).map(|k| k as f64 / 512.0).collect();
    grid.extend((12..=48).map(|k| 1.0 - 10f64.powf(-(k as f64) / 4.0)));
    grid.sort_by(f64::total_cmp);
    grid
}

fn golden_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..MAX_ITERATIONS {
        if b - a < BISECTION_TOLERANCE {
            break;
        }
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    if fc >= fd {
        c
    } else {
        d
    }
}

/// Location and height of the power peak on `(0, 1)`.
fn power_peak(f: &impl Fn(f64) -> f64) -> (f64, f64) {
    let grid = scan_grid();
    let values: Vec<f64> = grid.iter().map(|&v| f(v)).collect();
    let best = (0..grid.len()).fold(0, |b, k| if values[k] > values[b] { k } else { b });
    let lo = if best == 0 { 0.0 } else { grid[best - 1] };
    let hi = grid.get(best + 1).copied().unwrap_or(1.0);
    let refined = golden_max(f, lo, hi);
    let fr = f(refined);
    if fr > values[best] {
        (refined, fr)
    } else {
        (grid[best], values[best])
    }
}

/// Smallest VE in `(0, 1)` at which the design reaches `target` power.
///
/// Power rises from `α` at VE = 0 up to a peak; the MDVE is found by
/// bisection on `[0, peak]` and the upper end of the final bracket is
/// returned, so the reported VE always attains the target.
pub fn min_detectable_ve(
    model: &PowerModel,
    alpha: f64,
    target: f64,
    vif: f64,
) -> Result<MdveResult, SampleSizeError> {
    if !(target > alpha && target < 1.0) {
        return Err(SampleSizeError::InvalidDesign(format!(
            "target power {target} must lie in (alpha, 1)"
        )));
    }
    let f = |ve: f64| model.power(ve, alpha, vif);
    let (peak_ve, peak_power) = power_peak(&f);
    if !(peak_power >= target) {
        return Err(SampleSizeError::Unattainable { max_power: peak_power });
    }
    let (mut lo, mut hi) = (0.0, peak_ve);
    let mut iterations = 0;
    while hi - lo > BISECTION_TOLERANCE && iterations < MAX_ITERATIONS {
        let mid = 0.5 * (lo + hi);
        if f(mid) >= target {
            hi = mid;
        } else {
            lo = mid;
        }
        iterations += 1;
    }
    Ok(MdveResult { ve: hi, achieved_power: f(hi), target_power: target, peak_ve, peak_power, iterations })
}

/// Power at `points` evenly spaced VE values in `[0, 1)`.
pub fn power_curve(model: &PowerModel, alpha: f64, vif: f64, points: usize) -> Vec<PowerSample> {
    (0..points)
        .map(|k| {
            let ve = k as f64 / points as f64;
            PowerSample { ve, power: model.power(ve, alpha, vif) }
        })
        .collect()
}

//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any
//! failure.

mod common;

use std::time::{Duration, Instant};

use rand::Rng;
use rand_distr::{Binomial, Distribution};

use common::*;
use vecalc_core::hazard::{relative_ve_varying_hazard, PiecewiseHazard, TwoVariantProtection};
use vecalc_core::oracle::simulate_cohort_oracle;
use vecalc_core::samplesize::{DesignKind, DesignSpec, Restriction, StudyPlan};
use vecalc_core::tnd::{expected_counts, tnd_ve, TndParams, TndSampling};
use vecalc_core::{ArmProfile, Comparison, LimitRegime, Scenario, VeMeasureKind, VeNumber};

use VeMeasureKind::{Crr, Irr, Or};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn grid() -> Vec<f64> {
    (1..=100).map(|k| k as f64 / 10.0).collect()
}

fn theta(s: &Scenario, arm: usize, variant: usize) -> f64 {
    match &s.arms()[arm] {
        ArmProfile::Leaky(p) => p.theta(variant),
        _ => 1.0,
    }
}

fn overall(s: &Scenario, arm: usize) -> f64 {
    let l = s.rates().lambdas();
    l.iter().enumerate().map(|(i, li)| theta(s, arm, i) * li).sum::<f64>() / l.iter().sum::<f64>()
}

fn distribution_closure() -> Outcome {
    let start = Instant::now();
    let mut r = rng(1);
    let mut worst = 0.0_f64;
    let mut arms = 0;
    for _ in 0..200 {
        let s = random_scenario(&mut r);
        for c in s.all_components().unwrap() {
            worst = worst.max((c.total_probability() - 1.0).abs());
            arms += 1;
        }
    }
    let elapsed = start.elapsed();
    outcome(
        worst < 1e-10 && elapsed < Duration::from_secs(1),
        format!("200 scenarios, {arms} arms, max |sum - 1| = {worst:.2e}, {elapsed:.2?}"),
    )
}

/// Every z-score of an oracle run against the closed form: binomial standard
/// errors at the closed-form probabilities, the sample standard error for
/// person-time.
fn z_scores(est: &vecalc_core::oracle::OracleEstimate, closed: &vecalc_core::CohortComponents) -> Vec<(String, f64)> {
    let n = est.n_subjects as f64;
    let z = |emp: f64, exact: f64, se: f64| if se > 0.0 { (emp - exact).abs() / se } else if (emp - exact).abs() <= 1e-12 * (1.0 + exact.abs()) { 0.0 } else { f64::INFINITY };
    let binomial = |p: f64| (p * (1.0 - p) / n).sqrt();
    let mut out = vec![("p_control".to_string(), z(est.components.p_control, closed.p_control, binomial(closed.p_control)))];
    for (i, (emp, exact)) in est.components.p_case.iter().zip(&closed.p_case).enumerate() {
        out.push((format!("p_case[{i}]"), z(*emp, *exact, binomial(*exact))));
    }
    out.push((
        "person_time".to_string(),
        z(est.components.expected_person_time, closed.expected_person_time, est.se_person_time),
    ));
    out
}

fn monte_carlo_agreement() -> Outcome {
    let start = Instant::now();
    let mut r = rng(2);
    let mut scores = Vec::new();
    let mut arms = 0;
    for k in 0..20 {
        let s = random_scenario(&mut r);
        for (a, arm) in s.arms().iter().enumerate() {
            let est = simulate_cohort_oracle(s.rates(), arm, s.horizon(), 1_000_000, 1000 + 10 * k + a as u64).unwrap();
            let closed = s.components(a, s.horizon().t()).unwrap();
            assert_eq!(est.max_z(&closed), z_scores(&est, &closed).iter().map(|z| z.1).fold(0.0, f64::max));
            for (name, z) in z_scores(&est, &closed) {
                scores.push((format!("scenario {k} arm {a} {name}"), z));
            }
            arms += 1;
        }
    }
    let elapsed = start.elapsed();
    let (worst_name, worst) = scores.iter().cloned().fold((String::new(), 0.0), |acc, s| if s.1 > acc.1 { s } else { acc });
    let over = scores.iter().filter(|s| s.1 > 3.0).count();
    outcome(
        worst <= 3.0 && elapsed < Duration::from_secs(60),
        format!(
            "20 scenarios, {arms} arms at n = 1e6, {} z-scores, {over} above 3 (about {:.1} expected by chance), max |z| = {worst:.3} at {worst_name}, {elapsed:.2?}",
            scores.len(),
            0.0027 * scores.len() as f64
        ),
    )
}

fn leaky_ordering() -> Outcome {
    let mut r = rng(3);
    let mut violations = 0;
    let mut irr_spread = 0.0_f64;
    let mut curves = 0;
    for sc in 0..50 {
        let s = if sc == 0 { leaky_reference() } else { random_leaky_scenario(&mut r) };
        for variant in 0..s.n_variants() {
            for vaccine in 1..s.n_arms() {
                let cmp = Comparison::VariantSpecific { variant, vaccine };
                let [c, i, o] = [Crr, Irr, Or].map(|k| s.curve(k, &cmp, &grid(), 1e-9).unwrap().values);
                irr_spread = irr_spread.max(i.iter().cloned().fold(f64::MIN, f64::max) - i.iter().cloned().fold(f64::MAX, f64::min));
                violations += (0..c.len()).filter(|&k| !(c[k] < i[k] && i[k] < o[k])).count();
                curves += 1;
            }
        }
    }
    outcome(
        violations == 0 && irr_spread < 1e-12,
        format!("{curves} leaky curves on t = 0.1..10, {violations} ordering violations, IRR spread {irr_spread:.1e}"),
    )
}

fn relative_variant_invariance() -> Outcome {
    let mut r = rng(4);
    let mut worst = 0.0_f64;
    for sc in 0..50 {
        let s = if sc == 0 { leaky_reference() } else { random_leaky_scenario(&mut r) };
        if s.n_variants() < 2 {
            continue;
        }
        for vaccine in 1..s.n_arms() {
            let want = 1.0 - theta(&s, vaccine, 0) / theta(&s, vaccine, 1);
            let cmp = Comparison::RelativeVariants { variant: 0, other: 1, vaccine };
            for kind in VeMeasureKind::ALL {
                for v in s.curve(kind, &cmp, &grid(), 1e-9).unwrap().values {
                    worst = worst.max((v - want).abs());
                }
            }
        }
    }
    let h = PiecewiseHazard::new(vec![0.0, 1.0], vec![0.05, 0.2]).unwrap();
    let vac = TwoVariantProtection { theta_i: 0.4, theta_j: 0.8 };
    let mut worst_hazard = 0.0_f64;
    for t in grid() {
        let v = relative_ve_varying_hazard(&h, 2.0, vac, TwoVariantProtection::PLACEBO, t).unwrap();
        worst_hazard = worst_hazard.max((v - 0.5).abs());
    }
    outcome(
        worst < 1e-12 && worst_hazard < 1e-10,
        format!("constant-rate max dev {worst:.1e}; piecewise hazard (0.05 then 0.2, f = 2) max dev {worst_hazard:.1e}"),
    )
}

/// CRR of the two-variant all-or-none profile for variant 1, expanded by
/// hand over its four strata.
fn aon_crr_by_hand(t: f64) -> f64 {
    let (l1, l2) = (0.10_f64, 0.05_f64);
    let open = |rate: f64, share: f64| share * l1 / rate * (1.0 - (-rate * t).exp());
    let vaccinated = open(l1 + l2, 0.4) + open(l1, 0.2);
    let placebo = l1 / (l1 + l2) * (1.0 - (-(l1 + l2) * t).exp());
    1.0 - vaccinated / placebo
}

fn all_or_none_headline() -> Outcome {
    let s = aon_reference();
    let cmp = Comparison::VariantSpecific { variant: 0, vaccine: 1 };
    let small = s.ve_at(Crr, &cmp, 1e-9).unwrap();
    let at2 = s.ve_at(Crr, &cmp, 2.0).unwrap();
    let oracle2 = aon_crr_by_hand(2.0);
    let curve = s.curve(Crr, &cmp, &grid(), 1e-9).unwrap();
    let single = scenario(&[0.2], vec![all_or_none(1, &[(0, 0.7), (1, 0.3)])], 1.0);
    let single_dev = grid()
        .iter()
        .map(|&t| (single.ve_at(Crr, &cmp, t).unwrap() - 0.3).abs())
        .fold(0.0_f64, f64::max);
    let pass = (small - 0.4).abs() < 1e-6
        && (at2 - oracle2).abs() < 1e-6
        && (aon_crr_by_hand(1e-9) - 0.4).abs() < 1e-6
        && curve.spread() > 1e-3
        && single_dev < 1e-12;
    outcome(
        pass,
        format!(
            "VE(1e-9) = {small:.6}, VE(2) = {at2:.6} (hand expansion {oracle2:.6}, printed reference 0.390175), spread {:.4}, single-variant max dev {single_dev:.1e}",
            curve.spread()
        ),
    )
}

fn tnd_identities() -> Outcome {
    let mut r = rng(6);
    let mut worst_id = 0.0_f64;
    let mut worst_scale = 0.0_f64;
    let mut pairs = 0;
    for _ in 0..200 {
        let s = random_scenario(&mut r);
        let comps = s.all_components().unwrap();
        let arms = s.n_arms();
        let cov: Vec<f64> = (0..arms).map(|_| r.random_range(0.1..1.0)).collect();
        let total: f64 = cov.iter().sum();
        for (sampling, kind) in [(TndSampling::Inclusive, Crr), (TndSampling::Density, Irr)] {
            let p = TndParams {
                population: r.random_range(1e3..1e6),
                rate_offtarget: r.random_range(0.01..1.0),
                p_symptom_case: (0..s.n_variants()).map(|_| r.random_range(0.05..1.0)).collect(),
                p_symptom_offtarget: r.random_range(0.05..1.0),
                p_seek_care: (0..arms).map(|_| r.random_range(0.05..1.0)).collect(),
                p_vaccinated: cov.iter().map(|c| c / total).collect(),
                sampling,
            };
            let mut q = p.clone();
            let f = r.random_range(0.1..1.0);
            q.p_symptom_case.iter_mut().for_each(|x| *x *= f);
            q.p_symptom_offtarget *= r.random_range(0.1..1.0);
            q.p_seek_care.iter_mut().for_each(|x| *x *= r.random_range(0.1..1.0));
            let cp = expected_counts(&p, &comps, s.horizon()).unwrap();
            let cq = expected_counts(&q, &comps, s.horizon()).unwrap();
            for i in 0..s.n_variants() {
                for m in 1..arms {
                    let cohort = s.ve_at(kind, &Comparison::VariantSpecific { variant: i, vaccine: m }, s.horizon().t());
                    if let (Ok(a), Ok(b), Ok(c)) = (tnd_ve(&cp, i, m), cohort, tnd_ve(&cq, i, m)) {
                        worst_id = worst_id.max((a - b).abs());
                        worst_scale = worst_scale.max((a - c).abs());
                        pairs += 1;
                    }
                }
            }
        }
    }
    outcome(
        worst_id < 1e-12 && worst_scale < 1e-12,
        format!("{pairs} comparisons; identity max dev {worst_id:.1e}, rescaling max dev {worst_scale:.1e}"),
    )
}

fn limit_endpoints() -> Outcome {
    let mut r = rng(7);
    let mut scenarios = vec![leaky_reference()];
    scenarios.extend((0..30).map(|_| random_leaky_scenario(&mut r)));
    let (mut small_dev, mut large_dev) = (0.0_f64, 0.0_f64);
    let (mut or_one, mut divergent) = (0, 0);
    let mut divergence_ok = true;
    for s in &scenarios {
        let lambda = s.rates().total();
        for variant in 0..s.n_variants() {
            for vaccine in 1..s.n_arms() {
                for reference in 0..s.n_arms() {
                    if reference == vaccine {
                        continue;
                    }
                    let cmp = if reference == 0 {
                        Comparison::VariantSpecific { variant, vaccine }
                    } else {
                        Comparison::RelativeVaccines { variant, vaccine, reference }
                    };
                    let (tm, tr) = (overall(s, vaccine), overall(s, reference));
                    // the slowest exponential gap decides how far out the curve must go
                    let gap = [tm, tr, (tm - tr).abs(), 1.0 - tm.max(tr)]
                        .into_iter()
                        .filter(|g| *g > 1e-6)
                        .fold(f64::INFINITY, f64::min);
                    if !gap.is_finite() || gap < 1e-3 {
                        continue;
                    }
                    let t_end = 25.0 / (gap * lambda);
                    let times = vecalc_core::time_grid(1e-9, t_end, 40, vecalc_core::GridSpacing::Log).unwrap();
                    for kind in VeMeasureKind::ALL {
                        let curve = s.curve(kind, &cmp, &times, 1e-9).unwrap();
                        let (first, last) = (curve.values[0], *curve.values.last().unwrap());
                        if let Ok(VeNumber::Finite(lim)) = s.limit(kind, &cmp, LimitRegime::SmallLambdaT) {
                            small_dev = small_dev.max((first - lim).abs());
                        }
                        match s.limit(kind, &cmp, LimitRegime::LargeLambdaT) {
                            Ok(VeNumber::Finite(lim)) => {
                                large_dev = large_dev.max((last - lim).abs());
                                if kind == Or && lim == 1.0 {
                                    or_one += 1;
                                }
                            }
                            Ok(VeNumber::NegativeInfinity) => {
                                divergent += 1;
                                let decreasing = curve.values.windows(2).skip(20).all(|w| w[1] <= w[0]);
                                divergence_ok &= decreasing && last < -1e3;
                            }
                            Err(_) => {}
                        }
                    }
                }
            }
        }
    }
    outcome(
        small_dev < 1e-6 && large_dev < 1e-3 && or_one > 0 && divergent > 0 && divergence_ok,
        format!(
            "small-t max dev {small_dev:.1e}, large-Λt max dev {large_dev:.1e}, {or_one} OR→1 cases, {divergent} divergent cases ({})",
            if divergence_ok { "all diverge" } else { "some do not diverge" }
        ),
    )
}

fn design(kind: DesignKind, n: u64, x: u64, rho: f64) -> DesignSpec {
    DesignSpec {
        design: kind,
        n: Some(n),
        cases: Some(x),
        controls_per_case: Some(1.0),
        alpha: 0.05,
        power: 0.8,
        confounder_rho: rho,
    }
}

fn tnd_reference() -> TndParams {
    TndParams {
        population: 1e5,
        rate_offtarget: 0.3,
        p_symptom_case: vec![0.5, 0.5],
        p_symptom_offtarget: 0.4,
        p_seek_care: vec![0.6, 0.6],
        p_vaccinated: vec![0.5, 0.5],
        sampling: TndSampling::Inclusive,
    }
}

fn two_arm_plan(spec: DesignSpec) -> StudyPlan {
    let s = scenario(&[0.10, 0.05], vec![leaky(&[0.4, 0.8])], 2.0);
    let cmp = Comparison::VariantSpecific { variant: 0, vaccine: 1 };
    StudyPlan::new(&s, &[0.5, 0.5], Some(&tnd_reference()), spec, &cmp).unwrap()
}

/// Rejection rate of the pooled two-proportion test at `ve`.
fn simulated_crr_power(plan: &StudyPlan, ve: f64, reps: usize, seed: u64) -> f64 {
    let Restriction::Cohort(c) = plan.restriction().unwrap() else { unreachable!() };
    let n1 = (c.n_eff * c.coverage).round() as u64;
    let n0 = (c.n_eff * (1.0 - c.coverage)).round() as u64;
    let z = z_quantile(plan.spec().alpha);
    let mut r = rng(seed);
    let (b1, b0) = (Binomial::new(n1, (1.0 - ve) * c.p0).unwrap(), Binomial::new(n0, c.p0).unwrap());
    let rejected = (0..reps)
        .filter(|_| {
            let (a, b) = (b1.sample(&mut r) as f64, b0.sample(&mut r) as f64);
            let pooled = (a + b) / (n1 + n0) as f64;
            let se = (pooled * (1.0 - pooled) * (1.0 / n1 as f64 + 1.0 / n0 as f64)).sqrt();
            se > 0.0 && ((b / n0 as f64 - a / n1 as f64) / se).abs() > z
        })
        .count();
    rejected as f64 / reps as f64
}

/// Rejection rate of the Wald test on the log odds ratio at `ve`, drawing
/// cases by their vaccinated share and controls by their vaccinated share.
fn simulated_or_power(plan: &StudyPlan, ve: f64, reps: usize, seed: u64) -> f64 {
    let Restriction::CaseBased(c) = plan.restriction().unwrap() else { unreachable!() };
    let psi = 1.0 - ve;
    let pi1 = psi * c.pi0 / (1.0 - c.pi0 + psi * c.pi0);
    let (x, y) = (c.cases_eff.round() as u64, c.controls_eff.round() as u64);
    let z = z_quantile(plan.spec().alpha);
    let mut r = rng(seed);
    let (bc, bk) = (Binomial::new(x, pi1).unwrap(), Binomial::new(y, c.pi0).unwrap());
    let rejected = (0..reps)
        .filter(|_| {
            let (a, cc) = (bc.sample(&mut r) as f64, bk.sample(&mut r) as f64);
            let (b, d) = (x as f64 - a, y as f64 - cc);
            if a == 0.0 || b == 0.0 || cc == 0.0 || d == 0.0 {
                return false;
            }
            let log_or = (a * d / (b * cc)).ln();
            (log_or / (1.0 / a + 1.0 / b + 1.0 / cc + 1.0 / d).sqrt()).abs() > z
        })
        .count();
    rejected as f64 / reps as f64
}

fn sample_size() -> Outcome {
    let start = Instant::now();
    let mut notes = Vec::new();
    let mut pass = true;

    // monotone in n, x and ρ
    let mut monotone = true;
    for kind in [DesignKind::CohortCrr, DesignKind::CohortIrr, DesignKind::CaseControlOr, DesignKind::TndInclusiveOr] {
        let sizes = [500u64, 1_000, 2_000, 4_000, 8_000];
        let by_size: Vec<f64> = sizes
            .iter()
            .map(|&k| two_arm_plan(design(kind, 4 * k, k / 2, 0.0)).min_detectable_ve().unwrap().ve)
            .collect();
        let by_rho: Vec<f64> = [0.0, 0.2, 0.4, 0.6, 0.8]
            .iter()
            .map(|&rho| two_arm_plan(design(kind, 8_000, 1_000, rho)).min_detectable_ve().unwrap().ve)
            .collect();
        monotone &= by_size.windows(2).all(|w| w[1] < w[0]) && by_rho.windows(2).all(|w| w[1] > w[0]);
    }
    pass &= monotone;
    notes.push(format!("monotone {}", if monotone { "yes" } else { "no" }));

    // analytic power at the returned MDVE
    let mut power_dev = 0.0_f64;
    for kind in [DesignKind::CohortCrr, DesignKind::CohortIrr, DesignKind::CaseControlOr, DesignKind::TndInclusiveOr] {
        for k in [300u64, 1_000, 5_000] {
            let p = two_arm_plan(design(kind, 4 * k, k, 0.0));
            let m = p.min_detectable_ve().unwrap();
            power_dev = power_dev.max((p.power_at(m.ve).unwrap() - 0.8).abs());
        }
    }
    pass &= power_dev < 1e-6;
    notes.push(format!("power dev {power_dev:.1e}"));

    // brute-force rejection rate at the MDVE
    let cohort = two_arm_plan(design(DesignKind::CohortCrr, 2_174, 1, 0.0));
    let cohort_mdve = cohort.min_detectable_ve().unwrap().ve;
    let crr_rate = simulated_crr_power(&cohort, cohort_mdve, 10_000, 81);
    let cc = two_arm_plan(design(DesignKind::CaseControlOr, 2, 400, 0.0));
    let cc_mdve = cc.min_detectable_ve().unwrap().ve;
    let or_rate = simulated_or_power(&cc, cc_mdve, 10_000, 82);
    pass &= (crr_rate - 0.8).abs() <= 0.02 && (or_rate - 0.8).abs() <= 0.02;
    notes.push(format!(
        "rejection at MDVE: cohort {crr_rate:.4} (MDVE {cohort_mdve:.4}), case-control {or_rate:.4} (MDVE {cc_mdve:.4})"
    ));

    // interval coverage on the leaky reference scenario
    let mut coverages = Vec::new();
    for (kind, n, x) in [
        (DesignKind::CohortCrr, 20_000, 1),
        (DesignKind::CohortIrr, 2_000, 1),
        (DesignKind::CaseControlOr, 2, 1_000),
        (DesignKind::TndInclusiveOr, 2, 1_000),
    ] {
        let r = two_arm_plan(design(kind, n, x, 0.0)).simulate_precision(10_000, 90).unwrap();
        coverages.push(r.coverage);
    }
    pass &= coverages.iter().all(|c| (0.93..=0.97).contains(c));
    notes.push(format!("coverage {:?}", coverages.iter().map(|c| format!("{c:.4}")).collect::<Vec<_>>()));

    // four times the subjects, half the log width
    let mut ratios = Vec::new();
    for (kind, n, x) in [(DesignKind::CohortCrr, 5_000, 1), (DesignKind::CaseControlOr, 2, 500)] {
        let w = |scale: u64| {
            two_arm_plan(design(kind, n * scale, x * scale, 0.0)).simulate_precision(2_000, 91).unwrap().mean_log_width
        };
        ratios.push(w(4) / w(1));
    }
    pass &= ratios.iter().all(|r| (r - 0.5).abs() <= 0.05);
    notes.push(format!("width ratio {:?}", ratios.iter().map(|r| format!("{r:.4}")).collect::<Vec<_>>()));

    let elapsed = start.elapsed();
    pass &= elapsed < Duration::from_secs(120);
    notes.push(format!("{elapsed:.2?}"));
    outcome(pass, notes.join("; "))
}

fn determinism() -> Outcome {
    let pool = |threads: usize| rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
    let run = || {
        let mut out = Vec::new();
        for (kind, n, x) in [
            (DesignKind::CohortCrr, 5_000, 1),
            (DesignKind::CohortIrr, 1_000, 1),
            (DesignKind::CaseControlOr, 2, 300),
            (DesignKind::TndInclusiveOr, 2, 300),
        ] {
            let r = two_arm_plan(design(kind, n, x, 0.3)).simulate_precision(500, 5).unwrap();
            out.push(serde_json::to_string(&r).unwrap());
        }
        let s = aon_reference();
        let o = simulate_cohort_oracle(s.rates(), &s.arms()[1], s.horizon(), 300_000, 6).unwrap();
        out.push(serde_json::to_string(&o).unwrap());
        out
    };
    let serial = pool(1).install(run);
    let parallel = pool(4).install(run);
    let again = pool(4).install(run);
    outcome(
        serial == parallel && parallel == again,
        format!("{} simulations compared across 1 and 4 threads", serial.len()),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("distribution closure", distribution_closure),
        ("Monte-Carlo agreement", monte_carlo_agreement),
        ("leaky measure ordering", leaky_ordering),
        ("relative-variants invariance", relative_variant_invariance),
        ("all-or-none time dependence", all_or_none_headline),
        ("TND identities", tnd_identities),
        ("limits at curve endpoints", limit_endpoints),
        ("sample size", sample_size),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        let o = check();
        if !o.pass {
            failed += 1;
        }
        println!("{} criterion {}: {name}: {}", if o.pass { "PASS" } else { "FAIL" }, k + 1, o.detail);
    }
    if failed > 0 {
        println!("{failed} of {} criteria failed", criteria.len());
        std::process::exit(1);
    }
}

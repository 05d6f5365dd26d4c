//! Request and response bodies and the computations behind each endpoint.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use vecalc_core::document::{parse_json, ComparisonDoc, ResolvedScenario, ScenarioDocument};
use vecalc_core::measures::{Comparison, VeMeasureKind, VeNumber};
use vecalc_core::samplesize::{
    MdveResult, PowerSample, PrecisionResult, RatioInterval, Restriction, StudyPlan,
};
use vecalc_core::scenario::{
    time_grid, GridSpacing, LimitRegime, DEFAULT_INVARIANCE_THRESHOLD,
};
use vecalc_core::tnd::{expected_counts, tnd_ve_for, TndExpectedCounts};
use vecalc_core::{VeError, SCHEMA_VERSION};

use crate::error::ApiError;

pub const DEFAULT_POWER_CURVE_POINTS: usize = 51;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointRequest {
    pub scenario: ScenarioDocument,
    pub measure: VeMeasureKind,
    pub comparison: ComparisonDoc,
    /// Defaults to the scenario horizon.
    #[serde(default)]
    pub t: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridDoc {
    #[serde(default)]
    pub times: Option<Vec<f64>>,
    #[serde(default)]
    pub start: Option<f64>,
    #[serde(default)]
    pub stop: Option<f64>,
    #[serde(default)]
    pub points: Option<usize>,
    #[serde(default)]
    pub spacing: Option<GridSpacing>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurveRequest {
    pub scenario: ScenarioDocument,
    pub measure: VeMeasureKind,
    pub comparison: ComparisonDoc,
    pub grid: GridDoc,
    #[serde(default)]
    pub invariance_threshold: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LimitsRequest {
    pub scenario: ScenarioDocument,
    /// All three kinds when absent.
    #[serde(default)]
    pub measure: Option<VeMeasureKind>,
    pub comparison: ComparisonDoc,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TndRequest {
    pub scenario: ScenarioDocument,
    /// Every variant-specific comparison when absent.
    #[serde(default)]
    pub comparison: Option<ComparisonDoc>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MdveRequest {
    pub scenario: ScenarioDocument,
    pub comparison: ComparisonDoc,
    #[serde(default)]
    pub curve_points: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrecisionRequest {
    pub scenario: ScenarioDocument,
    pub comparison: ComparisonDoc,
    pub n_sim: usize,
    pub seed: u64,
}

/// Body wrapper carrying the schema version and the scenario hash.
#[derive(Debug, Clone, Serialize)]
pub struct Envelope<T> {
    pub schema_version: u32,
    pub scenario_hash: String,
    #[serde(flatten)]
    pub body: T,
}

#[derive(Debug, Clone, Serialize)]
pub struct PointBody {
    pub value: VeNumber,
    pub kind: VeMeasureKind,
    pub comparison: String,
    pub t: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CurveBody {
    pub kind: VeMeasureKind,
    pub comparison: String,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub time_invariant: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct LimitEntry {
    pub kind: VeMeasureKind,
    pub regime: LimitRegime,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub value: Option<VeNumber>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub unavailable: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct LimitsBody {
    pub comparison: String,
    pub limits: Vec<LimitEntry>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TndVeEntry {
    pub comparison: String,
    pub kind: VeMeasureKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub undefined: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TndBody {
    pub variant_ids: Vec<String>,
    pub arm_ids: Vec<String>,
    pub counts: TndExpectedCounts,
    pub tnd_ve: Vec<TndVeEntry>,
}

#[derive(Debug, Clone, Serialize)]
pub struct MdveBody {
    pub comparison: String,
    pub kind: VeMeasureKind,
    pub mdve: MdveResult,
    pub restriction: Restriction,
    pub power_curve: Vec<PowerSample>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PrecisionBody {
    pub comparison: String,
    pub precision: PrecisionResult,
    /// The interval from expected cell counts, on the VE scale.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub expected_cell_ci: Option<(f64, f64)>,
}

struct Prepared {
    resolved: ResolvedScenario,
    hash: String,
}

fn prepare(doc: &ScenarioDocument) -> Result<Prepared, ApiError> {
    let resolved = doc.resolve().map_err(|e| ApiError::within("scenario", e))?;
    Ok(Prepared { resolved, hash: doc.canonical_hash() })
}

fn comparison(p: &Prepared, c: &ComparisonDoc) -> Result<Comparison, ApiError> {
    Ok(p.resolved.resolve_comparison(c, "$.comparison")?)
}

fn envelope<T: Serialize>(p: &Prepared, body: T) -> Result<Value, ApiError> {
    let env = Envelope { schema_version: SCHEMA_VERSION, scenario_hash: p.hash.clone(), body };
    Ok(serde_json::to_value(env).expect("response bodies serialise"))
}

pub fn point(bytes: &[u8]) -> Result<Value, ApiError> {
    let req: PointRequest = parse_json(bytes)?;
    let p = prepare(&req.scenario)?;
    let cmp = comparison(&p, &req.comparison)?;
    let t = req.t.unwrap_or(req.scenario.horizon);
    if !(t.is_finite() && t > 0.0) {
        return Err(ApiError::validation("$.t", format!("t must be positive, got {t}")));
    }
    let value = p.resolved.scenario.ve_at(req.measure, &cmp, t)?;
    envelope(
        &p,
        PointBody {
            value: VeNumber::Finite(value),
            kind: req.measure,
            comparison: p.resolved.comparison_label(&cmp),
            t,
        },
    )
}

fn grid_times(g: &GridDoc) -> Result<Vec<f64>, ApiError> {
    let bad = |m: VeError| ApiError::validation("$.grid", m.to_string().trim_start_matches("invalid time grid: "));
    match (&g.times, g.start, g.stop, g.points) {
        (Some(times), None, None, None) if g.spacing.is_none() => {
            vecalc_core::scenario::validate_grid(times).map_err(bad)?;
            Ok(times.clone())
        }
        (None, Some(start), Some(stop), Some(points)) => {
            time_grid(start, stop, points, g.spacing.unwrap_or(GridSpacing::Linear)).map_err(bad)
        }
        _ => Err(ApiError::validation(
            "$.grid",
            "give either times, or start, stop and points (with optional spacing)",
        )),
    }
}

pub fn curve(bytes: &[u8]) -> Result<Value, ApiError> {
    let req: CurveRequest = parse_json(bytes)?;
    let p = prepare(&req.scenario)?;
    let cmp = comparison(&p, &req.comparison)?;
    let times = grid_times(&req.grid)?;
    let threshold = req.invariance_threshold.unwrap_or(DEFAULT_INVARIANCE_THRESHOLD);
    let c = p.resolved.scenario.curve(req.measure, &cmp, &times, threshold)?;
    envelope(
        &p,
        CurveBody {
            kind: c.kind,
            comparison: p.resolved.comparison_label(&cmp),
            times: c.times,
            values: c.values,
            time_invariant: c.time_invariant,
        },
    )
}

pub fn limits(bytes: &[u8]) -> Result<Value, ApiError> {
    let req: LimitsRequest = parse_json(bytes)?;
    let p = prepare(&req.scenario)?;
    let cmp = comparison(&p, &req.comparison)?;
    let kinds = match req.measure {
        Some(k) => vec![k],
        None => VeMeasureKind::ALL.to_vec(),
    };
    let mut out = Vec::new();
    for kind in kinds {
        for regime in [LimitRegime::SmallLambdaT, LimitRegime::LargeLambdaT] {
            let entry = match p.resolved.scenario.limit(kind, &cmp, regime) {
                Ok(v) => LimitEntry { kind, regime, value: Some(v), unavailable: None },
                Err(e @ (VeError::NotAvailable(_) | VeError::Undefined(_))) => {
                    LimitEntry { kind, regime, value: None, unavailable: Some(e.to_string()) }
                }
                Err(e) => return Err(e.into()),
            };
            out.push(entry);
        }
    }
    envelope(&p, LimitsBody { comparison: p.resolved.comparison_label(&cmp), limits: out })
}

pub fn tnd(bytes: &[u8]) -> Result<Value, ApiError> {
    let req: TndRequest = parse_json(bytes)?;
    let p = prepare(&req.scenario)?;
    let params = p
        .resolved
        .tnd
        .as_ref()
        .ok_or_else(|| ApiError::validation("$.scenario.tnd", "TND parameters are required"))?;
    let scenario = &p.resolved.scenario;
    let comps = scenario.all_components()?;
    let counts = expected_counts(params, &comps, scenario.horizon()).map_err(VeError::from)?;
    let comparisons: Vec<Comparison> = match &req.comparison {
        Some(c) => vec![comparison(&p, c)?],
        None => (0..scenario.n_variants())
            .flat_map(|variant| (1..scenario.n_arms()).map(move |vaccine| Comparison::VariantSpecific { variant, vaccine }))
            .collect(),
    };
    let mut entries = Vec::new();
    for cmp in &comparisons {
        let label = p.resolved.comparison_label(cmp);
        match tnd_ve_for(&counts, cmp) {
            Ok(v) => entries.push(TndVeEntry { comparison: label, kind: v.kind, value: v.value.finite(), undefined: None }),
            // a single explicit comparison fails the request; a sweep reports per entry
            Err(e) if req.comparison.is_some() => return Err(e.into()),
            Err(e) => entries.push(TndVeEntry {
                comparison: label,
                kind: vecalc_core::tnd::equivalent_cohort_kind(counts.sampling),
                value: None,
                undefined: Some(e.to_string()),
            }),
        }
    }
    envelope(
        &p,
        TndBody {
            variant_ids: p.resolved.variant_ids.clone(),
            arm_ids: p.resolved.arm_ids.clone(),
            counts,
            tnd_ve: entries,
        },
    )
}

fn study_plan(p: &Prepared, c: &ComparisonDoc) -> Result<(StudyPlan, Comparison), ApiError> {
    let design = p
        .resolved
        .design
        .clone()
        .ok_or_else(|| ApiError::validation("$.scenario.design", "a design is required"))?;
    let coverage = p.resolved.coverage.as_deref().ok_or_else(|| ApiError::validation("$.scenario.coverage", "coverage is required"))?;
    let cmp = comparison(p, c)?;
    let plan = StudyPlan::new(&p.resolved.scenario, coverage, p.resolved.tnd.as_ref(), design, &cmp)?;
    Ok((plan, cmp))
}

pub fn mdve(bytes: &[u8]) -> Result<Value, ApiError> {
    let req: MdveRequest = parse_json(bytes)?;
    let p = prepare(&req.scenario)?;
    let (plan, cmp) = study_plan(&p, &req.comparison)?;
    let points = req.curve_points.unwrap_or(DEFAULT_POWER_CURVE_POINTS);
    if !(2..=10_000).contains(&points) {
        return Err(ApiError::validation("$.curve_points", "must lie in 2..=10000"));
    }
    let result = plan.min_detectable_ve()?;
    envelope(
        &p,
        MdveBody {
            comparison: p.resolved.comparison_label(&cmp),
            kind: plan.spec().design.ratio_kind(),
            mdve: result,
            restriction: plan.restriction()?,
            power_curve: plan.power_curve(points)?,
        },
    )
}

pub fn precision(bytes: &[u8], budget: f64) -> Result<Value, ApiError> {
    let req: PrecisionRequest = parse_json(bytes)?;
    let p = prepare(&req.scenario)?;
    let (plan, cmp) = study_plan(&p, &req.comparison)?;
    if req.n_sim == 0 {
        return Err(ApiError::validation("$.n_sim", "must be at least 1"));
    }
    let draws = plan.simulation_draws(req.n_sim);
    if draws > budget {
        return Err(ApiError::Budget {
            message: format!("simulation needs {draws} draws, budget is {budget}"),
            draws,
            budget,
        });
    }
    let result = plan.simulate_precision(req.n_sim, req.seed)?;
    let expected = plan.expected_cell_precision().ok().map(|ci: RatioInterval| {
        let (_, lo, hi) = ci.to_ve();
        (lo, hi)
    });
    envelope(
        &p,
        PrecisionBody { comparison: p.resolved.comparison_label(&cmp), precision: result, expected_cell_ci: expected },
    )
}

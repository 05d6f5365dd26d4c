use std::fmt::Display;
use std::io::Write;
use std::path::Path;

use serde_json::{json, Value};

use vecalc_core::document::{ComparisonDoc, ResolvedScenario, ScenarioDocument};
use vecalc_core::measures::{Comparison, VeError, VeNumber};
use vecalc_core::samplesize::{SampleSizeError, StudyPlan};
use vecalc_core::scenario::{time_grid, validate_grid, LimitRegime};
use vecalc_core::tnd::{equivalent_cohort_kind, expected_counts, tnd_ve_for};
use vecalc_core::{VeMeasureKind, SCHEMA_VERSION};

use crate::args::{Command, ComparisonArgs, Format, GridArgs, IoArgs};

#[derive(Debug)]
pub enum CliError {
    /// Bad flags or an invalid scenario file.
    Validation(String),
    /// A well-formed request with an undefined or unattainable result.
    Domain(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Domain(_) => 3,
            CliError::Io(_) => 1,
        }
    }
}

impl Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Validation(m) => write!(f, "invalid input: {m}"),
            CliError::Domain(m) => write!(f, "{m}"),
            CliError::Io(m) => write!(f, "{m}"),
        }
    }
}

impl From<VeError> for CliError {
    fn from(e: VeError) -> Self {
        match e {
            VeError::InvalidGrid(_) | VeError::InvalidInput(_) => CliError::Validation(e.to_string()),
            other => CliError::Domain(other.to_string()),
        }
    }
}

impl From<SampleSizeError> for CliError {
    fn from(e: SampleSizeError) -> Self {
        match e {
            SampleSizeError::InvalidDesign(_) => CliError::Validation(e.to_string()),
            SampleSizeError::Ve(v) => v.into(),
            other => CliError::Domain(other.to_string()),
        }
    }
}

/// Rows of one scenario plus its JSON form.
struct Output {
    header: Vec<&'static str>,
    rows: Vec<Vec<String>>,
    json: Value,
}

struct Loaded {
    label: String,
    doc: ScenarioDocument,
    resolved: ResolvedScenario,
}

fn load(path: &Path) -> Result<Loaded, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    let doc = ScenarioDocument::parse(&bytes).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    let resolved = doc.resolve().map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    Ok(Loaded { label: path.display().to_string(), doc, resolved })
}

fn comparison(s: &Loaded, c: &ComparisonArgs) -> Result<Comparison, CliError> {
    let doc = match (&c.reference, &c.other_variant) {
        (None, None) => ComparisonDoc::VariantSpecific { variant: c.variant.clone(), vaccine: c.vaccine.clone() },
        (Some(reference), None) => ComparisonDoc::RelativeVaccines {
            variant: c.variant.clone(),
            vaccine: c.vaccine.clone(),
            reference: reference.clone(),
        },
        (None, Some(other)) => ComparisonDoc::RelativeVariants {
            variant: c.variant.clone(),
            other: other.clone(),
            vaccine: c.vaccine.clone(),
        },
        (Some(_), Some(_)) => return Err(CliError::Validation("--reference and --other-variant conflict".into())),
    };
    s.resolved
        .resolve_comparison(&doc, "$.comparison")
        .map_err(|e| CliError::Validation(format!("{}: {e}", s.label)))
}

fn envelope(s: &Loaded, body: Value) -> Value {
    let mut v = json!({ "schema_version": SCHEMA_VERSION, "scenario_hash": s.doc.canonical_hash() });
    if let (Value::Object(head), Value::Object(rest)) = (&mut v, body) {
        head.extend(rest);
    }
    v
}

fn num(v: f64) -> String {
    format!("{v}")
}

fn ve_number(v: VeNumber) -> String {
    match v {
        VeNumber::Finite(x) => num(x),
        VeNumber::NegativeInfinity => "-inf".into(),
    }
}

fn grid(g: &GridArgs) -> Result<Vec<f64>, CliError> {
    match (&g.times, g.start, g.stop, g.points) {
        (Some(times), _, _, _) => {
            validate_grid(times)?;
            Ok(times.clone())
        }
        (None, Some(start), Some(stop), Some(points)) => Ok(time_grid(start, stop, points, g.spacing.into())?),
        _ => Err(CliError::Validation("give --times or --start, --stop and --points".into())),
    }
}

fn plan(s: &Loaded, c: &ComparisonArgs) -> Result<(StudyPlan, Comparison), CliError> {
    let design = s.resolved.design.clone().ok_or_else(|| CliError::Validation(format!("{}: the scenario has no design", s.label)))?;
    let coverage = s.resolved.coverage.as_deref().ok_or_else(|| CliError::Validation(format!("{}: the scenario has no coverage", s.label)))?;
    let cmp = comparison(s, c)?;
    let plan = StudyPlan::new(&s.resolved.scenario, coverage, s.resolved.tnd.as_ref(), design, &cmp)?;
    Ok((plan, cmp))
}

fn evaluate(command: &Command, s: &Loaded) -> Result<Output, CliError> {
    let scenario = &s.resolved.scenario;
    match command {
        Command::Ve { measure, comparison: c, t, .. } => {
            let cmp = comparison(s, c)?;
            let t = t.unwrap_or(s.doc.horizon);
            if !(t.is_finite() && t > 0.0) {
                return Err(CliError::Validation(format!("--t must be positive, got {t}")));
            }
            let v = scenario.ve_at(*measure, &cmp, t)?;
            let label = s.resolved.comparison_label(&cmp);
            Ok(Output {
                header: vec!["t", "ve", "kind", "comparison"],
                rows: vec![vec![num(t), num(v), measure.to_string(), label.clone()]],
                json: envelope(s, json!({"value": VeNumber::Finite(v), "kind": measure, "comparison": label, "t": t})),
            })
        }
        Command::Curve { measure, comparison: c, grid: g, threshold, .. } => {
            let cmp = comparison(s, c)?;
            let times = grid(g)?;
            let curve = scenario.curve(*measure, &cmp, &times, *threshold)?;
            let label = s.resolved.comparison_label(&cmp);
            let rows = curve
                .times
                .iter()
                .zip(&curve.values)
                .map(|(t, v)| vec![num(*t), num(*v), measure.to_string(), label.clone()])
                .collect();
            Ok(Output {
                header: vec!["t", "ve", "kind", "comparison"],
                rows,
                json: envelope(
                    s,
                    json!({
                        "kind": measure,
                        "comparison": label,
                        "times": curve.times,
                        "values": curve.values,
                        "time_invariant": curve.time_invariant,
                    }),
                ),
            })
        }
        Command::Limits { measure, comparison: c, .. } => {
            let cmp = comparison(s, c)?;
            let label = s.resolved.comparison_label(&cmp);
            let kinds = measure.map(|k| vec![k]).unwrap_or_else(|| VeMeasureKind::ALL.to_vec());
            let mut rows = Vec::new();
            let mut entries = Vec::new();
            for kind in kinds {
                for regime in [LimitRegime::SmallLambdaT, LimitRegime::LargeLambdaT] {
                    let regime_name = match regime {
                        LimitRegime::SmallLambdaT => "small_lambda_t",
                        LimitRegime::LargeLambdaT => "large_lambda_t",
                    };
                    match scenario.limit(kind, &cmp, regime) {
                        Ok(v) => {
                            rows.push(vec![kind.to_string(), regime_name.into(), ve_number(v), "ok".into(), label.clone()]);
                            entries.push(json!({"kind": kind, "regime": regime, "value": v}));
                        }
                        Err(e @ (VeError::NotAvailable(_) | VeError::Undefined(_))) => {
                            rows.push(vec![kind.to_string(), regime_name.into(), String::new(), e.to_string(), label.clone()]);
                            entries.push(json!({"kind": kind, "regime": regime, "unavailable": e.to_string()}));
                        }
                        Err(e) => return Err(e.into()),
                    }
                }
            }
            Ok(Output {
                header: vec!["kind", "regime", "value", "status", "comparison"],
                rows,
                json: envelope(s, json!({"comparison": label, "limits": entries})),
            })
        }
        Command::Tnd { variant, vaccine, .. } => {
            let params = s
                .resolved
                .tnd
                .as_ref()
                .ok_or_else(|| CliError::Validation(format!("{}: the scenario has no tnd parameters", s.label)))?;
            let comps = scenario.all_components()?;
            let counts = expected_counts(params, &comps, scenario.horizon()).map_err(VeError::from)?;
            let (vids, aids) = (&s.resolved.variant_ids, &s.resolved.arm_ids);
            let comparisons: Vec<Comparison> = match (variant, vaccine) {
                (Some(v), Some(m)) => vec![comparison(s, &ComparisonArgs {
                    variant: v.clone(),
                    vaccine: m.clone(),
                    reference: None,
                    other_variant: None,
                })?],
                (None, None) => (0..vids.len())
                    .flat_map(|variant| (1..aids.len()).map(move |vaccine| Comparison::VariantSpecific { variant, vaccine }))
                    .collect(),
                _ => return Err(CliError::Validation("give both --variant and --vaccine, or neither".into())),
            };
            let mut rows = Vec::new();
            for (i, row) in counts.cases.iter().enumerate() {
                for (m, v) in row.iter().enumerate() {
                    rows.push(vec!["cases".into(), vids[i].clone(), aids[m].clone(), String::new(), num(*v)]);
                }
            }
            for (m, v) in counts.controls.iter().enumerate() {
                rows.push(vec!["controls".into(), String::new(), aids[m].clone(), String::new(), num(*v)]);
            }
            let mut ves = Vec::new();
            for cmp in &comparisons {
                let label = s.resolved.comparison_label(cmp);
                match tnd_ve_for(&counts, cmp) {
                    Ok(v) => {
                        let x = v.value.finite().unwrap_or(f64::NAN);
                        rows.push(vec!["tnd_ve".into(), String::new(), String::new(), label.clone(), num(x)]);
                        ves.push(json!({"comparison": label, "kind": v.kind, "value": x}));
                    }
                    Err(e) if variant.is_some() => return Err(e.into()),
                    Err(e) => {
                        rows.push(vec!["tnd_ve".into(), String::new(), String::new(), label.clone(), String::new()]);
                        ves.push(json!({
                            "comparison": label,
                            "kind": equivalent_cohort_kind(counts.sampling),
                            "undefined": e.to_string(),
                        }));
                    }
                }
            }
            Ok(Output {
                header: vec!["quantity", "variant", "arm", "comparison", "value"],
                rows,
                json: envelope(
                    s,
                    json!({"variant_ids": vids, "arm_ids": aids, "counts": counts, "tnd_ve": ves}),
                ),
            })
        }
        Command::Mdve { comparison: c, .. } => {
            let (plan, cmp) = plan(s, c)?;
            let r = plan.min_detectable_ve()?;
            let label = s.resolved.comparison_label(&cmp);
            let design = plan.spec().design;
            let design_name = serde_json::to_value(design).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
            Ok(Output {
                header: vec!["design", "kind", "comparison", "mdve", "achieved_power", "peak_ve", "peak_power"],
                rows: vec![vec![
                    design_name,
                    design.ratio_kind().to_string(),
                    label.clone(),
                    num(r.ve),
                    num(r.achieved_power),
                    num(r.peak_ve),
                    num(r.peak_power),
                ]],
                json: envelope(
                    s,
                    json!({"comparison": label, "kind": design.ratio_kind(), "mdve": r, "restriction": plan.restriction()?}),
                ),
            })
        }
        Command::Precision { comparison: c, seed, n_sim, .. } => {
            let (plan, cmp) = plan(s, c)?;
            let r = plan.simulate_precision(*n_sim as usize, *seed)?;
            let label = s.resolved.comparison_label(&cmp);
            Ok(Output {
                header: vec![
                    "kind", "comparison", "n_sim", "seed", "estimate_mean", "ci_lower", "ci_upper",
                    "sd_of_estimates", "mean_log_width", "true_ve", "coverage", "n_degenerate",
                ],
                rows: vec![vec![
                    r.kind.to_string(),
                    label.clone(),
                    r.n_sim.to_string(),
                    r.seed.to_string(),
                    num(r.estimate_mean),
                    num(r.expected_ci.0),
                    num(r.expected_ci.1),
                    num(r.sd_of_estimates),
                    num(r.mean_log_width),
                    num(r.true_ve),
                    num(r.coverage),
                    r.n_degenerate.to_string(),
                ]],
                json: envelope(s, json!({"comparison": label, "precision": r})),
            })
        }
    }
}

fn io_args(command: &Command) -> &IoArgs {
    match command {
        Command::Ve { io, .. }
        | Command::Curve { io, .. }
        | Command::Limits { io, .. }
        | Command::Tnd { io, .. }
        | Command::Mdve { io, .. }
        | Command::Precision { io, .. } => io,
    }
}

fn render(outputs: Vec<(String, Output)>, format: Format) -> Result<Vec<u8>, CliError> {
    let many = outputs.len() > 1;
    match format {
        Format::Json => {
            let value = if many {
                Value::Array(
                    outputs
                        .into_iter()
                        .map(|(label, mut o)| {
                            if let Value::Object(m) = &mut o.json {
                                m.insert("scenario".into(), Value::String(label));
                            }
                            o.json
                        })
                        .collect(),
                )
            } else {
                outputs.into_iter().next().map(|(_, o)| o.json).unwrap_or(Value::Null)
            };
            let mut bytes = serde_json::to_vec_pretty(&value).map_err(|e| CliError::Io(e.to_string()))?;
            bytes.push(b'\n');
            Ok(bytes)
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            let io = |e: csv::Error| CliError::Io(e.to_string());
            if let Some((_, first)) = outputs.first() {
                let mut header: Vec<&str> = first.header.clone();
                if many {
                    header.push("scenario");
                }
                w.write_record(&header).map_err(io)?;
            }
            for (label, o) in &outputs {
                for row in &o.rows {
                    let mut row = row.clone();
                    if many {
                        row.push(label.clone());
                    }
                    w.write_record(&row).map_err(io)?;
                }
            }
            w.into_inner().map_err(|e| CliError::Io(e.to_string()))
        }
    }
}

pub fn run(command: &Command) -> Result<(), CliError> {
    let io = io_args(command);
    let mut outputs = Vec::new();
    for path in &io.scenarios {
        let loaded = load(path)?;
        let out = evaluate(command, &loaded)?;
        outputs.push((loaded.label, out));
    }
    let bytes = render(outputs, io.format)?;
    match &io.out {
        Some(path) => std::fs::write(path, bytes).map_err(|e| CliError::Io(format!("{}: {e}", path.display()))),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(&bytes).and_then(|_| stdout.flush()).map_err(|e| CliError::Io(e.to_string()))
        }
    }
}

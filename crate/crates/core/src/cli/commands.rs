use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::{json, Value};

use super::{Command, Common, Format, Output, PlanArgs, TargetArgs};
use crate::cost::{self, EquationMode, Tiling, Workload};
use crate::gpu::GpuSpec;
use crate::model::{admissible_kinds, parse_model, FcmKind, ModelGraph};
use crate::planner::{self, FusionPlan, PlannerConfig};
use crate::roofline;
use crate::search::{self, GridConfig};
use crate::sim;
use crate::{Error, Result};

pub(crate) fn execute(command: &Command) -> Result<Output> {
    match command {
        Command::Plan(a) => plan(a),
        Command::Estimate(a) => estimate(a),
        Command::Search(a) => search_cmd(a),
        Command::Simulate(a) => simulate(a),
        Command::Verify(a) => verify(a),
        Command::Classify(a) => classify(a),
    }
}

struct Inputs {
    graph: ModelGraph,
    gpu: GpuSpec,
    mode: EquationMode,
    grid: GridConfig,
}

fn load(c: &Common) -> Result<Inputs> {
    let text = std::fs::read_to_string(&c.model)?;
    let mut graph = parse_model(&text)?;
    if let Some(p) = c.precision {
        graph = graph.with_precision(p);
    }
    let grid = match c.grid.as_str() {
        "full" => GridConfig::full(),
        "even-only" => GridConfig::even_only(),
        path => GridConfig::from_json(&std::fs::read_to_string(path)?)?,
    };
    Ok(Inputs {
        graph,
        gpu: GpuSpec::resolve(&c.gpu)?,
        mode: c.mode.into(),
        grid,
    })
}

fn json_output<T: Serialize>(c: &Common, value: &T) -> Result<Output> {
    if c.format == Some(Format::Csv) {
        return Err(Error::InvalidArgument(
            "this report is only available as JSON".into(),
        ));
    }
    let mut v = serde_json::to_value(value)?;
    if c.stamp {
        let secs = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        match &mut v {
            Value::Object(m) => {
                m.insert("generated_at_unix".into(), json!(secs));
            }
            other => *other = json!({ "report": other.take(), "generated_at_unix": secs }),
        }
    }
    Ok(Output {
        body: serde_json::to_string_pretty(&v)? + "\n",
        path: c.out.clone(),
        side_warnings: Vec::new(),
    })
}

/// The layer or pair named on the command line.
enum Target {
    Layer(usize),
    Pair(usize, usize),
}

fn target(graph: &ModelGraph, a: &TargetArgs) -> Result<Option<Target>> {
    let find = |id: &str| {
        graph
            .index_of(id)
            .ok_or_else(|| Error::InvalidArgument(format!("no layer `{id}` in the model")))
    };
    match (&a.layer, &a.pair) {
        (Some(id), None) => Ok(Some(Target::Layer(find(id)?))),
        (None, Some(pair)) => {
            let (x, y) = pair.split_once(',').ok_or_else(|| {
                Error::InvalidArgument(format!("--pair `{pair}` must be FIRST,SECOND"))
            })?;
            let (i, j) = (find(x.trim())?, find(y.trim())?);
            if !graph.consumers(i).contains(&j) {
                return Err(Error::InvalidArgument(format!(
                    "no edge {} -> {} in the model",
                    x.trim(),
                    y.trim()
                )));
            }
            Ok(Some(Target::Pair(i, j)))
        }
        (None, None) => Ok(None),
        (Some(_), Some(_)) => Err(Error::InvalidArgument(
            "give either --layer or --pair".into(),
        )),
    }
}

fn kinds_for(graph: &ModelGraph, i: usize, j: usize, kind: Option<FcmKind>) -> Vec<FcmKind> {
    match kind {
        Some(k) => vec![k],
        None => admissible_kinds(graph.layers()[i].kind, graph.layers()[j].kind).to_vec(),
    }
}

/// The single workload a command operates on; a pair needs an unambiguous kind.
fn workload<'g>(graph: &'g ModelGraph, a: &TargetArgs) -> Result<Workload<'g>> {
    let layers = graph.layers();
    match target(graph, a)? {
        Some(Target::Layer(i)) => Ok(Workload::Layer(&layers[i])),
        Some(Target::Pair(i, j)) => {
            let kind = match kinds_for(graph, i, j, a.kind)[..] {
                [k] => k,
                [] => {
                    return Err(Error::InvalidArgument(format!(
                        "({}, {}) admits no fusion kind",
                        layers[i].id, layers[j].id
                    )))
                }
                _ => {
                    return Err(Error::InvalidArgument(
                        "this pair admits several kinds; pass --kind".into(),
                    ))
                }
            };
            Ok(Workload::Fused {
                first: &layers[i],
                second: &layers[j],
                kind,
            })
        }
        None => Err(Error::InvalidArgument(
            "give --layer ID or --pair FIRST,SECOND".into(),
        )),
    }
}

fn tiling_arg(a: &TargetArgs, w: &Workload<'_>) -> Result<Option<Tiling>> {
    a.tiling
        .as_deref()
        .map(|s| {
            s.parse::<Tiling>()
                .map(|t| t.resolved(w))
                .map_err(Error::InvalidArgument)
        })
        .transpose()
}

fn required_tiling(a: &TargetArgs, w: &Workload<'_>) -> Result<Tiling> {
    tiling_arg(a, w)?.ok_or_else(|| Error::InvalidArgument("--tiling HxWxD is required".into()))
}

fn planner_config(a: &PlanArgs, inputs: &Inputs) -> PlannerConfig {
    PlannerConfig {
        mode: inputs.mode,
        grid: inputs.grid.clone(),
        selector: a.selection.clone(),
        annotate: a.annotate,
    }
}

fn plan(a: &PlanArgs) -> Result<Output> {
    let c = &a.target.common;
    let inputs = load(c)?;
    let plan = planner::plan(&inputs.graph, &inputs.gpu, &planner_config(a, &inputs))?;
    if a.explain {
        return Ok(Output {
            body: planner::explain(&plan),
            path: c.out.clone(),
            side_warnings: plan.warnings.clone(),
        });
    }
    match c.format {
        Some(Format::Csv) => plan_csv(&plan, c),
        _ => json_output(c, &plan),
    }
}

fn plan_csv(plan: &FusionPlan, c: &Common) -> Result<Output> {
    #[derive(Serialize)]
    struct Row<'a> {
        layers: String,
        mode: &'a str,
        tiling: String,
        gma_bytes: u64,
        savings_bytes: u64,
        redundancy: f64,
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    for e in &plan.entries {
        let mode = e.mode.kind().map(FcmKind::tag).unwrap_or("lbl");
        w.serialize(Row {
            layers: e.layers.join("+"),
            mode,
            tiling: e.tiling.to_string(),
            gma_bytes: e.gma_bytes,
            savings_bytes: e.savings_bytes,
            redundancy: e.redundancy,
        })
        .map_err(std::io::Error::other)?;
    }
    let body = String::from_utf8(w.into_inner().map_err(|e| e.into_error())?).expect("utf-8");
    Ok(Output {
        body,
        path: c.out.clone(),
        side_warnings: plan.warnings.clone(),
    })
}

fn estimate(a: &TargetArgs) -> Result<Output> {
    let inputs = load(&a.common)?;
    let w = workload(&inputs.graph, a)?;
    let t = required_tiling(a, &w)?;
    let estimate = cost::evaluate(&w, &t, &inputs.gpu, inputs.mode)?;
    let footprint = cost::footprint(&w, &t)?;
    let report = json!({
        "workload": w.label(),
        "model": w.model_name(),
        "tiling": t,
        "estimate": estimate,
        "constraints": footprint.check(&inputs.gpu),
        "footprint_bytes": footprint.total_bytes(),
    });
    json_output(&a.common, &report)
}

fn search_cmd(a: &TargetArgs) -> Result<Output> {
    let inputs = load(&a.common)?;
    let (gpu, grid, mode) = (&inputs.gpu, &inputs.grid, inputs.mode);
    let layers = inputs.graph.layers();
    match target(&inputs.graph, a)? {
        Some(Target::Layer(i)) => {
            json_output(&a.common, &search::best_lbl(&layers[i], gpu, grid, mode)?)
        }
        Some(Target::Pair(i, j)) => {
            let results = kinds_for(&inputs.graph, i, j, a.kind)
                .into_iter()
                .map(|k| search::best_fcm(&layers[i], &layers[j], k, gpu, grid, mode))
                .collect::<Result<Vec<_>>>()?;
            json_output(&a.common, &results)
        }
        None => {
            let results = layers
                .iter()
                .map(|l| search::best_lbl(l, gpu, grid, mode))
                .collect::<Result<Vec<_>>>()?;
            json_output(&a.common, &results)
        }
    }
}

fn simulate(a: &TargetArgs) -> Result<Output> {
    let inputs = load(&a.common)?;
    let w = workload(&inputs.graph, a)?;
    let t = required_tiling(a, &w)?;
    let report = sim::simulate(&w, &t, inputs.mode)?;
    json_output(
        &a.common,
        &json!({ "workload": w.label(), "tiling": t, "mode": inputs.mode, "report": report }),
    )
}

fn verify(a: &TargetArgs) -> Result<Output> {
    let inputs = load(&a.common)?;
    let w = workload(&inputs.graph, a)?;
    let report = sim::verify(&w, &inputs.gpu, &inputs.grid, inputs.mode)?;
    let mut warnings = Vec::new();
    let uneven = report
        .rows
        .iter()
        .filter(|r| !r.even_division && r.abs_dev > 0)
        .count();
    if uneven > 0 {
        warnings.push(format!(
            "{uneven} non-dividing tilings deviate from the simulator (max {} B)",
            report.max_abs_dev
        ));
    }
    if report.max_even_abs_dev > 0 {
        warnings.push(format!(
            "evenly dividing tilings deviate by up to {} B: halos clipped at the border or inputs skipped by the stride",
            report.max_even_abs_dev
        ));
    }
    match a.common.format.unwrap_or(Format::Csv) {
        Format::Csv => Ok(Output {
            body: report.to_csv()?,
            path: a.common.out.clone(),
            side_warnings: warnings,
        }),
        Format::Json => {
            let mut v = serde_json::to_value(&report)?;
            v["warnings"] = json!(warnings);
            json_output(&a.common, &v)
        }
    }
}

fn classify(a: &PlanArgs) -> Result<Output> {
    let c = &a.target.common;
    let inputs = load(c)?;
    if target(&inputs.graph, &a.target)?.is_none() {
        let mut cfg = planner_config(a, &inputs);
        cfg.annotate = true;
        let plan = planner::plan(&inputs.graph, &inputs.gpu, &cfg)?;
        let rows: Vec<Value> = plan
            .entries
            .iter()
            .map(|e| json!({ "layers": e.layers, "mode": e.mode, "macs": e.macs, "gma_bytes": e.gma_bytes, "bound": e.bound }))
            .collect();
        return json_output(
            c,
            &json!({ "gpu": plan.gpu, "entries": rows, "warnings": plan.warnings }),
        );
    }
    let w = workload(&inputs.graph, &a.target)?;
    let (tiling, estimate) = match tiling_arg(&a.target, &w)? {
        Some(t) => (t, cost::evaluate(&w, &t, &inputs.gpu, inputs.mode)?),
        None => {
            let r = search::search(&w, &inputs.gpu, &inputs.grid, inputs.mode)?;
            match (r.tiling, r.estimate) {
                (Some(t), Some(e)) => (t, e),
                _ => {
                    return Err(Error::InvalidArgument(format!(
                        "{}: no feasible tiling to classify",
                        w.label()
                    )))
                }
            }
        }
    };
    let macs = cost::compute_profile(&w, &tiling)?.total_macs();
    let bound = roofline::classify(macs, estimate.total_bytes, &inputs.gpu)?;
    json_output(
        c,
        &json!({ "workload": w.label(), "tiling": tiling, "macs": macs, "gma_bytes": estimate.total_bytes, "bound": bound }),
    )
}

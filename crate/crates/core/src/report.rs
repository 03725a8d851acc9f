//! CSV and manifest output. Numbers are printed with 6 significant digits.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;
use serde_json::json;

use crate::engine::{AggregateRow, ReductionRow, RunResult, RunSummary, Scenario};
use crate::error::EngineError;
use crate::stability::FeasibilityResult;

/// `x` rounded to 6 significant digits, printed without trailing zeros.
pub fn sig6(x: f64) -> String {
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let r: f64 = format!("{x:.5e}").parse().expect("formatted float parses");
    if r == 0.0 {
        return "0".into();
    }
    let mag = r.abs().log10().floor() as i32;
    if (-5..15).contains(&mag) {
        format!("{r}")
    } else {
        format!("{r:e}")
    }
}

/// Quotes a field when it carries a delimiter, quote or newline.
fn field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn line(out: &mut String, cells: &[String]) {
    let row: Vec<String> = cells.iter().map(|c| field(c)).collect();
    out.push_str(&row.join(","));
    out.push('\n');
}

pub const SERIES_HEADER: [&str; 4] = ["step", "seconds", "total_vehicles", "total_cw_pedestrians"];

pub fn series_csv(run: &RunSummary) -> String {
    let mut s = String::new();
    line(&mut s, &SERIES_HEADER.map(String::from));
    for (t, (v, p)) in run.series_veh.iter().zip(&run.series_ped).enumerate() {
        let step = t + 1;
        line(
            &mut s,
            &[
                step.to_string(),
                sig6(step as f64 * run.dt),
                v.to_string(),
                p.to_string(),
            ],
        );
    }
    s
}

/// Chosen phase per intersection per step.
pub fn trace_csv(trace: &[Vec<u8>]) -> String {
    let mut s = String::new();
    let n = trace.first().map_or(0, Vec::len);
    let mut head = vec!["step".to_string()];
    head.extend((0..n).map(|i| format!("i{i}")));
    line(&mut s, &head);
    for (t, row) in trace.iter().enumerate() {
        let mut cells = vec![(t + 1).to_string()];
        cells.extend(row.iter().map(u8::to_string));
        line(&mut s, &cells);
    }
    s
}

pub const AGGREGATE_HEADER: [&str; 9] = [
    "controller",
    "param",
    "demand_vph",
    "seed_count",
    "veh_delay_h",
    "ped_delay_h",
    "person_delay_h",
    "veh_stable",
    "ped_stable",
];

pub fn aggregate_csv(rows: &[AggregateRow], region_names: &[String]) -> String {
    let mut s = String::new();
    let mut head: Vec<String> = AGGREGATE_HEADER.map(String::from).to_vec();
    head.push("failed_runs".into());
    for r in region_names {
        head.push(format!("veh_delay_h_{r}"));
        head.push(format!("ped_delay_h_{r}"));
    }
    line(&mut s, &head);
    for r in rows {
        let mut cells = vec![
            r.controller.name().to_string(),
            r.param.clone(),
            sig6(r.demand_vph),
            r.seed_count.to_string(),
            sig6(r.veh_delay_h),
            sig6(r.ped_delay_h),
            sig6(r.person_delay_h),
            sig6(r.veh_stable),
            sig6(r.ped_stable),
            r.failed.to_string(),
        ];
        for name in region_names {
            let d = r.regions.get(name).cloned().unwrap_or_default();
            cells.push(sig6(d.veh_delay_h));
            cells.push(sig6(d.ped_delay_h));
        }
        line(&mut s, &cells);
    }
    s
}

pub fn reductions_csv(rows: &[ReductionRow], region_names: &[String]) -> String {
    let mut s = String::new();
    let mut head: Vec<String> = [
        "controller",
        "param",
        "demand_vph",
        "veh_reduction_h",
        "ped_reduction_h",
        "person_reduction_h",
    ]
    .map(String::from)
    .to_vec();
    head.extend(region_names.iter().map(|r| format!("veh_reduction_h_{r}")));
    line(&mut s, &head);
    for r in rows {
        let mut cells = vec![
            r.controller.name().to_string(),
            r.param.clone(),
            sig6(r.demand_vph),
            sig6(r.veh_reduction_h),
            sig6(r.ped_reduction_h),
            sig6(r.person_reduction_h),
        ];
        cells.extend(
            region_names
                .iter()
                .map(|n| sig6(r.regions.get(n).copied().unwrap_or(f64::NAN))),
        );
        line(&mut s, &cells);
    }
    s
}

pub fn failures_csv(results: &[RunResult]) -> String {
    let mut s = String::new();
    line(&mut s, &["run".into(), "error".into()]);
    for r in results {
        if let Err((spec, e)) = r {
            line(&mut s, &[spec.id(), e.clone()]);
        }
    }
    s
}

/// One row per (demand, intersection): local verdict, slack, binding
/// columns and the network-wide critical demand scale.
pub fn feasibility_csv(results: &[(f64, FeasibilityResult, f64)]) -> String {
    let mut s = String::new();
    line(
        &mut s,
        &[
            "demand_vph",
            "intersection",
            "feasible",
            "slack",
            "binding_columns",
            "critical_scale",
        ]
        .map(String::from),
    );
    for (demand_vph, res, critical_scale) in results {
        for (i, l) in res.intersections.iter().enumerate() {
            let binding: Vec<String> = l.binding.iter().map(usize::to_string).collect();
            line(
                &mut s,
                &[
                    sig6(*demand_vph),
                    i.to_string(),
                    l.feasible.to_string(),
                    sig6(l.slack),
                    binding.join(" "),
                    sig6(*critical_scale),
                ],
            );
        }
    }
    s
}

#[derive(Serialize)]
struct RunEntry {
    id: String,
    controller: &'static str,
    param: String,
    demand_vph: f64,
    seed: u64,
    status: String,
    veh_verdict: Option<crate::stability::Verdict>,
    ped_verdict: Option<crate::stability::Verdict>,
    wall_clock_s: Option<f64>,
}

/// Run manifest: config and its hash, seeds, compiled pedestrian rates and
/// per-run status.
pub fn manifest_json(sc: &Scenario, results: &[RunResult], wall_clock_s: f64) -> String {
    let runs: Vec<RunEntry> = results
        .iter()
        .map(|r| match r {
            Ok(s) => RunEntry {
                id: s.spec.id(),
                controller: s.spec.controller.kind.name(),
                param: s.spec.controller.param_label(),
                demand_vph: s.spec.demand_vph,
                seed: s.spec.seed,
                status: "ok".into(),
                veh_verdict: Some(s.veh_verdict),
                ped_verdict: Some(s.ped_verdict),
                wall_clock_s: Some(s.wall_clock_s),
            },
            Err((spec, e)) => RunEntry {
                id: spec.id(),
                controller: spec.controller.kind.name(),
                param: spec.controller.param_label(),
                demand_vph: spec.demand_vph,
                seed: spec.seed,
                status: e.clone(),
                veh_verdict: None,
                ped_verdict: None,
                wall_clock_s: None,
            },
        })
        .collect();
    let seeds: Vec<u64> = {
        let mut v: Vec<u64> = runs.iter().map(|r| r.seed).collect();
        v.sort_unstable();
        v.dedup();
        v
    };
    let v = json!({
        "version": env!("CARGO_PKG_VERSION"),
        "config_hash": sc.config.hash(),
        "config": sc.config,
        "seeds": seeds,
        "dt_s": sc.dt(),
        "loading_steps": sc.config.loading_steps(),
        "cooldown_steps": sc.config.cooldown_steps(),
        "pedestrian_rates": {
            "generation_per_step": sc.ped.total_generation(),
            "q_in": sc.ped.q_in,
            "q_out": sc.ped.q_out,
            "exit_prob": sc.ped.exit_prob,
        },
        "runs": runs,
        "wall_clock_s": wall_clock_s,
    });
    serde_json::to_string_pretty(&v).expect("manifest serializes") + "\n"
}

pub fn write(path: &Path, text: &str) -> Result<(), EngineError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|source| EngineError::Output {
            path: dir.display().to_string(),
            source,
        })?;
    }
    fs::write(path, text).map_err(|source| EngineError::Output {
        path: path.display().to_string(),
        source,
    })
}

/// Human-readable one-line-per-row table of aggregate rows.
pub fn aggregate_table(rows: &[AggregateRow]) -> String {
    let mut s = String::new();
    for r in rows {
        let _ = writeln!(
            s,
            "{:<5} {:<24} {:>7} veh {:>10} h  ped {:>10} h  person {:>10} h  stable {}/{}",
            r.controller.name(),
            r.param,
            sig6(r.demand_vph),
            sig6(r.veh_delay_h),
            sig6(r.ped_delay_h),
            sig6(r.person_delay_h),
            sig6(r.veh_stable),
            sig6(r.ped_stable),
        );
    }
    s
}

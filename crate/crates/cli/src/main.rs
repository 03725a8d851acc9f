use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use pedmp_core::config::Config;
use pedmp_core::control::{ControllerConfig, ControllerKind};
use pedmp_core::engine::{aggregate, reductions, run_many, run_once, sweep_specs, RunSpec, Scenario};
use pedmp_core::error::{ConfigError, EngineError};
use pedmp_core::par::with_threads;
use pedmp_core::report;
use pedmp_core::stability::{check_feasibility, critical_scale};

#[derive(Parser)]
#[command(name = "pedmp", version, about = "Pedestrian-aware max-pressure grid simulator")]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Subcommand)]
enum Verb {
    /// Simulate one controller, demand and seed.
    Run(Common),
    /// Simulate every controller setting, demand level and seed of the config.
    Sweep(Common),
    /// Stable-region check from steady-state flows.
    Feasibility(Common),
    /// Parse and check a config without simulating.
    ValidateConfig(Common),
}

#[derive(Clone, Copy, ValueEnum)]
enum Ctrl {
    Pqmp,
    Qmp,
    Rule,
}

impl From<Ctrl> for ControllerKind {
    fn from(c: Ctrl) -> Self {
        match c {
            Ctrl::Pqmp => ControllerKind::Pqmp,
            Ctrl::Qmp => ControllerKind::Qmp,
            Ctrl::Rule => ControllerKind::Rule,
        }
    }
}

#[derive(Args, Clone)]
struct Common {
    /// TOML config; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed for `run`; restricts `sweep` to this one seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long, value_enum)]
    controller: Option<Ctrl>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    /// Demand per entry link, vehicles per hour.
    #[arg(long)]
    demand: Option<f64>,
    /// Worker threads for sweeps.
    #[arg(long, default_value_t = 1)]
    parallel: usize,
}

impl Common {
    /// Loads the config and folds command-line overrides into it.
    fn config(&self) -> Result<Config, EngineError> {
        let mut c = match &self.config {
            Some(p) => Config::load(p)?,
            None => Config::default(),
        };
        let ctl = &mut c.controller;
        if let Some(k) = self.controller {
            ctl.kind = k.into();
            ctl.sweep = vec![k.into()];
        }
        if let Some(l) = self.lambda {
            ctl.lambda = l;
            ctl.lambdas = vec![l];
        }
        if let Some(t) = self.tau {
            ctl.tau = t;
            ctl.taus = vec![t];
        }
        if let Some(s) = self.sigma {
            ctl.sigma = s;
            ctl.sigmas = vec![s];
        }
        if let Some(d) = self.demand {
            c.demand.vph = vec![d];
        }
        if let Some(s) = self.seed {
            c.run.seeds = vec![s];
        }
        if self.parallel == 0 {
            return Err(ConfigError::Invalid("--parallel must be at least 1".into()).into());
        }
        Ok(c)
    }
}

fn cmd_run(args: &Common) -> Result<(), EngineError> {
    let sc = Scenario::compile(args.config()?)?;
    let controller: ControllerConfig = sc.config.controller.single();
    let spec = RunSpec {
        controller,
        demand_vph: sc.config.demand.vph[0],
        seed: sc.config.run.seeds[0],
    };
    let start = Instant::now();
    let result = run_once(&sc, &spec).map_err(|e| {
        eprintln!("run {} failed", spec.id());
        e
    })?;
    let names = sc.regions.names();
    let out = &args.out;
    report::write(&out.join("series.csv"), &report::series_csv(&result))?;
    if let Some(tr) = &result.trace {
        report::write(&out.join("trace.csv"), &report::trace_csv(tr))?;
    }
    let results = vec![Ok(result)];
    let rows = aggregate(&results, sc.config.run.occupancy, &names);
    report::write(&out.join("aggregate.csv"), &report::aggregate_csv(&rows, &names))?;
    report::write(
        &out.join("manifest.json"),
        &report::manifest_json(&sc, &results, start.elapsed().as_secs_f64()),
    )?;
    print!("{}", report::aggregate_table(&rows));
    Ok(())
}

fn cmd_sweep(args: &Common) -> Result<(), EngineError> {
    let sc = Scenario::compile(args.config()?)?;
    let specs = sweep_specs(&sc.config);
    let start = Instant::now();
    let results = with_threads(args.parallel, || run_many(&sc, &specs)).map_err(EngineError::Pool)?;
    let names = sc.regions.names();
    let out = &args.out;
    for r in results.iter().flatten() {
        report::write(
            &out.join("series").join(format!("{}.csv", r.spec.id())),
            &report::series_csv(r),
        )?;
        if let Some(tr) = &r.trace {
            report::write(
                &out.join("trace").join(format!("{}.csv", r.spec.id())),
                &report::trace_csv(tr),
            )?;
        }
    }
    let rows = aggregate(&results, sc.config.run.occupancy, &names);
    report::write(&out.join("aggregate.csv"), &report::aggregate_csv(&rows, &names))?;
    let red = reductions(&rows, sc.config.controller.baseline);
    report::write(&out.join("reductions.csv"), &report::reductions_csv(&red, &names))?;
    let failed = results.iter().filter(|r| r.is_err()).count();
    if failed > 0 {
        report::write(&out.join("failures.csv"), &report::failures_csv(&results))?;
        eprintln!("{failed} of {} runs failed; see failures.csv", results.len());
    }
    report::write(
        &out.join("manifest.json"),
        &report::manifest_json(&sc, &results, start.elapsed().as_secs_f64()),
    )?;
    print!("{}", report::aggregate_table(&rows));
    Ok(())
}

fn cmd_feasibility(args: &Common) -> Result<(), EngineError> {
    let sc = Scenario::compile(args.config()?)?;
    let mode = sc.config.run.feasibility_mode;
    let sidewalk = sc.config.saturation.sidewalk.unwrap_or(f64::INFINITY);
    let mut rows = Vec::new();
    for &vph in &sc.config.demand.vph {
        let flows = sc.steady_flows(vph)?;
        let res = check_feasibility(&sc.net, &flows, &sc.veh_sat, &sc.cw_sat, sidewalk, mode);
        let scale = critical_scale(&sc.net, &flows, &sc.veh_sat, &sc.cw_sat, mode);
        println!(
            "demand {} vph: {} (min slack {}, critical scale {})",
            report::sig6(vph),
            if res.feasible { "inside stable region" } else { "outside stable region" },
            report::sig6(res.slack),
            report::sig6(scale)
        );
        rows.push((vph, res, scale));
    }
    report::write(&args.out.join("feasibility.csv"), &report::feasibility_csv(&rows))
}

fn cmd_validate(args: &Common) -> Result<(), EngineError> {
    let sc = Scenario::compile(args.config()?)?;
    sc.config.controller.single().validate().map_err(ConfigError::Invalid)?;
    for c in sc.config.controller.settings() {
        c.validate().map_err(ConfigError::Invalid)?;
    }
    println!("ok {}", sc.config.hash());
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            if e.use_stderr() {
                eprintln!("error[usage]: {}", e.to_string().trim_end());
                return ExitCode::from(64);
            }
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
    };
    let res = match &cli.verb {
        Verb::Run(a) => cmd_run(a),
        Verb::Sweep(a) => cmd_sweep(a),
        Verb::Feasibility(a) => cmd_feasibility(a),
        Verb::ValidateConfig(a) => cmd_validate(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.category());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

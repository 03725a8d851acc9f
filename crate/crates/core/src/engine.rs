//! Scenario compilation, single runs and sweeps.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::Serialize;

use crate::config::Config;
use crate::control::{
    perturb_measurement, select, ControllerConfig, ControllerKind, Means, Observation,
};
use crate::dynamics::{substream, DynamicsOptions, Rates, Simulator, StepOutcome, TrafficState};
use crate::error::{ConfigError, EngineError};
use crate::metrics::{regional_split, DelayLedger, RegionDelay, RegionMap};
use crate::net::{Network, VehTurning, CW_PER_INTERSECTION};
use crate::od::{compile, OdSpec, PedRouting};
use crate::stability::{classify_run, solve_steady_flows, SteadyFlows, Verdict};

/// Vehicles in the network above which a run is aborted as diverged.
pub const VEHICLE_GUARD: u64 = 20_000_000;

const STREAM_MEASURE_BASE: u64 = 1000;

/// Everything derived from a config that does not depend on the run.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub config: Config,
    pub net: Network,
    pub veh_sat: Vec<f64>,
    pub cw_sat: Vec<f64>,
    pub turning: VehTurning,
    pub ped: PedRouting,
    pub high_region: Vec<bool>,
    pub regions: RegionMap,
}

impl Scenario {
    pub fn compile(config: Config) -> Result<Scenario, ConfigError> {
        config.validate()?;
        let net = Network::grid(config.network.grid_params())?;
        let t = &config.demand.turning;
        let turning = VehTurning::uniform_shares(&net, t.left, t.through, t.right);
        turning.validate(&net)?;
        let high_region = config.high_region();
        let p = &config.pedestrians;
        let ped = compile(
            &net,
            &OdSpec {
                p_high: p.p_high,
                p_low: p.p_low,
                rate_scale: p.rate_scale,
                high_region: high_region.clone(),
            },
        );
        let regions = RegionMap::two(&high_region, &p.high_label, &p.low_label);
        Ok(Scenario {
            veh_sat: vec![config.saturation.veh; net.movements.len()],
            cw_sat: vec![config.saturation.crosswalk; net.crosswalks.len()],
            turning,
            ped,
            high_region,
            regions,
            net,
            config,
        })
    }

    pub fn dt(&self) -> f64 {
        self.net.dt
    }

    pub fn rates(&self, vph: f64) -> Rates {
        Rates {
            veh_sat: self.veh_sat.clone(),
            cw_sat: self.cw_sat.clone(),
            sat_cov: self.config.saturation.cov,
            turning: self.turning.clone(),
            ped: self.ped.clone(),
            entry_demand: Rates::uniform_entry_demand(&self.net, Rates::per_step(vph, self.dt())),
            lost_time: self.config.saturation.lost_time_s,
        }
    }

    pub fn means(&self) -> Means<'_> {
        Means {
            veh_sat: &self.veh_sat,
            cw_sat: &self.cw_sat,
            turning: &self.turning,
            ped: &self.ped,
        }
    }

    pub fn options(&self) -> DynamicsOptions {
        DynamicsOptions {
            arrivals: self.config.run.arrivals,
            routing: self.config.run.routing,
        }
    }

    pub fn steady_flows(&self, vph: f64) -> Result<SteadyFlows, EngineError> {
        let rates = self.rates(vph);
        Ok(solve_steady_flows(
            &self.net,
            &rates.entry_demand,
            &self.turning,
            &self.ped,
        )?)
    }
}

#[derive(Clone, Copy, Debug, Serialize, PartialEq)]
pub struct RunSpec {
    pub controller: ControllerConfig,
    pub demand_vph: f64,
    pub seed: u64,
}

impl RunSpec {
    /// File-name-safe identifier.
    pub fn id(&self) -> String {
        let param = self
            .controller
            .param_label()
            .replace('=', "-")
            .replace(';', "_");
        format!(
            "{}_{}_d{}_s{}",
            self.controller.kind.name(),
            param,
            crate::report::sig6(self.demand_vph),
            self.seed
        )
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RunSummary {
    pub spec: RunSpec,
    pub dt: f64,
    pub loading_steps: usize,
    /// Vehicles queued in the network after each step.
    pub series_veh: Vec<u64>,
    /// Pedestrians queued at crosswalks after each step.
    pub series_ped: Vec<u64>,
    pub ledger: DelayLedger,
    pub regions: BTreeMap<String, RegionDelay>,
    pub veh_verdict: Verdict,
    pub ped_verdict: Verdict,
    #[serde(skip)]
    pub trace: Option<Vec<Vec<u8>>>,
    pub wall_clock_s: f64,
}

impl RunSummary {
    pub fn person_delay_h(&self, occupancy: f64) -> f64 {
        self.ledger.person_delay_h(occupancy)
    }
}

/// Builds the controller's view of the state.
pub fn observe(
    state: &TrafficState,
    dt: f64,
    sigma: f64,
    measure: &mut [rand_chacha::ChaCha8Rng],
) -> Observation {
    let counts = state.cw_counts();
    let cw = if sigma > 0.0 {
        counts
            .chunks(CW_PER_INTERSECTION)
            .zip(measure.iter_mut())
            .flat_map(|(c, rng)| perturb_measurement(c, sigma, rng))
            .collect()
    } else {
        counts.iter().map(|&c| f64::from(c)).collect()
    };
    Observation {
        veh: state.veh.iter().map(|&x| f64::from(x)).collect(),
        cw,
        cw_head_wait: (0..state.cw.len()).map(|k| state.head_wait(k, dt)).collect(),
    }
}

pub fn run_once(sc: &Scenario, spec: &RunSpec) -> Result<RunSummary, EngineError> {
    run_observed(sc, spec, |_, _, _| {})
}

/// Runs one scenario, calling `observer(phases, outcome, state_after)` after
/// every step.
pub fn run_observed<F>(sc: &Scenario, spec: &RunSpec, mut observer: F) -> Result<RunSummary, EngineError>
where
    F: FnMut(&[usize], &StepOutcome, &TrafficState),
{
    spec.controller
        .validate()
        .map_err(|e| EngineError::Config(ConfigError::Invalid(e)))?;
    let start = Instant::now();
    let net = &sc.net;
    let dt = net.dt;
    let rates = sc.rates(spec.demand_vph);
    let means = sc.means();
    let mut sim = Simulator::new(net, &rates, sc.options(), spec.seed);
    let mut measure: Vec<_> = (0..net.n_intersections)
        .map(|i| substream(spec.seed, STREAM_MEASURE_BASE + i as u64))
        .collect();
    let loading = sc.config.loading_steps();
    let total = loading + sc.config.cooldown_steps();
    let mut ledger = DelayLedger::new(net.n_intersections);
    let mut series_veh = Vec::with_capacity(total);
    let mut series_ped = Vec::with_capacity(total);
    let mut trace = sc.config.run.trace.then(|| Vec::with_capacity(total));
    let mut phases = vec![0usize; net.n_intersections];
    let sigma = if spec.controller.kind == ControllerKind::Pqmp {
        spec.controller.sigma
    } else {
        0.0
    };
    for t in 0..total {
        let obs = observe(&sim.state, dt, sigma, &mut measure);
        for (i, p) in phases.iter_mut().enumerate() {
            *p = select(net, i, &obs, &means, &spec.controller);
        }
        let out = sim.step(&phases, t < loading);
        ledger.accumulate(&out, dt);
        let veh = sim.state.total_vehicles();
        if veh > VEHICLE_GUARD {
            return Err(EngineError::StateGuard {
                step: t,
                detail: format!("{veh} vehicles queued; run {}", spec.id()),
            });
        }
        series_veh.push(veh);
        series_ped.push(sim.state.total_cw());
        if let Some(tr) = trace.as_mut() {
            tr.push(phases.iter().map(|&p| p as u8).collect());
        }
        observer(&phases, &out, &sim.state);
    }
    let theta = sc.config.run.theta;
    let as_f = |s: &[u64]| s[..loading].iter().map(|&x| x as f64).collect::<Vec<_>>();
    let veh_verdict = classify_run(&as_f(&series_veh), theta)?;
    let ped_verdict = classify_run(&as_f(&series_ped), theta)?;
    let regions = regional_split(&ledger, &sc.regions)?;
    Ok(RunSummary {
        spec: *spec,
        dt,
        loading_steps: loading,
        series_veh,
        series_ped,
        ledger,
        regions,
        veh_verdict,
        ped_verdict,
        trace,
        wall_clock_s: start.elapsed().as_secs_f64(),
    })
}

/// Cartesian product of controller settings, demand levels and seeds.
pub fn sweep_specs(config: &Config) -> Vec<RunSpec> {
    let mut out = Vec::new();
    for controller in config.controller.settings() {
        for &demand_vph in &config.demand.vph {
            for &seed in &config.run.seeds {
                out.push(RunSpec {
                    controller,
                    demand_vph,
                    seed,
                });
            }
        }
    }
    out
}

/// Outcome of one sweep cell: a summary or the error that stopped it.
pub type RunResult = Result<RunSummary, (RunSpec, String)>;

/// Runs every spec; failures are kept per run instead of aborting.
pub fn run_many(sc: &Scenario, specs: &[RunSpec]) -> Vec<RunResult> {
    crate::par::map(specs, |spec| {
        run_once(sc, spec).map_err(|e| (*spec, format!("{}: {e}", e.category())))
    })
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct AggregateRow {
    pub controller: ControllerKind,
    pub param: String,
    pub demand_vph: f64,
    pub seed_count: usize,
    pub failed: usize,
    pub veh_delay_h: f64,
    pub ped_delay_h: f64,
    pub person_delay_h: f64,
    /// Fraction of seeds classified stable.
    pub veh_stable: f64,
    pub ped_stable: f64,
    pub regions: BTreeMap<String, RegionDelay>,
}

/// Seed-averaged rows, one per (controller setting, demand) in first-seen
/// order.
pub fn aggregate(results: &[RunResult], occupancy: f64, region_names: &[String]) -> Vec<AggregateRow> {
    let mut keys: Vec<(ControllerKind, String, f64)> = Vec::new();
    let mut groups: Vec<(Vec<&RunSummary>, usize)> = Vec::new();
    for r in results {
        let spec = match r {
            Ok(s) => s.spec,
            Err((spec, _)) => *spec,
        };
        let key = (spec.controller.kind, spec.controller.param_label(), spec.demand_vph);
        let g = match keys.iter().position(|k| *k == key) {
            Some(g) => g,
            None => {
                keys.push(key);
                groups.push((Vec::new(), 0));
                groups.len() - 1
            }
        };
        match r {
            Ok(s) => groups[g].0.push(s),
            Err(_) => groups[g].1 += 1,
        }
    }
    keys.into_iter()
        .zip(groups)
        .map(|((controller, param, demand_vph), (runs, failed))| {
            let n = runs.len();
            let mean = |f: &dyn Fn(&RunSummary) -> f64| {
                if n == 0 {
                    f64::NAN
                } else {
                    runs.iter().map(|r| f(r)).sum::<f64>() / n as f64
                }
            };
            let regions = region_names
                .iter()
                .map(|name| {
                    let get = |r: &RunSummary| r.regions.get(name).cloned().unwrap_or_default();
                    (
                        name.clone(),
                        RegionDelay {
                            veh_delay_h: mean(&|r| get(r).veh_delay_h),
                            ped_delay_h: mean(&|r| get(r).ped_delay_h),
                        },
                    )
                })
                .collect();
            AggregateRow {
                controller,
                param,
                demand_vph,
                seed_count: n,
                failed,
                veh_delay_h: mean(&|r| r.ledger.veh_delay_h()),
                ped_delay_h: mean(&|r| r.ledger.ped_delay_h()),
                person_delay_h: mean(&|r| r.ledger.person_delay_h(occupancy)),
                veh_stable: mean(&|r| f64::from(u8::from(r.veh_verdict == Verdict::Stable))),
                ped_stable: mean(&|r| f64::from(u8::from(r.ped_verdict == Verdict::Stable))),
                regions,
            }
        })
        .collect()
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct ReductionRow {
    pub controller: ControllerKind,
    pub param: String,
    pub demand_vph: f64,
    pub veh_reduction_h: f64,
    pub ped_reduction_h: f64,
    pub person_reduction_h: f64,
    pub regions: BTreeMap<String, f64>,
}

/// Delay reductions (baseline minus row) against the baseline controller at
/// the same demand; positive means the row saves delay.
pub fn reductions(rows: &[AggregateRow], baseline: ControllerKind) -> Vec<ReductionRow> {
    rows.iter()
        .filter(|r| r.controller != baseline)
        .filter_map(|r| {
            let b = rows
                .iter()
                .find(|b| b.controller == baseline && b.demand_vph == r.demand_vph)?;
            Some(ReductionRow {
                controller: r.controller,
                param: r.param.clone(),
                demand_vph: r.demand_vph,
                veh_reduction_h: b.veh_delay_h - r.veh_delay_h,
                ped_reduction_h: b.ped_delay_h - r.ped_delay_h,
                person_reduction_h: b.person_delay_h - r.person_delay_h,
                regions: r
                    .regions
                    .iter()
                    .map(|(k, v)| {
                        let base = b.regions.get(k).map_or(f64::NAN, |x| x.veh_delay_h);
                        (k.clone(), base - v.veh_delay_h)
                    })
                    .collect(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> Scenario {
        let mut c = Config::default();
        c.network.rows = 2;
        c.network.cols = 2;
        c.horizon.loading_s = 600.0;
        c.horizon.cooldown_s = 600.0;
        c.run.seeds = vec![1, 2, 3];
        c.demand.vph = vec![300.0];
        Scenario::compile(c).unwrap()
    }

    #[test]
    fn zero_demand_is_silent() {
        let mut c = small().config;
        c.demand.vph = vec![0.0];
        c.pedestrians.rate_scale = 0.0;
        let sc = Scenario::compile(c).unwrap();
        for ctrl in [ControllerConfig::pqmp(0.01, 0.0), ControllerConfig::qmp(), ControllerConfig::rule(40.0)] {
            let s = run_once(
                &sc,
                &RunSpec {
                    controller: ctrl,
                    demand_vph: 0.0,
                    seed: 4,
                },
            )
            .unwrap();
            assert!(s.series_veh.iter().all(|&x| x == 0));
            assert!(s.series_ped.iter().all(|&x| x == 0));
            assert_eq!(s.ledger.veh_delay_h(), 0.0);
            assert_eq!(s.ledger.ped_delay_h(), 0.0);
        }
    }

    #[test]
    fn series_length_matches_horizon() {
        let sc = small();
        let s = run_once(
            &sc,
            &RunSpec {
                controller: ControllerConfig::qmp(),
                demand_vph: 300.0,
                seed: 1,
            },
        )
        .unwrap();
        assert_eq!(s.series_veh.len(), 60);
        assert_eq!(s.loading_steps, 30);
    }

    #[test]
    fn repeated_runs_match() {
        let sc = small();
        let spec = RunSpec {
            controller: ControllerConfig::pqmp(0.002, 0.2),
            demand_vph: 300.0,
            seed: 11,
        };
        let a = run_once(&sc, &spec).unwrap();
        let b = run_once(&sc, &spec).unwrap();
        assert_eq!(a.series_veh, b.series_veh);
        assert_eq!(a.series_ped, b.series_ped);
        assert_eq!(a.ledger, b.ledger);
    }

    #[test]
    fn sweep_shape_and_aggregate() {
        let mut c = small().config;
        c.controller.sweep = vec![ControllerKind::Qmp];
        let sc = Scenario::compile(c).unwrap();
        let specs = sweep_specs(&sc.config);
        assert_eq!(specs.len(), 3);
        let res = run_many(&sc, &specs);
        let rows = aggregate(&res, 1.3, &sc.regions.names());
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].seed_count, 3);
        let mean: f64 = res
            .iter()
            .map(|r| r.as_ref().unwrap().ledger.veh_delay_h())
            .sum::<f64>()
            / 3.0;
        assert!((rows[0].veh_delay_h - mean).abs() < 1e-12);
    }

    #[test]
    fn invalid_controller_rejected() {
        let sc = small();
        let e = run_once(
            &sc,
            &RunSpec {
                controller: ControllerConfig::pqmp(2.0, 0.0),
                demand_vph: 300.0,
                seed: 1,
            },
        )
        .unwrap_err();
        assert_eq!(e.category(), "config_invalid");
    }
}

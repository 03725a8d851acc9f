//! One-step network dynamics: store-and-forward vehicle queues, FIFO
//! crosswalk queues and free-flowing sidewalk walkers.
//!
//! A step is a synchronous barrier. Service is computed from the state at
//! time t for every movement before any routed inflow is applied, so the
//! order in which intersections are visited never matters.

use std::collections::VecDeque;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::control::adjusted_saturation;
use crate::net::{
    LinkClass, Network, PedLink, Turn, VehTurning, CW_PER_INTERSECTION, VEH_PER_INTERSECTION,
};
use crate::od::PedRouting;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ArrivalMode {
    #[default]
    Poisson,
    /// Fractional accumulator: floor of the running sum of means.
    Deterministic,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RoutingMode {
    /// Every departing entity samples its next movement independently.
    #[default]
    Random,
    /// Error-diffusion splitting: realized shares track the means exactly in
    /// the long run, with no randomness.
    Fixed,
}

/// Mean rates the dynamics draw from.
#[derive(Clone, Debug)]
pub struct Rates {
    /// Mean vehicle saturation flow per movement, vehicles/step.
    pub veh_sat: Vec<f64>,
    /// Mean pedestrian saturation flow per crosswalk movement, pedestrians/step.
    pub cw_sat: Vec<f64>,
    /// Coefficient of variation of the saturation-flow draws.
    pub sat_cov: f64,
    pub turning: VehTurning,
    pub ped: PedRouting,
    /// Mean vehicles/step arriving on each link; nonzero only for entry links.
    pub entry_demand: Vec<f64>,
    /// Seconds lost at an intersection on a step where its phase changes.
    pub lost_time: f64,
}

impl Rates {
    /// Per-step mean for a demand given in vehicles per hour.
    pub fn per_step(vph: f64, dt: f64) -> f64 {
        vph / 3600.0 * dt
    }

    pub fn uniform_entry_demand(net: &Network, per_step: f64) -> Vec<f64> {
        net.links
            .iter()
            .map(|l| if l.class == LinkClass::Entry { per_step } else { 0.0 })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Plan {
    Exit,
    Continue(PedLink),
}

/// A pedestrian on a sidewalk. Position is kept as whole steps walked so the
/// distance to the downstream node is exact for every walker.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Walker {
    pub steps: u32,
    pub plan: Plan,
}

impl Walker {
    /// Remaining distance to the downstream node, metres.
    pub fn remaining(&self, length: f64, walk_per_step: f64) -> f64 {
        length - f64::from(self.steps) * walk_per_step
    }
}

/// A pedestrian waiting at a crosswalk.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CwPed {
    /// Seconds at which the pedestrian joined the queue.
    pub arrived: f64,
    pub next: PedLink,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Counters {
    pub veh_entered: u64,
    pub veh_exited: u64,
    pub ped_generated: u64,
    pub ped_exited: u64,
}

#[derive(Clone, Debug)]
pub struct TrafficState {
    pub t: usize,
    pub veh: Vec<u32>,
    pub cw: Vec<VecDeque<CwPed>>,
    pub walkers: Vec<Vec<Walker>>,
    pub prev_phase: Vec<Option<usize>>,
    pub totals: Counters,
}

impl TrafficState {
    pub fn empty(net: &Network) -> TrafficState {
        TrafficState {
            t: 0,
            veh: vec![0; net.movements.len()],
            cw: vec![VecDeque::new(); net.crosswalks.len()],
            walkers: vec![Vec::new(); net.sidewalks.len()],
            prev_phase: vec![None; net.n_intersections],
            totals: Counters::default(),
        }
    }

    pub fn total_vehicles(&self) -> u64 {
        self.veh.iter().map(|&x| u64::from(x)).sum()
    }

    pub fn total_cw(&self) -> u64 {
        self.cw.iter().map(|q| q.len() as u64).sum()
    }

    pub fn total_walkers(&self) -> u64 {
        self.walkers.iter().map(|w| w.len() as u64).sum()
    }

    pub fn cw_counts(&self) -> Vec<u32> {
        self.cw.iter().map(|q| q.len() as u32).collect()
    }

    pub fn clock(&self, dt: f64) -> f64 {
        self.t as f64 * dt
    }

    /// Seconds the head of crosswalk queue `k` has waited; 0 when empty.
    pub fn head_wait(&self, k: usize, dt: f64) -> f64 {
        self.cw[k]
            .front()
            .map_or(0.0, |p| (self.clock(dt) - p.arrived).max(0.0))
    }
}

/// What happened during one step, for accounting and audit.
#[derive(Clone, Debug, Default)]
pub struct StepOutcome {
    pub veh_before: Vec<u32>,
    pub veh_served: Vec<u32>,
    pub veh_arrived: Vec<u32>,
    pub cw_before: Vec<u32>,
    pub cw_served: Vec<u32>,
    pub cw_arrived: Vec<u32>,
    /// Walkers starting on each directed sidewalk, generated or turning in.
    pub sw_entered: Vec<u32>,
    /// Summed queueing time of the pedestrians served this step, seconds.
    pub cw_wait_served: f64,
    pub veh_entered: u64,
    pub veh_exited: u64,
    pub ped_generated: u64,
    pub ped_exited: u64,
}

/// Walkers within one step's walk of the downstream node: the positions
/// `b` with `b <= walk_per_step`. Returns their indices in input order.
pub fn psi(remaining: &[f64], ped_speed: f64, dt: f64) -> Vec<usize> {
    let reach = ped_speed * dt;
    remaining
        .iter()
        .enumerate()
        .filter(|(_, &b)| b <= reach)
        .map(|(k, _)| k)
        .collect()
}

/// Deterministic splitter: each call hands the next entity to the option
/// whose accumulated share is furthest ahead of its realized count.
#[derive(Clone, Debug, Default)]
pub struct Splitter {
    credit: Vec<f64>,
}

impl Splitter {
    pub fn pick(&mut self, weights: &[f64]) -> usize {
        if self.credit.len() != weights.len() {
            self.credit = vec![0.0; weights.len()];
        }
        let mut best = 0;
        for (j, w) in weights.iter().enumerate() {
            self.credit[j] += w;
            if self.credit[j] > self.credit[best] {
                best = j;
            }
        }
        self.credit[best] -= 1.0;
        best
    }
}

fn sample_categorical<R: Rng>(rng: &mut R, weights: &[f64]) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last = 0;
    for (j, &w) in weights.iter().enumerate() {
        if w <= 0.0 {
            continue;
        }
        last = j;
        acc += w;
        if u < acc {
            return j;
        }
    }
    last
}

/// Rounds `x` up with probability equal to its fractional part.
fn stochastic_round(x: f64, u: f64) -> u32 {
    let f = x.floor();
    let frac = x - f;
    f as u32 + u32::from(u < frac)
}

#[derive(Clone, Debug, Copy)]
pub struct DynamicsOptions {
    pub arrivals: ArrivalMode,
    pub routing: RoutingMode,
}

impl Default for DynamicsOptions {
    fn default() -> Self {
        DynamicsOptions {
            arrivals: ArrivalMode::Poisson,
            routing: RoutingMode::Random,
        }
    }
}

const STREAM_DEMAND: u64 = 1;
const STREAM_SERVICE: u64 = 2;
const STREAM_ROUTING: u64 = 3;

/// Seeded RNG for one purpose of one run.
pub fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

struct Router {
    mode: RoutingMode,
    rng: ChaCha8Rng,
    veh: Vec<Splitter>,
    entry: Vec<Splitter>,
    ped: Vec<Splitter>,
    scratch: Vec<f64>,
}

impl Router {
    fn choose(&mut self, which: Which, k: usize) -> usize {
        match self.mode {
            RoutingMode::Random => sample_categorical(&mut self.rng, &self.scratch),
            RoutingMode::Fixed => {
                let s = match which {
                    Which::Veh => &mut self.veh[k],
                    Which::Entry => &mut self.entry[k],
                    Which::Ped => &mut self.ped[k],
                };
                s.pick(&self.scratch)
            }
        }
    }
}

#[derive(Clone, Copy)]
enum Which {
    Veh,
    Entry,
    Ped,
}

fn ped_plan(net: &Network, rates: &Rates, router: &mut Router, link: PedLink) -> Plan {
    let k = net.ped_link_index(link);
    let e = rates.ped.exit_prob[k];
    let next = &rates.ped.next[k];
    router.scratch.clear();
    router.scratch.push(e);
    router
        .scratch
        .extend(next.iter().map(|&(_, p)| (1.0 - e) * p));
    match router.choose(Which::Ped, k) {
        0 => Plan::Exit,
        j => Plan::Continue(next[j - 1].0),
    }
}

/// Mutable simulation: state plus the random streams and splitters that
/// realize the stochastic rates.
pub struct Simulator<'a> {
    pub net: &'a Network,
    pub rates: &'a Rates,
    pub opts: DynamicsOptions,
    pub state: TrafficState,
    demand_rng: ChaCha8Rng,
    service_rng: ChaCha8Rng,
    router: Router,
    entry_acc: Vec<f64>,
    ped_acc: Vec<f64>,
    walk: f64,
}

impl<'a> Simulator<'a> {
    pub fn new(net: &'a Network, rates: &'a Rates, opts: DynamicsOptions, seed: u64) -> Self {
        assert_eq!(rates.veh_sat.len(), net.movements.len());
        assert_eq!(rates.cw_sat.len(), net.crosswalks.len());
        assert_eq!(rates.entry_demand.len(), net.links.len());
        assert_eq!(rates.ped.q_in.len(), net.n_ped_links());
        Simulator {
            net,
            rates,
            opts,
            state: TrafficState::empty(net),
            demand_rng: substream(seed, STREAM_DEMAND),
            service_rng: substream(seed, STREAM_SERVICE),
            router: Router {
                mode: opts.routing,
                rng: substream(seed, STREAM_ROUTING),
                veh: vec![Splitter::default(); net.movements.len()],
                entry: vec![Splitter::default(); net.links.len()],
                ped: vec![Splitter::default(); net.n_ped_links()],
                scratch: Vec::new(),
            },
            entry_acc: vec![0.0; net.links.len()],
            ped_acc: vec![0.0; net.n_ped_links()],
            walk: net.walk_per_step(),
        }
    }

    fn draw_count(&mut self, mean: f64, acc: Acc, k: usize) -> u32 {
        if mean <= 0.0 {
            return 0;
        }
        match self.opts.arrivals {
            ArrivalMode::Poisson => {
                let d = Poisson::new(mean).expect("positive finite mean");
                d.sample(&mut self.demand_rng) as u32
            }
            ArrivalMode::Deterministic => {
                let a = match acc {
                    Acc::Entry => &mut self.entry_acc[k],
                    Acc::Ped => &mut self.ped_acc[k],
                };
                *a += mean;
                let n = a.floor();
                *a -= n;
                n as u32
            }
        }
    }

    /// Realized demand for this step: vehicles per entry link and walkers
    /// generated per pedestrian link. All zero when `demand_on` is false.
    pub fn inject_demand(&mut self, demand_on: bool) -> (Vec<u32>, Vec<u32>) {
        let mut veh = vec![0; self.net.links.len()];
        let mut ped = vec![0; self.net.n_ped_links()];
        if !demand_on {
            return (veh, ped);
        }
        for l in 0..veh.len() {
            veh[l] = self.draw_count(self.rates.entry_demand[l], Acc::Entry, l);
        }
        for k in 0..ped.len() {
            ped[k] = self.draw_count(self.rates.ped.q_in[k], Acc::Ped, k);
        }
        (veh, ped)
    }

    fn realize_saturation(&mut self, phases: &[usize]) -> (Vec<f64>, Vec<f64>) {
        let cov = self.rates.sat_cov;
        let draw = |rng: &mut ChaCha8Rng, c: f64| -> f64 {
            if cov > 0.0 && c > 0.0 {
                let z: f64 = Normal::new(0.0, 1.0).unwrap().sample(rng);
                (c + cov * c * z).clamp(0.0, 2.0 * c)
            } else {
                c
            }
        };
        let mut cv: Vec<f64> = self
            .rates
            .veh_sat
            .iter()
            .map(|&c| draw(&mut self.service_rng, c))
            .collect();
        let mut cp: Vec<f64> = self
            .rates
            .cw_sat
            .iter()
            .map(|&c| draw(&mut self.service_rng, c))
            .collect();
        let dt = self.net.dt;
        let factor = ((dt - self.rates.lost_time) / dt).clamp(0.0, 1.0);
        for (i, &p) in phases.iter().enumerate() {
            if matches!(self.state.prev_phase[i], Some(q) if q != p) {
                for m in self.net.veh_range(i) {
                    cv[m] *= factor;
                }
                for k in self.net.cw_range(i) {
                    cp[k] *= factor;
                }
            }
        }
        (cv, cp)
    }

    /// Vehicle service counts for this step given realized saturation flows.
    /// Right turns use the pedestrian-adjusted flow when a conflicting
    /// crosswalk is served in the same phase.
    pub fn step_vehicles(&mut self, phases: &[usize], cv: &[f64], cp: &[f64]) -> Vec<u32> {
        let net = self.net;
        let mut served = vec![0u32; net.movements.len()];
        for (i, &p) in phases.iter().enumerate() {
            let phase = &net.phases[p];
            for k in 0..VEH_PER_INTERSECTION {
                let m = i * VEH_PER_INTERSECTION + k;
                let u: f64 = self.service_rng.gen();
                if !phase.veh_served[k] {
                    continue;
                }
                let mv = &net.movements[m];
                let cap = if mv.turn == Turn::Right {
                    let conflicts: Vec<(f64, f64, bool)> = mv
                        .conflicts
                        .iter()
                        .map(|c| {
                            let local = c.0 - i * CW_PER_INTERSECTION;
                            (
                                self.state.cw[c.0].len() as f64,
                                cp[c.0],
                                phase.cw_served[local],
                            )
                        })
                        .collect();
                    adjusted_saturation(cv[m], &conflicts)
                } else {
                    cv[m]
                };
                served[m] = stochastic_round(cap, u).min(self.state.veh[m]);
            }
        }
        served
    }

    /// Pops served pedestrians off crosswalk queues in FIFO order. Returns the
    /// per-crosswalk counts, the departing pedestrians and their summed wait.
    pub fn step_crosswalks(&mut self, phases: &[usize], cp: &[f64]) -> (Vec<u32>, Vec<CwPed>, f64) {
        let net = self.net;
        let now = self.state.clock(net.dt);
        let mut counts = vec![0u32; net.crosswalks.len()];
        let mut out = Vec::new();
        let mut wait = 0.0;
        for (i, &p) in phases.iter().enumerate() {
            let phase = &net.phases[p];
            for local in 0..CW_PER_INTERSECTION {
                let k = i * CW_PER_INTERSECTION + local;
                let u: f64 = self.service_rng.gen();
                if !phase.cw_served[local] {
                    continue;
                }
                let n = (stochastic_round(cp[k], u) as usize).min(self.state.cw[k].len());
                for ped in self.state.cw[k].drain(..n) {
                    wait += now - ped.arrived;
                    out.push(ped);
                }
                counts[k] = n as u32;
            }
        }
        (counts, out, wait)
    }

    /// Advances sidewalk walkers. Returns pedestrians reaching a downstream
    /// node this step (with their next link) and the number that exited.
    fn psi_stage(&mut self) -> (Vec<PedLink>, u64) {
        let net = self.net;
        let mut arrivals = Vec::new();
        let mut exits = 0;
        for (s, list) in self.state.walkers.iter_mut().enumerate() {
            let len = net.sidewalks[s].length;
            let remaining: Vec<f64> = list.iter().map(|w| w.remaining(len, self.walk)).collect();
            let reached = psi(&remaining, net.params.ped_speed, net.dt);
            if reached.is_empty() {
                continue;
            }
            let mut keep = Vec::with_capacity(list.len() - reached.len());
            let mut r = reached.iter().peekable();
            for (k, w) in list.drain(..).enumerate() {
                if r.peek() == Some(&&k) {
                    r.next();
                    match w.plan {
                        Plan::Continue(next) => arrivals.push(next),
                        Plan::Exit => exits += 1,
                    }
                } else {
                    keep.push(w);
                }
            }
            *list = keep;
        }
        (arrivals, exits)
    }

    /// Moves remaining walkers forward, removes walkers ending their trip at
    /// the midpoint, injects generated walkers and appends walkers that just
    /// turned onto each sidewalk. Returns the number of exits.
    pub fn step_sidewalks(&mut self, generated: &[u32], joining: &[PedLink]) -> u64 {
        let net = self.net;
        let ncw = net.crosswalks.len();
        let mut exits = 0;
        for (s, list) in self.state.walkers.iter_mut().enumerate() {
            let len = net.sidewalks[s].length;
            let walk = self.walk;
            for w in list.iter_mut() {
                w.steps += 1;
            }
            let before = list.len();
            list.retain(|w| !(w.plan == Plan::Exit && w.remaining(len, walk) <= len / 2.0));
            exits += (before - list.len()) as u64;
        }
        for k in ncw..net.n_ped_links() {
            for _ in 0..generated[k] {
                let link = net.ped_link_from_index(k);
                let plan = ped_plan(net, self.rates, &mut self.router, link);
                self.state.walkers[k - ncw].push(Walker { steps: 0, plan });
            }
        }
        for &link in joining {
            if let PedLink::Sidewalk(sid) = link {
                let plan = ped_plan(net, self.rates, &mut self.router, link);
                self.state.walkers[sid.0].push(Walker { steps: 0, plan });
            }
        }
        exits
    }

    /// Advances the whole network by one step under the given phase indices.
    pub fn step(&mut self, phases: &[usize], demand_on: bool) -> StepOutcome {
        let net = self.net;
        assert_eq!(phases.len(), net.n_intersections);
        let (entry, generated) = self.inject_demand(demand_on);
        let (cv, cp) = self.realize_saturation(phases);

        let veh_before = self.state.veh.clone();
        let cw_before = self.state.cw_counts();
        let veh_served = self.step_vehicles(phases, &cv, &cp);
        let (cw_served, departing, cw_wait) = self.step_crosswalks(phases, &cp);
        let (psi_arrivals, psi_exits) = self.psi_stage();

        // Everyone leaving a crosswalk or reaching a corner this step.
        let mut moving: Vec<PedLink> = departing.iter().map(|p| p.next).collect();
        moving.extend(psi_arrivals);
        let side_exits = self.step_sidewalks(&generated, &moving);
        let ncw = net.crosswalks.len();
        let mut sw_entered = generated[ncw..].to_vec();
        for &link in &moving {
            if let PedLink::Sidewalk(sid) = link {
                sw_entered[sid.0] += 1;
            }
        }

        let arrived_at = (self.state.t + 1) as f64 * net.dt;
        let mut cw_arrived = vec![0u32; net.crosswalks.len()];
        for &link in &moving {
            if let PedLink::Crosswalk(c) = link {
                let plan = ped_plan(net, self.rates, &mut self.router, link);
                let Plan::Continue(next) = plan else {
                    unreachable!("crosswalk movements have no exit share")
                };
                self.state.cw[c.0].push_back(CwPed {
                    arrived: arrived_at,
                    next,
                });
                cw_arrived[c.0] += 1;
            }
        }

        // Vehicles: departures, routing to the next link's movements, entries.
        let mut veh_arrived = vec![0u32; net.movements.len()];
        let mut veh_exited = 0u64;
        for (m, &y) in veh_served.iter().enumerate() {
            if y == 0 {
                continue;
            }
            self.state.veh[m] -= y;
            let down = &net.movements[m].downstream;
            if down.is_empty() {
                veh_exited += u64::from(y);
                continue;
            }
            for _ in 0..y {
                self.router.scratch.clear();
                self.router
                    .scratch
                    .extend(down.iter().map(|d| self.rates.turning.ratio[d.0]));
                let j = self.router.choose(Which::Veh, m);
                veh_arrived[down[j].0] += 1;
            }
        }
        let mut veh_entered = 0u64;
        for (l, &n) in entry.iter().enumerate() {
            if n == 0 {
                continue;
            }
            veh_entered += u64::from(n);
            let movs = &net.link_movements[l];
            for _ in 0..n {
                self.router.scratch.clear();
                self.router
                    .scratch
                    .extend(movs.iter().map(|d| self.rates.turning.ratio[d.0]));
                let j = self.router.choose(Which::Entry, l);
                veh_arrived[movs[j].0] += 1;
            }
        }
        for (x, a) in self.state.veh.iter_mut().zip(&veh_arrived) {
            *x += a;
        }

        let ped_generated: u64 = generated.iter().map(|&g| u64::from(g)).sum();
        let ped_exited = psi_exits + side_exits;
        let totals = &mut self.state.totals;
        totals.veh_entered += veh_entered;
        totals.veh_exited += veh_exited;
        totals.ped_generated += ped_generated;
        totals.ped_exited += ped_exited;
        for (i, &p) in phases.iter().enumerate() {
            self.state.prev_phase[i] = Some(p);
        }
        self.state.t += 1;

        StepOutcome {
            veh_before,
            veh_served,
            veh_arrived,
            cw_before,
            cw_served,
            cw_arrived,
            sw_entered,
            cw_wait_served: cw_wait,
            veh_entered,
            veh_exited,
            ped_generated,
            ped_exited,
        }
    }
}

#[derive(Clone, Copy)]
enum Acc {
    Entry,
    Ped,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{local_cw, local_veh, GridParams, Side};
    use crate::od::{compile, OdSpec};

    fn grid(rows: usize, cols: usize) -> Network {
        Network::grid(GridParams {
            rows,
            cols,
            ..GridParams::default()
        })
        .unwrap()
    }

    fn rates(net: &Network, demand: f64, ped_scale: f64) -> Rates {
        Rates {
            veh_sat: vec![10.0; net.movements.len()],
            cw_sat: vec![8.0; net.crosswalks.len()],
            sat_cov: 0.0,
            turning: VehTurning::uniform_shares(net, 0.25, 0.5, 0.25),
            ped: compile(
                net,
                &OdSpec {
                    p_high: 0.6,
                    p_low: 0.3,
                    rate_scale: ped_scale,
                    high_region: vec![true; net.n_intersections],
                },
            ),
            entry_demand: Rates::uniform_entry_demand(net, demand),
            lost_time: 0.0,
        }
    }

    #[test]
    fn psi_examples() {
        assert_eq!(psi(&[10.0, 30.0, 50.0], 1.3, 20.0), vec![0]);
        assert!(psi(&[], 1.3, 20.0).is_empty());
        assert_eq!(psi(&[1.0, 26.0, 0.0], 1.3, 20.0), vec![0, 1, 2]);
    }

    #[test]
    fn walker_kinematics() {
        let w = Walker {
            steps: 0,
            plan: Plan::Exit,
        };
        let walk = 1.3 * 20.0;
        let b0 = 100.0;
        let after = Walker { steps: 1, ..w };
        assert_eq!(b0 - (after.steps as f64) * walk, 74.0);
        assert_eq!(after.remaining(300.0, walk), 274.0);
    }

    #[test]
    fn demand_unit_conversion() {
        let m = Rates::per_step(400.0, 20.0);
        assert!((m - 2.222_222).abs() < 1e-6);
    }

    #[test]
    fn splitter_exact_shares() {
        let mut s = Splitter::default();
        let mut c = [0; 2];
        for _ in 0..5 {
            c[s.pick(&[0.4, 0.6])] += 1;
        }
        assert_eq!(c, [2, 3]);
    }

    #[test]
    fn vehicle_service_clamps_to_queue() {
        let net = grid(1, 1);
        let r = rates(&net, 0.0, 0.0);
        let mut sim = Simulator::new(&net, &r, DynamicsOptions::default(), 1);
        let nb_t = local_veh(Side::South, Turn::Through);
        let sb_t = local_veh(Side::North, Turn::Through);
        sim.state.veh[nb_t] = 7;
        sim.state.veh[sb_t] = 3;
        let cv = vec![5.0; 12];
        let cp = vec![8.0; 8];
        let y = sim.step_vehicles(&[0], &cv, &cp);
        assert_eq!(y[nb_t], 5);
        let cv = vec![10.0; 12];
        let y = sim.step_vehicles(&[0], &cv, &cp);
        assert_eq!(y[sb_t], 3);
    }

    #[test]
    fn right_turn_yields_to_served_crosswalk() {
        let net = grid(1, 1);
        let r = rates(&net, 0.0, 0.0);
        let mut sim = Simulator::new(&net, &r, DynamicsOptions::default(), 1);
        let nb_r = local_veh(Side::South, Turn::Right);
        sim.state.veh[nb_r] = 20;
        let cw = local_cw(Side::East, true);
        for _ in 0..4 {
            sim.state.cw[cw].push_back(CwPed {
                arrived: 0.0,
                next: PedLink::Crosswalk(net.crosswalks[cw].downstream),
            });
        }
        let cv = vec![10.0; 12];
        let cp = vec![8.0; 8];
        // Phase 1 serves the eastern crosswalk alongside NS through-right.
        let y = sim.step_vehicles(&[1], &cv, &cp);
        assert_eq!(y[nb_r], 5);
        let y = sim.step_vehicles(&[0], &cv, &cp);
        assert_eq!(y[nb_r], 10);
    }

    #[test]
    fn crosswalk_fifo_service() {
        let net = grid(1, 1);
        let r = rates(&net, 0.0, 0.0);
        let mut sim = Simulator::new(&net, &r, DynamicsOptions::default(), 1);
        let k = local_cw(Side::North, true);
        let next = PedLink::Crosswalk(net.crosswalks[k].downstream);
        for j in 0..12 {
            sim.state.cw[k].push_back(CwPed {
                arrived: j as f64,
                next,
            });
        }
        let cp = vec![8.0; 8];
        let (n, out, _) = sim.step_crosswalks(&[10], &cp);
        assert_eq!(n[k], 8);
        assert_eq!(sim.state.cw[k].len(), 4);
        assert_eq!(sim.state.cw[k].front().unwrap().arrived, 8.0);
        let order: Vec<f64> = out.iter().map(|p| p.arrived).collect();
        assert_eq!(order, (0..8).map(|j| j as f64).collect::<Vec<_>>());
        let (n, _, _) = sim.step_crosswalks(&[10], &cp);
        assert_eq!(n[k], 4);
        assert!(sim.state.cw[k].is_empty());
    }

    #[test]
    fn idle_network_stays_empty() {
        let net = grid(2, 2);
        let r = rates(&net, 0.0, 0.0);
        let mut sim = Simulator::new(&net, &r, DynamicsOptions::default(), 5);
        for _ in 0..10 {
            let o = sim.step(&[0, 4, 5, 9], true);
            assert_eq!(o.veh_entered, 0);
        }
        assert_eq!(sim.state.total_vehicles(), 0);
        assert_eq!(sim.state.total_cw(), 0);
    }

    #[test]
    fn unserved_crosswalk_accumulates() {
        let net = grid(1, 1);
        let r = rates(&net, 0.0, 0.0);
        let mut sim = Simulator::new(&net, &r, DynamicsOptions::default(), 1);
        let k = local_cw(Side::West, false);
        // Three walkers about to reach the corner, all bound for crosswalk k.
        let from = net.crosswalks[k].from;
        let sid = net
            .sidewalks
            .iter()
            .position(|s| s.to == from)
            .unwrap();
        for _ in 0..3 {
            sim.state.walkers[sid].push(Walker {
                steps: 11,
                plan: Plan::Continue(PedLink::Crosswalk(crate::net::CrosswalkId(k))),
            });
        }
        let o = sim.step(&[4], false);
        assert_eq!(o.cw_arrived[k], 3);
        assert_eq!(sim.state.cw[k].len(), 3);
        assert_eq!(sim.state.head_wait(k, net.dt), 0.0);
    }

    #[test]
    fn conservation_every_step() {
        let net = grid(2, 2);
        let r = rates(&net, 2.0, 0.02);
        let mut sim = Simulator::new(&net, &r, DynamicsOptions::default(), 9);
        for t in 0..200 {
            let p = [(t % 11), (t * 3) % 11, (t * 7) % 11, 2];
            sim.step(&p, t < 150);
            let s = &sim.state;
            assert_eq!(s.totals.veh_entered, s.total_vehicles() + s.totals.veh_exited);
            assert_eq!(
                s.totals.ped_generated,
                s.total_walkers() + s.total_cw() + s.totals.ped_exited
            );
        }
    }

    #[test]
    fn deterministic_mode_reproduces() {
        let net = grid(2, 2);
        let mut r = rates(&net, 2.0, 0.02);
        r.sat_cov = 0.0;
        let opts = DynamicsOptions {
            arrivals: ArrivalMode::Deterministic,
            routing: RoutingMode::Fixed,
        };
        let run = |seed| {
            let mut sim = Simulator::new(&net, &r, opts, seed);
            for t in 0..100 {
                sim.step(&[t % 11, 5, 0, 10], true);
            }
            (sim.state.veh.clone(), sim.state.cw_counts())
        };
        assert_eq!(run(1), run(1));
    }
}

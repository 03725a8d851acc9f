//! Steady-state flows, the per-intersection stable-region LP, empirical
//! stability classification and the quadratic drift diagnostic.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::StabilityError;
use crate::lp::{self, Cmp, Constraint, Lp, LpOutcome};
use crate::net::{Network, Turn, VehTurning, CW_PER_INTERSECTION, VEH_PER_INTERSECTION};
use crate::od::PedRouting;

#[derive(Clone, Debug, Serialize)]
pub struct SteadyFlows {
    /// Vehicles/step per vehicle movement.
    pub veh: Vec<f64>,
    /// Pedestrians/step per crosswalk movement.
    pub cw: Vec<f64>,
    /// Pedestrians/step entering each directed sidewalk.
    pub sidewalk: Vec<f64>,
}

impl SteadyFlows {
    pub fn scaled(&self, a: f64) -> SteadyFlows {
        let s = |v: &Vec<f64>| v.iter().map(|x| x * a).collect();
        SteadyFlows {
            veh: s(&self.veh),
            cw: s(&self.cw),
            sidewalk: s(&self.sidewalk),
        }
    }
}

/// Solves `f = b + P^T f` where `succ[u]` lists `(v, P[u][v])`. Nodes that
/// cannot reach a leak and carry no flow are pinned to zero; a non-draining
/// set that does receive flow is an error naming one of its cycles.
fn solve_routing(
    kind: &'static str,
    b: &[f64],
    succ: &[Vec<(usize, f64)>],
) -> Result<Vec<f64>, StabilityError> {
    let n = b.len();
    let leaks: Vec<bool> = succ
        .iter()
        .map(|s| s.iter().map(|e| e.1).sum::<f64>() < 1.0 - 1e-12)
        .collect();
    let mut pred: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (u, s) in succ.iter().enumerate() {
        for &(v, p) in s {
            if p > 0.0 {
                pred[v].push(u);
            }
        }
    }
    let mut drains = leaks.clone();
    let mut queue: VecDeque<usize> = (0..n).filter(|&u| leaks[u]).collect();
    while let Some(v) = queue.pop_front() {
        for &u in &pred[v] {
            if !drains[u] {
                drains[u] = true;
                queue.push_back(u);
            }
        }
    }
    let mut reached: Vec<bool> = b.iter().map(|&x| x > 0.0).collect();
    let mut queue: VecDeque<usize> = (0..n).filter(|&u| reached[u]).collect();
    while let Some(u) = queue.pop_front() {
        for &(v, p) in &succ[u] {
            if p > 0.0 && !reached[v] {
                reached[v] = true;
                queue.push_back(v);
            }
        }
    }
    if let Some(start) = (0..n).find(|&u| reached[u] && !drains[u]) {
        let mut seen = vec![usize::MAX; n];
        let mut path = Vec::new();
        let mut u = start;
        while seen[u] == usize::MAX {
            seen[u] = path.len();
            path.push(u);
            u = succ[u]
                .iter()
                .find(|&&(v, p)| p > 0.0 && !drains[v])
                .map(|e| e.0)
                .expect("non-draining node keeps its mass inside the set");
        }
        return Err(StabilityError::NonDrainingCycle {
            kind,
            cycle: path[seen[u]..].to_vec(),
        });
    }

    let active: Vec<usize> = (0..n).filter(|&u| drains[u]).collect();
    let mut pos = vec![usize::MAX; n];
    for (k, &u) in active.iter().enumerate() {
        pos[u] = k;
    }
    let na = active.len();
    let mut a = DMatrix::<f64>::identity(na, na);
    let mut rhs = DVector::<f64>::zeros(na);
    for (k, &u) in active.iter().enumerate() {
        rhs[k] = b[u];
        for &(v, p) in &succ[u] {
            if pos[v] != usize::MAX {
                a[(pos[v], k)] -= p;
            }
        }
    }
    let f = a
        .clone()
        .lu()
        .solve(&rhs)
        .ok_or(StabilityError::Singular(f64::INFINITY))?;
    let resid = (&a * &f - &rhs).amax() / rhs.amax().max(1.0);
    if !(resid < 1e-9) {
        return Err(StabilityError::Singular(resid));
    }
    let mut out = vec![0.0; n];
    for (k, &u) in active.iter().enumerate() {
        out[u] = f[k].max(0.0);
    }
    Ok(out)
}

/// Mean movement flows implied by entry demand (vehicles/step per link),
/// mean vehicle turning ratios and the compiled pedestrian routing.
pub fn solve_steady_flows(
    net: &Network,
    entry_demand: &[f64],
    turning: &VehTurning,
    ped: &PedRouting,
) -> Result<SteadyFlows, StabilityError> {
    if entry_demand.len() != net.links.len() {
        return Err(StabilityError::Shape {
            expected: net.links.len(),
            got: entry_demand.len(),
        });
    }
    let b: Vec<f64> = net
        .movements
        .iter()
        .enumerate()
        .map(|(m, mv)| entry_demand[mv.in_link] * turning.ratio[m])
        .collect();
    let succ: Vec<Vec<(usize, f64)>> = net
        .movements
        .iter()
        .map(|mv| {
            mv.downstream
                .iter()
                .map(|d| (d.0, turning.ratio[d.0]))
                .collect()
        })
        .collect();
    let veh = solve_routing("vehicle", &b, &succ)?;

    let n = net.n_ped_links();
    let succ: Vec<Vec<(usize, f64)>> = (0..n)
        .map(|u| {
            let stay = 1.0 - ped.exit_prob[u];
            ped.next[u]
                .iter()
                .map(|&(l, p)| (net.ped_link_index(l), stay * p))
                .collect()
        })
        .collect();
    let g = solve_routing("pedestrian", &ped.q_in, &succ)?;
    let ncw = net.crosswalks.len();
    Ok(SteadyFlows {
        veh,
        cw: g[..ncw].to_vec(),
        sidewalk: g[ncw..].to_vec(),
    })
}

/// Maximum residual of the flow balance equations, relative to the largest
/// flow; used by tests as the acceptance check on a solution.
pub fn flow_residual(
    net: &Network,
    flows: &SteadyFlows,
    entry_demand: &[f64],
    turning: &VehTurning,
    ped: &PedRouting,
) -> f64 {
    let mut worst: f64 = 0.0;
    let mut inflow = vec![0.0; net.links.len()];
    for (l, &d) in entry_demand.iter().enumerate() {
        inflow[l] += d;
    }
    for (m, mv) in net.movements.iter().enumerate() {
        inflow[mv.out_link] += flows.veh[m];
    }
    for (m, mv) in net.movements.iter().enumerate() {
        worst = worst.max((flows.veh[m] - turning.ratio[m] * inflow[mv.in_link]).abs());
    }
    let g: Vec<f64> = flows.cw.iter().chain(&flows.sidewalk).copied().collect();
    let mut expect = ped.q_in.clone();
    for u in 0..g.len() {
        for &(l, p) in &ped.next[u] {
            expect[net.ped_link_index(l)] += g[u] * (1.0 - ped.exit_prob[u]) * p;
        }
    }
    for u in 0..g.len() {
        worst = worst.max((g[u] - expect[u]).abs());
    }
    let scale = flows
        .veh
        .iter()
        .chain(&g)
        .fold(1.0_f64, |a, &b| a.max(b.abs()));
    worst / scale
}

/// How right-turn capacity is charged for yielding inside the LP.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PedAdjustment {
    /// A right turn gets no capacity in a phase serving its conflicting
    /// crosswalk; yielding time is carved out of the phase mix itself.
    #[default]
    TimeSharing,
    /// Right-turn capacity in such phases is `c (1 - rho)` with
    /// `rho = min(1, max conflicting f / c_p)`.
    Stationary,
    /// No adjustment.
    Off,
}

/// Result of one max-min-slack program.
#[derive(Clone, Debug, Serialize)]
pub struct LocalFeasibility {
    pub feasible: bool,
    /// Convex weights over phases.
    pub pi: Vec<f64>,
    /// Smallest service-minus-flow margin over all constraints.
    pub slack: f64,
    /// Constraint indices whose margin equals `slack`.
    pub binding: Vec<usize>,
}

/// Maximizes the minimum margin `sum_e pi_e cap[e][j] - flow[j]` over the
/// simplex of phase weights. `cap` is indexed phase-major.
pub fn max_min_slack(cap: &[Vec<f64>], flow: &[f64]) -> LocalFeasibility {
    let ne = cap.len();
    let nm = flow.len();
    let n = ne + 2;
    let mut objective = vec![0.0; n];
    objective[ne] = 1.0;
    objective[ne + 1] = -1.0;
    let mut constraints = Vec::with_capacity(nm + 1);
    for j in 0..nm {
        let mut coef: Vec<f64> = cap.iter().map(|row| row[j]).collect();
        coef.push(-1.0);
        coef.push(1.0);
        constraints.push(Constraint {
            coef,
            cmp: Cmp::Ge,
            rhs: flow[j],
        });
    }
    let mut coef = vec![1.0; ne];
    coef.extend([0.0, 0.0]);
    constraints.push(Constraint {
        coef,
        cmp: Cmp::Eq,
        rhs: 1.0,
    });
    let pi = match lp::solve(&Lp {
        objective,
        constraints,
    }) {
        LpOutcome::Optimal { x, .. } => x[..ne].to_vec(),
        // The slack variable always admits a feasible point and is bounded
        // by the largest capacity.
        other => unreachable!("max-min-slack program returned {other:?}"),
    };
    let margins: Vec<f64> = (0..nm)
        .map(|j| (0..ne).map(|e| pi[e] * cap[e][j]).sum::<f64>() - flow[j])
        .collect();
    let slack = margins.iter().copied().fold(f64::INFINITY, f64::min);
    let binding = (0..nm)
        .filter(|&j| margins[j] <= slack + 1e-9)
        .collect();
    LocalFeasibility {
        feasible: slack >= -FEAS_TOL,
        pi,
        slack,
        binding,
    }
}

/// Margin below which a demand is reported infeasible.
pub const FEAS_TOL: f64 = 1e-9;

/// Per-phase capacities at intersection `i`: 12 vehicle then 8 crosswalk
/// columns per phase.
pub fn phase_capacities(
    net: &Network,
    i: usize,
    veh_sat: &[f64],
    cw_sat: &[f64],
    cw_flow: &[f64],
    mode: PedAdjustment,
) -> Vec<Vec<f64>> {
    net.phases
        .iter()
        .map(|ph| {
            let mut row = Vec::with_capacity(VEH_PER_INTERSECTION + CW_PER_INTERSECTION);
            for k in 0..VEH_PER_INTERSECTION {
                let m = i * VEH_PER_INTERSECTION + k;
                let mv = &net.movements[m];
                if !ph.veh_served[k] {
                    row.push(0.0);
                    continue;
                }
                let yields: Vec<usize> = mv
                    .conflicts
                    .iter()
                    .map(|c| c.0)
                    .filter(|&c| ph.cw_served[c - i * CW_PER_INTERSECTION])
                    .collect();
                let c = veh_sat[m];
                let cap = if mv.turn != Turn::Right || yields.is_empty() {
                    c
                } else {
                    match mode {
                        PedAdjustment::TimeSharing => 0.0,
                        PedAdjustment::Stationary => {
                            let rho = yields
                                .iter()
                                .map(|&k| {
                                    if cw_sat[k] > 0.0 {
                                        cw_flow[k] / cw_sat[k]
                                    } else {
                                        1.0
                                    }
                                })
                                .fold(0.0, f64::max)
                                .min(1.0);
                            c * (1.0 - rho)
                        }
                        PedAdjustment::Off => c,
                    }
                };
                row.push(cap);
            }
            for local in 0..CW_PER_INTERSECTION {
                let k = i * CW_PER_INTERSECTION + local;
                row.push(if ph.cw_served[local] { cw_sat[k] } else { 0.0 });
            }
            row
        })
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct FeasibilityResult {
    pub feasible: bool,
    pub slack: f64,
    pub mode: PedAdjustment,
    pub intersections: Vec<LocalFeasibility>,
    /// Directed sidewalks whose flow exceeds the sidewalk capacity.
    pub sidewalk_violations: Vec<usize>,
}

/// Stable-region test for every intersection of the network.
pub fn check_feasibility(
    net: &Network,
    flows: &SteadyFlows,
    veh_sat: &[f64],
    cw_sat: &[f64],
    sidewalk_cap: f64,
    mode: PedAdjustment,
) -> FeasibilityResult {
    let intersections: Vec<LocalFeasibility> = (0..net.n_intersections)
        .map(|i| {
            let cap = phase_capacities(net, i, veh_sat, cw_sat, &flows.cw, mode);
            let flow: Vec<f64> = net
                .veh_range(i)
                .map(|m| flows.veh[m])
                .chain(net.cw_range(i).map(|k| flows.cw[k]))
                .collect();
            max_min_slack(&cap, &flow)
        })
        .collect();
    let sidewalk_violations: Vec<usize> = flows
        .sidewalk
        .iter()
        .enumerate()
        .filter(|(_, &f)| f > sidewalk_cap)
        .map(|(s, _)| s)
        .collect();
    let slack = intersections
        .iter()
        .map(|l| l.slack)
        .fold(f64::INFINITY, f64::min);
    FeasibilityResult {
        feasible: intersections.iter().all(|l| l.feasible) && sidewalk_violations.is_empty(),
        slack,
        mode,
        intersections,
        sidewalk_violations,
    }
}

/// Largest factor by which all demand can be multiplied while staying in
/// the stable region, found by bisection to relative precision `1e-9`.
pub fn critical_scale(
    net: &Network,
    flows: &SteadyFlows,
    veh_sat: &[f64],
    cw_sat: &[f64],
    mode: PedAdjustment,
) -> f64 {
    let feasible = |a: f64| {
        check_feasibility(net, &flows.scaled(a), veh_sat, cw_sat, f64::INFINITY, mode).feasible
    };
    let mut hi = 1.0;
    while feasible(hi) {
        hi *= 2.0;
        if hi > 1e9 {
            return f64::INFINITY;
        }
    }
    let mut lo = 0.0;
    while hi - lo > 1e-9 * hi {
        let mid = 0.5 * (lo + hi);
        if feasible(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Stable,
    Unstable,
}

/// Least-squares slope of `y` against its index.
pub fn ls_slope(y: &[f64]) -> f64 {
    let n = y.len() as f64;
    let mx = (n - 1.0) / 2.0;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (k, &v) in y.iter().enumerate() {
        let dx = k as f64 - mx;
        sxy += dx * (v - my);
        sxx += dx * dx;
    }
    if sxx == 0.0 {
        0.0
    } else {
        sxy / sxx
    }
}

/// Unstable when the slope over the second half of the loading series
/// exceeds `theta * mean / len`, the growth that would add `theta` times
/// the current level over the whole horizon.
pub fn classify_run(series: &[f64], theta: f64) -> Result<Verdict, StabilityError> {
    if series.len() < 20 {
        return Err(StabilityError::SeriesTooShort(series.len()));
    }
    let half = &series[series.len() / 2..];
    let slope = ls_slope(half);
    let mean = half.iter().sum::<f64>() / half.len() as f64;
    Ok(if slope > theta * mean / series.len() as f64 {
        Verdict::Unstable
    } else {
        Verdict::Stable
    })
}

/// `|Xv'|^2 - |Xv|^2 + lambda (|Xp'|^2 - |Xp|^2)`.
pub fn lyapunov_drift(veh0: &[f64], cw0: &[f64], veh1: &[f64], cw1: &[f64], lambda: f64) -> f64 {
    let sq = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>();
    sq(veh1) - sq(veh0) + lambda * (sq(cw1) - sq(cw0))
}

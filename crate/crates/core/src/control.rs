//! Signal controllers: pedestrian-aware max pressure, the vehicle-only
//! baseline and the waiting-time threshold rule, plus the crosswalk-count
//! measurement noise model.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::net::{
    local_cw, Network, PedLink, PhaseFamily, Side, SignalPhase, Turn, CW_PER_INTERSECTION,
    EXCLUSIVE_PED_PHASE, VEH_PER_INTERSECTION,
};
use crate::od::PedRouting;
use crate::net::VehTurning;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "snake_case")]
pub enum ControllerKind {
    Pqmp,
    Qmp,
    Rule,
}

impl ControllerKind {
    pub fn name(self) -> &'static str {
        match self {
            ControllerKind::Pqmp => "pqmp",
            ControllerKind::Qmp => "qmp",
            ControllerKind::Rule => "rule",
        }
    }

    pub fn parse(s: &str) -> Option<ControllerKind> {
        match s {
            "pqmp" => Some(ControllerKind::Pqmp),
            "qmp" => Some(ControllerKind::Qmp),
            "rule" | "rule_based" => Some(ControllerKind::Rule),
            _ => None,
        }
    }
}

/// One concrete controller setting.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ControllerConfig {
    pub kind: ControllerKind,
    pub lambda: f64,
    pub tau: f64,
    pub sigma: f64,
}

impl ControllerConfig {
    pub fn pqmp(lambda: f64, sigma: f64) -> Self {
        ControllerConfig {
            kind: ControllerKind::Pqmp,
            lambda,
            tau: 0.0,
            sigma,
        }
    }

    pub fn qmp() -> Self {
        ControllerConfig {
            kind: ControllerKind::Qmp,
            lambda: 0.0,
            tau: 0.0,
            sigma: 0.0,
        }
    }

    pub fn rule(tau: f64) -> Self {
        ControllerConfig {
            kind: ControllerKind::Rule,
            lambda: 0.0,
            tau,
            sigma: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        match self.kind {
            ControllerKind::Pqmp if !(self.lambda > 0.0 && self.lambda < 1.0) => {
                Err(format!("lambda must lie in (0, 1), got {}", self.lambda))
            }
            ControllerKind::Rule if !(self.tau > 0.0 && self.tau.is_finite()) => {
                Err(format!("tau must be positive, got {}", self.tau))
            }
            _ if !(self.sigma >= 0.0 && self.sigma.is_finite()) => {
                Err(format!("sigma must be nonnegative, got {}", self.sigma))
            }
            _ => Ok(()),
        }
    }

    /// Short label used in report rows, e.g. `lambda=0.001;sigma=0`.
    pub fn param_label(&self) -> String {
        match self.kind {
            ControllerKind::Pqmp => format!(
                "lambda={};sigma={}",
                crate::report::sig6(self.lambda),
                crate::report::sig6(self.sigma)
            ),
            ControllerKind::Rule => format!("tau={}", crate::report::sig6(self.tau)),
            ControllerKind::Qmp => "-".to_string(),
        }
    }
}

/// Mean quantities known to every controller.
#[derive(Clone, Copy, Debug)]
pub struct Means<'a> {
    pub veh_sat: &'a [f64],
    pub cw_sat: &'a [f64],
    pub turning: &'a VehTurning,
    pub ped: &'a PedRouting,
}

/// What a controller sees at one step.
#[derive(Clone, Debug)]
pub struct Observation {
    pub veh: Vec<f64>,
    /// Crosswalk queue counts, possibly noised; never negative.
    pub cw: Vec<f64>,
    /// Seconds since the head of each crosswalk queue arrived; 0 when empty.
    pub cw_head_wait: Vec<f64>,
}

/// Queue minus ratio-weighted downstream queues.
pub fn weight(x: f64, downstream: &[(f64, f64)]) -> f64 {
    x - downstream.iter().map(|&(q, r)| q * r).sum::<f64>()
}

/// Vehicle movement weight; the downstream sum is empty for exit links.
pub fn vehicle_weight(net: &Network, m: usize, obs: &Observation, means: &Means) -> f64 {
    let down: Vec<(f64, f64)> = net.movements[m]
        .downstream
        .iter()
        .map(|d| (obs.veh[d.0], means.turning.ratio[d.0]))
        .collect();
    weight(obs.veh[m], &down)
}

/// Crosswalk movement weight against its unique downstream crosswalk.
pub fn ped_weight(net: &Network, k: usize, obs: &Observation, means: &Means) -> f64 {
    let d = net.crosswalks[k].downstream;
    let r = means.ped.ratio_to(k, PedLink::Crosswalk(d));
    weight(obs.cw[k], &[(obs.cw[d.0], r)])
}

/// Right-turn saturation flow after yielding to served conflicting
/// crosswalks. Each conflict is `(queue, crosswalk saturation, served)`.
pub fn adjusted_saturation(c_v: f64, conflicts: &[(f64, f64, bool)]) -> f64 {
    let frac = conflicts
        .iter()
        .filter(|c| c.2)
        .map(|&(x, c_p, _)| {
            if x <= 0.0 {
                0.0
            } else if c_p > 0.0 {
                x / c_p
            } else {
                f64::INFINITY
            }
        })
        .fold(0.0, f64::max);
    c_v * (1.0 - frac.min(1.0))
}

fn served_conflicts(
    net: &Network,
    i: usize,
    m: usize,
    phase: &SignalPhase,
    obs: &Observation,
    means: &Means,
) -> Vec<(f64, f64, bool)> {
    net.movements[m]
        .conflicts
        .iter()
        .map(|c| {
            (
                obs.cw[c.0],
                means.cw_sat[c.0],
                phase.cw_served[c.0 - i * CW_PER_INTERSECTION],
            )
        })
        .collect()
}

/// Pressure of `phase` at intersection `i`: vehicle weights times adjusted
/// mean saturation flows plus `lambda` times crosswalk weights times mean
/// crosswalk saturation flows, over served movements.
pub fn phase_pressure(
    net: &Network,
    i: usize,
    phase: &SignalPhase,
    obs: &Observation,
    means: &Means,
    lambda: f64,
) -> f64 {
    let mut veh = 0.0;
    for k in 0..VEH_PER_INTERSECTION {
        if !phase.veh_served[k] {
            continue;
        }
        let m = i * VEH_PER_INTERSECTION + k;
        let c = if net.movements[m].turn == Turn::Right {
            adjusted_saturation(
                means.veh_sat[m],
                &served_conflicts(net, i, m, phase, obs, means),
            )
        } else {
            means.veh_sat[m]
        };
        veh += vehicle_weight(net, m, obs, means) * c;
    }
    let mut ped = 0.0;
    for local in 0..CW_PER_INTERSECTION {
        if phase.cw_served[local] {
            let k = i * CW_PER_INTERSECTION + local;
            ped += ped_weight(net, k, obs, means) * means.cw_sat[k];
        }
    }
    veh + lambda * ped
}

fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    for (k, v) in values.enumerate() {
        if v > best_v {
            best = k;
            best_v = v;
        }
    }
    best
}

/// Max-pressure over all phases; ties go to the lowest phase index.
pub fn pqmp_select(net: &Network, i: usize, obs: &Observation, means: &Means, lambda: f64) -> usize {
    argmax(
        net.phases
            .iter()
            .map(|p| phase_pressure(net, i, p, obs, means, lambda)),
    )
}

/// Vehicle-only pressure of a family: weights times unadjusted mean flows.
fn family_pressure(net: &Network, i: usize, fam: PhaseFamily, obs: &Observation, means: &Means) -> f64 {
    let phase = &net.phases[fam.vehicle_only_phase()];
    (0..VEH_PER_INTERSECTION)
        .filter(|&k| phase.veh_served[k])
        .map(|k| {
            let m = i * VEH_PER_INTERSECTION + k;
            vehicle_weight(net, m, obs, means) * means.veh_sat[m]
        })
        .sum()
}

fn best_family(net: &Network, i: usize, obs: &Observation, means: &Means) -> PhaseFamily {
    let k = argmax(
        PhaseFamily::ALL
            .iter()
            .map(|&f| family_pressure(net, i, f, obs, means)),
    );
    PhaseFamily::ALL[k]
}

/// Vehicle-only max pressure; a winning through-right family also serves
/// both of its parallel crosswalks.
pub fn qmp_select(net: &Network, i: usize, obs: &Observation, means: &Means) -> usize {
    best_family(net, i, obs, means).with_all_parallel_crosswalks()
}

/// Physical crosswalks (legs) with at least one direction whose head of
/// queue has waited `tau` seconds or more.
pub fn expired_legs(i: usize, obs: &Observation, tau: f64) -> Vec<Side> {
    Side::ALL
        .into_iter()
        .filter(|&leg| {
            [true, false].iter().any(|&cwise| {
                let k = i * CW_PER_INTERSECTION + local_cw(leg, cwise);
                obs.cw[k] > 0.0 && obs.cw_head_wait[k] >= tau
            })
        })
        .collect()
}

/// Threshold rule: vehicle-only max pressure until some crosswalk's head
/// waits `tau`, then the phase serving exactly the expired crosswalks, or
/// the exclusive pedestrian phase when both walking axes have expired.
pub fn rule_based_select(
    net: &Network,
    i: usize,
    obs: &Observation,
    means: &Means,
    tau: f64,
) -> usize {
    let legs = expired_legs(i, obs, tau);
    let has = |s: Side| legs.contains(&s);
    // East and west crossings run alongside north-south traffic.
    let ns_walk = has(Side::East) || has(Side::West);
    let ew_walk = has(Side::North) || has(Side::South);
    match (ns_walk, ew_walk) {
        (false, false) => best_family(net, i, obs, means).vehicle_only_phase(),
        (true, true) => EXCLUSIVE_PED_PHASE,
        (true, false) => match (has(Side::East), has(Side::West)) {
            (true, false) => 1,
            (false, true) => 3,
            _ => 2,
        },
        (false, true) => match (has(Side::North), has(Side::South)) {
            (true, false) => 6,
            (false, true) => 8,
            _ => 7,
        },
    }
}

/// Dispatches to the configured policy.
pub fn select(net: &Network, i: usize, obs: &Observation, means: &Means, cfg: &ControllerConfig) -> usize {
    match cfg.kind {
        ControllerKind::Pqmp => pqmp_select(net, i, obs, means, cfg.lambda),
        ControllerKind::Qmp => qmp_select(net, i, obs, means),
        ControllerKind::Rule => rule_based_select(net, i, obs, means, cfg.tau),
    }
}

/// Replaces each count by a draw from Normal(x, sigma * x), clamped at 0.
/// One standard normal is drawn per count regardless of sigma so runs that
/// differ only in sigma share their noise realizations.
pub fn perturb_measurement<R: Rng>(x: &[u32], sigma: f64, rng: &mut R) -> Vec<f64> {
    x.iter()
        .map(|&q| {
            let z: f64 = StandardNormal.sample(rng);
            let q = f64::from(q);
            (q + sigma * q * z).max(0.0)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{local_veh, GridParams};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    struct Fixture {
        net: Network,
        veh_sat: Vec<f64>,
        cw_sat: Vec<f64>,
        turning: VehTurning,
        ped: PedRouting,
    }

    impl Fixture {
        fn new(rows: usize, cols: usize) -> Self {
            let net = Network::grid(GridParams {
                rows,
                cols,
                ..GridParams::default()
            })
            .unwrap();
            Fixture {
                veh_sat: vec![10.0; net.movements.len()],
                cw_sat: vec![8.0; net.crosswalks.len()],
                turning: VehTurning::uniform_shares(&net, 0.25, 0.5, 0.25),
                ped: PedRouting::empty(&net),
                net,
            }
        }

        fn means(&self) -> Means<'_> {
            Means {
                veh_sat: &self.veh_sat,
                cw_sat: &self.cw_sat,
                turning: &self.turning,
                ped: &self.ped,
            }
        }

        fn empty_obs(&self) -> Observation {
            Observation {
                veh: vec![0.0; self.net.movements.len()],
                cw: vec![0.0; self.net.crosswalks.len()],
                cw_head_wait: vec![0.0; self.net.crosswalks.len()],
            }
        }
    }

    #[test]
    fn weight_examples() {
        assert_eq!(weight(10.0, &[(4.0, 0.5), (2.0, 0.5)]), 7.0);
        assert_eq!(weight(9.0, &[]), 9.0);
        assert_eq!(weight(6.0, &[(4.0, 0.5)]), 4.0);
        assert_eq!(weight(0.0, &[(0.0, 0.5)]), 0.0);
        assert_eq!(weight(2.0, &[(10.0, 1.0)]), -8.0);
    }

    #[test]
    fn exit_movement_weight_is_queue() {
        let f = Fixture::new(1, 1);
        let mut obs = f.empty_obs();
        obs.veh[3] = 9.0;
        assert_eq!(vehicle_weight(&f.net, 3, &obs, &f.means()), 9.0);
    }

    #[test]
    fn adjusted_saturation_examples() {
        assert_eq!(adjusted_saturation(10.0, &[]), 10.0);
        assert_eq!(
            adjusted_saturation(10.0, &[(4.0, 8.0, true), (12.0, 8.0, true)]),
            0.0
        );
        assert_eq!(adjusted_saturation(10.0, &[(4.0, 8.0, true)]), 5.0);
        assert_eq!(adjusted_saturation(10.0, &[(4.0, 8.0, false)]), 10.0);
    }

    #[test]
    fn pressure_examples() {
        let f = Fixture::new(1, 1);
        let m = f.means();
        let obs = f.empty_obs();
        for p in &f.net.phases {
            assert_eq!(phase_pressure(&f.net, 0, p, &obs, &m, 0.5), 0.0);
        }
        let mut obs = f.empty_obs();
        obs.veh[local_veh(Side::South, Turn::Through)] = 7.0;
        assert_eq!(phase_pressure(&f.net, 0, &f.net.phases[0], &obs, &m, 0.3), 70.0);
        let mut obs = f.empty_obs();
        obs.cw[0] = 6.0;
        obs.cw[5] = 2.0;
        obs.veh[0] = 100.0;
        // Default ratios split a corner three ways; the clockwise western and
        // counter-clockwise western crossings feed crosswalks 0 and 5.
        let expected = 0.1 * 8.0 * (6.0 + 2.0 - 6.0 / 3.0 - 2.0 / 3.0);
        let p = phase_pressure(&f.net, 0, &f.net.phases[EXCLUSIVE_PED_PHASE], &obs, &m, 0.1);
        assert!((p - expected).abs() < 1e-12);
    }

    #[test]
    fn pqmp_selection_examples() {
        let f = Fixture::new(1, 1);
        let m = f.means();
        assert_eq!(pqmp_select(&f.net, 0, &f.empty_obs(), &m, 0.01), 0);
        let mut obs = f.empty_obs();
        obs.veh[local_veh(Side::North, Turn::Through)] = 20.0;
        obs.veh[local_veh(Side::South, Turn::Through)] = 15.0;
        let p = pqmp_select(&f.net, 0, &obs, &m, 0.01);
        assert!(f.net.phases[p].name.starts_with("NS-TR"));
        let mut obs = f.empty_obs();
        obs.cw.iter_mut().for_each(|x| *x = 200.0);
        obs.veh[local_veh(Side::East, Turn::Left)] = 1.0;
        assert_eq!(pqmp_select(&f.net, 0, &obs, &m, 0.1), EXCLUSIVE_PED_PHASE);
    }

    #[test]
    fn qmp_selection_examples() {
        let f = Fixture::new(1, 1);
        let m = f.means();
        assert_eq!(qmp_select(&f.net, 0, &f.empty_obs(), &m), 2);
        let mut obs = f.empty_obs();
        obs.veh[local_veh(Side::North, Turn::Through)] = 5.0;
        obs.veh[local_veh(Side::North, Turn::Left)] = 8.0;
        let p = qmp_select(&f.net, 0, &obs, &m);
        assert_eq!(p, 4);
        assert!(!f.net.phases[p].serves_crosswalks());
        let mut obs = f.empty_obs();
        obs.veh[local_veh(Side::West, Turn::Through)] = 5.0;
        assert_eq!(qmp_select(&f.net, 0, &obs, &m), 7);
    }

    #[test]
    fn rule_examples() {
        let f = Fixture::new(1, 1);
        let m = f.means();
        let e = local_cw(Side::East, true);
        let mut obs = f.empty_obs();
        obs.cw[e] = 3.0;
        obs.cw_head_wait[e] = 85.0;
        let p = rule_based_select(&f.net, 0, &obs, &m, 80.0);
        assert_eq!(p, 1);
        assert!(f.net.phases[p].cw_served[e]);
        obs.cw_head_wait[e] = 60.0;
        obs.veh[local_veh(Side::East, Turn::Left)] = 4.0;
        assert_eq!(rule_based_select(&f.net, 0, &obs, &m, 80.0), 9);
        let n = local_cw(Side::North, false);
        obs.cw_head_wait[e] = 85.0;
        obs.cw[n] = 1.0;
        obs.cw_head_wait[n] = 100.0;
        assert_eq!(rule_based_select(&f.net, 0, &obs, &m, 80.0), EXCLUSIVE_PED_PHASE);
    }

    #[test]
    fn noise_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = [0u32, 5, 10];
        assert_eq!(perturb_measurement(&x, 0.0, &mut rng), vec![0.0, 5.0, 10.0]);
        for _ in 0..100 {
            let y = perturb_measurement(&x, 0.5, &mut rng);
            assert_eq!(y[0], 0.0);
            assert!(y.iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn config_validation() {
        assert!(ControllerConfig::pqmp(0.001, 0.0).validate().is_ok());
        assert!(ControllerConfig::pqmp(1.0, 0.0).validate().is_err());
        assert!(ControllerConfig::pqmp(0.0, 0.0).validate().is_err());
        assert!(ControllerConfig::rule(0.0).validate().is_err());
        assert!(ControllerConfig::qmp().validate().is_ok());
        assert!(ControllerConfig::pqmp(0.1, -1.0).validate().is_err());
    }
}

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use pedmp_core::config::Config;
use pedmp_core::control::{
    expired_legs, perturb_measurement, phase_pressure, pqmp_select, qmp_select, rule_based_select,
    Observation,
};
use pedmp_core::dynamics::{psi, ArrivalMode, RoutingMode};
use pedmp_core::engine::{run_observed, RunSpec, Scenario};
use pedmp_core::metrics::{person_delay, regional_split, DelayLedger};
use pedmp_core::net::{local_cw, Side, CW_PER_INTERSECTION, EXCLUSIVE_PED_PHASE};
use pedmp_core::report::sig6;
use pedmp_core::stability::{classify_run, max_min_slack};
use pedmp_core::ControllerConfig;

fn scenario(rows: usize, cols: usize) -> Scenario {
    let mut c = Config::default();
    c.network.rows = rows;
    c.network.cols = cols;
    Scenario::compile(c).unwrap()
}

fn obs_strategy(nv: usize, nc: usize) -> impl Strategy<Value = Observation> {
    (
        prop::collection::vec(0u32..40, nv),
        prop::collection::vec(0u32..60, nc),
        prop::collection::vec(0u32..8, nc),
    )
        .prop_map(|(v, c, w)| Observation {
            veh: v.into_iter().map(f64::from).collect(),
            cw: c.iter().map(|&x| f64::from(x)).collect(),
            cw_head_wait: c
                .iter()
                .zip(w)
                .map(|(&x, w)| if x == 0 { 0.0 } else { 20.0 * f64::from(w) })
                .collect(),
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn conservation_holds_every_step(
        seed in 0u64..1000,
        vph in 50.0f64..1500.0,
        rate in 0.0f64..0.08,
        kind in 0usize..3,
        poisson in any::<bool>(),
        random_routing in any::<bool>(),
    ) {
        let mut c = Config::default();
        c.network.rows = 2;
        c.network.cols = 3;
        c.horizon.loading_s = 40.0 * 20.0;
        c.horizon.cooldown_s = 20.0 * 20.0;
        c.pedestrians.rate_scale = rate;
        c.run.arrivals = if poisson { ArrivalMode::Poisson } else { ArrivalMode::Deterministic };
        c.run.routing = if random_routing { RoutingMode::Random } else { RoutingMode::Fixed };
        let sc = Scenario::compile(c).unwrap();
        let controller = match kind {
            0 => ControllerConfig::pqmp(0.2, 0.3),
            1 => ControllerConfig::qmp(),
            _ => ControllerConfig::rule(40.0),
        };
        let mut veh0 = 0i64;
        let mut ped0 = 0i64;
        let mut bad = 0;
        run_observed(&sc, &RunSpec { controller, demand_vph: vph, seed }, |_, out, after| {
            let veh1 = after.veh.iter().map(|&x| i64::from(x)).sum::<i64>();
            let ped1 = (after.total_cw() + after.total_walkers()) as i64;
            if veh1 != veh0 + out.veh_entered as i64 - out.veh_exited as i64 {
                bad += 1;
            }
            if ped1 != ped0 + out.ped_generated as i64 - out.ped_exited as i64 {
                bad += 1;
            }
            veh0 = veh1;
            ped0 = ped1;
        }).unwrap();
        prop_assert_eq!(bad, 0);
    }

    #[test]
    fn less_demand_stays_feasible(
        cap in prop::collection::vec(prop::collection::vec(0.0f64..2.0, 4), 1..4),
        flow in prop::collection::vec(0.0f64..1.0, 4),
        shrink in 0.0f64..1.0,
    ) {
        let full = max_min_slack(&cap, &flow);
        let less: Vec<f64> = flow.iter().map(|f| f * shrink).collect();
        let part = max_min_slack(&cap, &less);
        prop_assert!(part.slack >= full.slack - 1e-9);
        if full.feasible {
            prop_assert!(part.feasible);
        }
    }

    #[test]
    fn verdict_ignores_units(
        series in prop::collection::vec(0.0f64..1000.0, 20..200),
        scale in 0.01f64..100.0,
    ) {
        let scaled: Vec<f64> = series.iter().map(|x| x * scale).collect();
        prop_assert_eq!(classify_run(&series, 0.5).unwrap(), classify_run(&scaled, 0.5).unwrap());
    }

    #[test]
    fn queue_only_choice_ignores_units(
        obs in obs_strategy(12, 8),
        scale in 1u32..20,
    ) {
        let sc = scenario(1, 1);
        let mut big = obs.clone();
        big.veh.iter_mut().for_each(|x| *x *= f64::from(scale));
        prop_assert_eq!(
            qmp_select(&sc.net, 0, &obs, &sc.means()),
            qmp_select(&sc.net, 0, &big, &sc.means())
        );
    }

    #[test]
    fn pressure_is_affine_in_lambda(
        obs in obs_strategy(12, 8),
        lambda in 0.0f64..1.0,
        phase in 0usize..11,
    ) {
        let sc = scenario(1, 1);
        let p = &sc.net.phases[phase];
        let m = sc.means();
        let p0 = phase_pressure(&sc.net, 0, p, &obs, &m, 0.0);
        let p1 = phase_pressure(&sc.net, 0, p, &obs, &m, 1.0);
        let pl = phase_pressure(&sc.net, 0, p, &obs, &m, lambda);
        prop_assert!((pl - (p0 + lambda * (p1 - p0))).abs() <= 1e-9 * (1.0 + p0.abs() + p1.abs()));
    }

    #[test]
    fn small_lambda_matches_vehicle_pressure(obs in obs_strategy(12, 8)) {
        // With no pedestrians waiting, the crosswalk term vanishes and the
        // choice is the vehicle-only max over all phases.
        let sc = scenario(1, 1);
        let mut o = obs.clone();
        o.cw.iter_mut().for_each(|x| *x = 0.0);
        o.cw_head_wait.iter_mut().for_each(|x| *x = 0.0);
        let m = sc.means();
        prop_assert_eq!(pqmp_select(&sc.net, 0, &o, &m, 0.5), pqmp_select(&sc.net, 0, &o, &m, 1e-6));
    }

    #[test]
    fn zero_noise_is_identity(x in prop::collection::vec(0u32..10_000, 0..50), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let got = perturb_measurement(&x, 0.0, &mut rng);
        let want: Vec<f64> = x.iter().map(|&q| f64::from(q)).collect();
        prop_assert_eq!(got, want);
    }

    #[test]
    fn rule_never_serves_unexpired_legs(obs in obs_strategy(12, 8), tau in 20.0f64..100.0) {
        let sc = scenario(1, 1);
        let k = rule_based_select(&sc.net, 0, &obs, &sc.means(), tau);
        if k != EXCLUSIVE_PED_PHASE {
            let legs = expired_legs(0, &obs, tau);
            let p = &sc.net.phases[k];
            for leg in Side::ALL {
                let served = p.cw_served[local_cw(leg, true)] || p.cw_served[local_cw(leg, false)];
                prop_assert!(!served || legs.contains(&leg), "phase {} serves unexpired leg {:?}", k, leg);
            }
        }
    }

    #[test]
    fn psi_picks_exactly_the_walkers_in_reach(b in prop::collection::vec(0.0f64..200.0, 0..30)) {
        let picked = psi(&b, 1.3, 20.0);
        for (k, &x) in b.iter().enumerate() {
            prop_assert_eq!(picked.contains(&k), x <= 26.0);
        }
        prop_assert!(picked.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn sig6_keeps_six_digits(x in -1e12f64..1e12) {
        let back: f64 = sig6(x).parse().unwrap();
        prop_assert!((back - x).abs() <= 5e-6 * x.abs() + f64::MIN_POSITIVE);
    }

    #[test]
    fn delay_adds_across_ledgers_and_regions(
        a in prop::collection::vec(0.0f64..1e5, 4),
        b in prop::collection::vec(0.0f64..1e5, 4),
        occ in 1.0f64..3.0,
    ) {
        let mut l1 = DelayLedger::new(4);
        l1.veh_delay_s = a.clone();
        l1.ped_delay_s = b.clone();
        let mut l2 = DelayLedger::new(4);
        l2.veh_delay_s = b.clone();
        l2.ped_delay_s = a.clone();
        let mut sum = l1.clone();
        sum.merge(&l2);
        let tol = 1e-9 * (1.0 + sum.veh_delay_h() + sum.ped_delay_h());
        prop_assert!((sum.veh_delay_h() - l1.veh_delay_h() - l2.veh_delay_h()).abs() <= tol);
        prop_assert!((sum.ped_delay_h() - l1.ped_delay_h() - l2.ped_delay_h()).abs() <= tol);
        prop_assert!(
            (sum.person_delay_h(occ) - person_delay(sum.veh_delay_h(), sum.ped_delay_h(), occ)).abs() <= tol * occ
        );
        let sc = scenario(2, 2);
        let split = regional_split(&sum, &sc.regions).unwrap();
        let v: f64 = split.values().map(|r| r.veh_delay_h).sum();
        let p: f64 = split.values().map(|r| r.ped_delay_h).sum();
        prop_assert!((v - sum.veh_delay_h()).abs() <= tol);
        prop_assert!((p - sum.ped_delay_h()).abs() <= tol);
    }
}

#[test]
fn crosswalk_count_per_intersection() {
    let sc = scenario(2, 2);
    assert_eq!(sc.net.crosswalks.len(), 4 * CW_PER_INTERSECTION);
}

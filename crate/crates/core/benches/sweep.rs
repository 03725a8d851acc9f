//! Sequential against rayon-parallel execution of the same small sweep.

use criterion::{criterion_group, criterion_main, Criterion};

use pedmp_core::config::Config;
use pedmp_core::engine::{run_once, sweep_specs, Scenario};
use pedmp_core::par;

fn scenario() -> Scenario {
    let mut c = Config::default();
    c.network.rows = 3;
    c.network.cols = 3;
    c.horizon.loading_s = 100.0 * 20.0;
    c.horizon.cooldown_s = 20.0 * 20.0;
    c.demand.vph = vec![600.0];
    c.run.seeds = vec![1, 2];
    Scenario::compile(c).unwrap()
}

fn bench(c: &mut Criterion) {
    let sc = scenario();
    let specs = sweep_specs(&sc.config);
    let mut g = c.benchmark_group("sweep");
    g.sample_size(10);
    g.bench_function("sequential", |b| {
        b.iter(|| par::map_seq(&specs, |s| run_once(&sc, s).map(|r| r.ledger.veh_delay_h()).ok()))
    });
    #[cfg(feature = "parallel")]
    g.bench_function("parallel", |b| {
        b.iter(|| par::map_par(&specs, |s| run_once(&sc, s).map(|r| r.ledger.veh_delay_h()).ok()))
    });
    g.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use gscm_core::harness::run::{load_table, simulate_drop};
use gscm_core::harness::RunConfig;
use gscm_core::scenario::{LinkState, Scenario};
use gscm_core::sns::SnsMode;

fn config(all_features: bool) -> RunConfig {
    let mut cfg = RunConfig::new(Scenario::UMi, 1, 10, 1);
    cfg.sim.n_time = 1;
    if all_features {
        let f = &mut cfg.features;
        f.nf = true;
        f.sns = SnsMode::Stochastic;
        f.pol_variability = true;
        f.imbalance = true;
        f.grip = true;
        f.variable_clusters = true;
        f.variable_rays = true;
    }
    cfg
}

fn drop_bench(c: &mut Criterion) {
    let mut g = c.benchmark_group("simulate_drop");
    g.sample_size(10);
    for (name, all) in [("baseline", false), ("all_features", true)] {
        let cfg = config(all);
        let table = load_table(&cfg).unwrap();
        g.bench_with_input(BenchmarkId::from_parameter(name), &cfg, |b, cfg| {
            b.iter(|| simulate_drop(cfg, &table, 0).unwrap())
        });
    }
    g.finish();
}

fn lookup_bench(c: &mut Criterion) {
    let cfg = config(false);
    let table = load_table(&cfg).unwrap();
    c.bench_function("lsp_lookup", |b| {
        b.iter(|| table.lookup(Scenario::UMa, LinkState::NLOS, std::hint::black_box(7.0)).unwrap())
    });
}

criterion_group!(benches, drop_bench, lookup_bench);
criterion_main!(benches);

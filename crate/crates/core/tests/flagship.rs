use gscm_core::harness::run::{load_table, simulate_all};
use gscm_core::harness::stats::stats_from_records;
use gscm_core::harness::{default_targets, validate, RunConfig};
use gscm_core::scenario::Scenario;
use gscm_core::sns::SnsMode;

fn rel19_umi() -> RunConfig {
    let mut cfg = RunConfig::new(Scenario::UMi, 20, 60, 2024);
    let f = &mut cfg.features;
    f.nf = true;
    f.sns = SnsMode::Stochastic;
    f.pol_variability = true;
    f.imbalance = true;
    f.grip = true;
    f.variable_clusters = true;
    f.variable_rays = true;
    cfg.sim.write_tensors = false;
    cfg
}

#[test]
fn full_rel19_umi_run_passes_validation() {
    let cfg = rel19_umi();
    let table = load_table(&cfg).unwrap();
    let out = simulate_all(&cfg).unwrap();
    let records: Vec<_> = out.into_iter().map(|o| o.record).collect();
    let stats = stats_from_records(&records).unwrap();
    let targets = default_targets(&cfg, &table, &stats).unwrap();
    let report = validate(&stats, &targets).unwrap();
    println!("{}", report.to_table());
    for feature in ["pol_var_db", "grip.", "imbalance_db", "nf.lg_aux_bs", "sns.impacted_fraction", ".N", ".M"] {
        assert!(report.checks.iter().any(|c| c.name.contains(feature)), "no check for {feature}");
    }
    assert!(report.passed, "{}", report.to_table());
}

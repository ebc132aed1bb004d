use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use gscm_core::coeffgen::read_tensor;
use gscm_core::harness::run::{read_links_csv, MANIFEST};
use gscm_core::harness::stats::{empirical_stats, moments};
use gscm_core::harness::{run_simulation, RunConfig, RunOptions};
use gscm_core::lsp::{LspParam, LspTable};
use gscm_core::scenario::{LinkState, Scenario};
use gscm_core::sns::SnsMode;

fn tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.insert(rel, fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn featured(scenario: Scenario, drops: usize, uts: usize) -> RunConfig {
    let mut cfg = RunConfig::new(scenario, drops, uts, 77);
    let f = &mut cfg.features;
    f.nf = true;
    f.sns = SnsMode::Stochastic;
    f.pol_variability = true;
    f.imbalance = true;
    f.grip = true;
    f.variable_clusters = true;
    f.variable_rays = true;
    cfg.sim.n_time = 2;
    cfg
}

#[test]
fn bundles_identical_across_worker_counts_and_reruns() {
    let cfg = featured(Scenario::UMi, 2, 6);
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let c = dir.path().join("c");
    run_simulation(&cfg, &a, &RunOptions { workers: Some(1) }).unwrap();
    run_simulation(&cfg, &b, &RunOptions { workers: Some(4) }).unwrap();
    run_simulation(&cfg, &c, &RunOptions::default()).unwrap();
    let ta = tree(&a);
    assert!(ta.keys().any(|k| k.ends_with(".gscm")));
    assert_eq!(ta, tree(&b));
    assert_eq!(ta, tree(&c));
}

#[test]
fn manifest_hashes_match_files_and_tensors_parse() {
    let cfg = featured(Scenario::SMa, 1, 3);
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("bundle");
    let s = run_simulation(&cfg, &out, &RunOptions::default()).unwrap();
    let m: serde_json::Value = serde_json::from_slice(&fs::read(out.join(MANIFEST)).unwrap()).unwrap();
    assert_eq!(m["config_hash"], cfg.hash().unwrap());
    assert_eq!(m["master_seed"], 77);
    for f in &s.manifest.files {
        let bytes = fs::read(out.join(&f.path)).unwrap();
        assert_eq!(bytes.len() as u64, f.bytes);
        if f.path.ends_with(".gscm") {
            let t = read_tensor(&mut bytes.as_slice()).unwrap();
            let [n, time, u, bs] = t.dims;
            assert_eq!(t.h.len(), (n * time * u * bs) as usize);
            assert_eq!(time, 2);
        }
    }
    let recs = read_links_csv(&out.join("links.csv")).unwrap();
    assert_eq!(recs.len(), s.n_links);
    assert!(recs.windows(2).all(|w| (w[0].drop, w[0].link_id) < (w[1].drop, w[1].link_id)));
}

#[test]
fn zero_sigma_table_gives_zero_spread_std() {
    let text = String::from_utf8(fs::read(concat!(env!("CARGO_MANIFEST_DIR"), "/data/lsp.csv")).unwrap()).unwrap();
    let mut zeroed = String::new();
    for (i, line) in text.lines().enumerate() {
        let cols: Vec<&str> = line.split(',').collect();
        if i > 0 && cols[3].starts_with("sigma") {
            zeroed += &format!("{},{},{},{},0,{}\n", cols[0], cols[1], cols[2], cols[3], cols[5]);
        } else {
            zeroed += line;
            zeroed.push('\n');
        }
    }
    let dir = tempfile::tempdir().unwrap();
    let table = dir.path().join("lsp0.csv");
    fs::write(&table, zeroed).unwrap();
    let mut cfg = RunConfig::new(Scenario::UMi, 3, 40, 5);
    cfg.sim.coefficients = false;
    cfg.sim.lsp_table = Some(table);
    let out = dir.path().join("b");
    run_simulation(&cfg, &out, &RunOptions::default()).unwrap();
    let st = empirical_stats(&out).unwrap();
    let mut seen = 0;
    for state in ["LOS", "NLOS", "O2I"] {
        if let Some(x) = st.get(&format!("UMi.{state}.lgDS")) {
            // The mean still depends on geometry for some rows, so look at
            // residuals against the link's own expectation.
            let recs = read_links_csv(&out.join("links.csv")).unwrap();
            let resid: Vec<f64> = recs
                .iter()
                .filter(|r| r.state.to_string() == state)
                .map(|r| r.lg_ds - r.mu_lg_ds)
                .collect();
            assert_eq!(resid.len(), x.len());
            assert_eq!(moments(&resid).std, 0.0, "{state}");
            seen += 1;
        }
    }
    assert!(seen >= 2);
}

#[test]
fn legacy_cluster_counts_are_fixed() {
    let table = LspTable::shipped();
    for (scenario, state, expect) in [
        (Scenario::UMi, LinkState::NLOS, 19),
        (Scenario::UMa, LinkState::NLOS, 20),
        (Scenario::InH, LinkState::LOS, 15),
    ] {
        let d = table.lookup(scenario, state, 7.0).unwrap();
        assert_eq!(d.small.n_fixed, expect, "{scenario} {state}");
    }
    let mut cfg = RunConfig::new(Scenario::UMi, 2, 40, 3);
    cfg.sim.write_tensors = false;
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("b");
    run_simulation(&cfg, &out, &RunOptions::default()).unwrap();
    for r in read_links_csv(&out.join("links.csv")).unwrap() {
        let d = table.lookup(Scenario::UMi, r.state, 7.0).unwrap();
        assert_eq!(r.n_drawn as u32, d.small.n_fixed);
        assert_eq!(r.rays, 20);
    }
}

#[test]
fn sns_off_is_bit_identical_to_baseline() {
    let base = RunConfig::new(Scenario::UMa, 1, 8, 11);
    let mut off = base.clone();
    off.features.sns = SnsMode::Off;
    off.sim.sns.visibility_prob = 0.2;
    let dir = tempfile::tempdir().unwrap();
    run_simulation(&base, &dir.path().join("a"), &RunOptions::default()).unwrap();
    run_simulation(&off, &dir.path().join("b"), &RunOptions::default()).unwrap();
    let strip = |t: BTreeMap<String, Vec<u8>>| -> BTreeMap<String, Vec<u8>> {
        t.into_iter().filter(|(k, _)| k.starts_with("tensors/")).collect()
    };
    let a = strip(tree(&dir.path().join("a")));
    assert!(!a.is_empty());
    assert_eq!(a, strip(tree(&dir.path().join("b"))));
}

#[test]
fn reported_mean_lsp_tracks_table() {
    let cfg = RunConfig::new(Scenario::UMa, 4, 60, 8);
    let mut cfg = cfg;
    cfg.sim.coefficients = false;
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("b");
    run_simulation(&cfg, &out, &RunOptions::default()).unwrap();
    let table = LspTable::shipped();
    for r in read_links_csv(&out.join("links.csv")).unwrap() {
        let d = table.lookup(Scenario::UMa, r.state, 7.0).unwrap();
        let mu = d.mean_for(LspParam::DS, r.d2d, r.h_ut, r.h_bs);
        assert!((mu - r.mu_lg_ds).abs() < 1e-9);
    }
}

//! Drop and link orchestration plus bundle writing.
//!
//! Stream keys: every random draw of drop `d` uses
//! `StreamKey::new(seed).drop(d)` with a module tag; per-link draws add
//! `.link(id)`. Drops and links run on the rayon pool and are collected in
//! id order, so output does not depend on the worker count.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::antenna::{
    bs_panel, draw_grip_and_attenuation, draw_port_imbalance, place_ut_antennas, AntennaArray, BsPolarization,
    DeviceModel, GripAttenuationTable,
};
use crate::coeffgen::{apply_absolute_toa, assemble_coefficients, toa_field, write_tensor, AssemblyInput, ChannelRealization, RealizationMeta};
use crate::error::{invalid, GscmError, Result};
use crate::geometry::{Direction, Orientation};
use crate::harness::config::RunConfig;
use crate::lsp::{generate_correlated_lsps, LspDistributions, LspInput, LspParam, LspSet, LspTable};
use crate::nearfield::{AuxPointCache, AuxiliaryPointPair};
use crate::polarization::polarization_matrix;
use crate::rng::{ModuleTag, StreamKey};
use crate::scenario::{
    assign_links, drop_uts, generate_layout, o2i_and_car_loss, Link, LinkState, PathLossTable, PenetrationModel,
    ScenarioConfig, Ut,
};
use crate::smallscale::{
    build_ray_bundle, generate_clusters, rays_per_cluster, rms_delay_spread, ClusterCountMode, RayCountConfig,
};
use crate::sns::{physical_blocker_attenuation, stochastic_sns, ArrayShape, DepartureAnchor, SnsMode};

pub const BUNDLE_FORMAT: &str = "gscm-bundle";
pub const LINKS_CSV: &str = "links.csv";
pub const MANIFEST: &str = "manifest.json";
pub const CONFIG_COPY: &str = "config.json";
pub const TENSOR_DIR: &str = "tensors";

/// One row of the per-link summary CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkRecord {
    pub drop: u64,
    pub link_id: usize,
    pub bs_id: usize,
    pub sector_id: usize,
    pub ut_id: usize,
    pub scenario: String,
    pub state: LinkState,
    pub fc_ghz: f64,
    pub d2d: f64,
    pub d3d: f64,
    pub h_ut: f64,
    pub h_bs: f64,
    pub indoor: bool,
    pub building: String,
    pub in_car: bool,
    pub pathloss_db: f64,
    pub penetration_db: f64,
    pub sf_db: f64,
    pub k_db: f64,
    pub lg_ds: f64,
    pub lg_asa: f64,
    pub lg_asd: f64,
    pub lg_zsa: f64,
    pub lg_zsd: f64,
    /// Means of the distributions the link was drawn from.
    pub mu_lg_ds: f64,
    pub mu_lg_asa: f64,
    pub mu_lg_asd: f64,
    pub mu_lg_zsa: f64,
    pub mu_lg_zsd: f64,
    pub first_delay_s: f64,
    pub delta_tau_s: f64,
    pub n_drawn: usize,
    pub n_clusters: usize,
    pub rays: u32,
    pub ds_realized_s: f64,
    pub tensor_ds_s: f64,
    pub mean_power: f64,
    pub grip: String,
    pub sns_impacted: usize,
    /// Variability factor samples over all rays and entries: count, mean,
    /// and mean square (dB).
    pub pol_var_n: usize,
    pub pol_var_mean_db: f64,
    pub pol_var_ms_db: f64,
    /// Per-port imbalance, dB, `;`-separated.
    pub imbalance_db: String,
    /// Base-10 log of the BS-side auxiliary distance per cluster,
    /// `;`-separated.
    pub lg_aux_bs: String,
}

/// Output of one link.
#[derive(Debug, Clone)]
pub struct LinkOutput {
    pub record: LinkRecord,
    pub realization: Option<ChannelRealization>,
}

struct DropShared<'a> {
    cfg: &'a RunConfig,
    scen: &'a ScenarioConfig,
    pathloss: &'a PathLossTable,
    grip: &'a GripAttenuationTable,
    key: StreamKey,
    drop: u64,
}

fn lsp_inputs(links: &[&Link]) -> Vec<LspInput> {
    links
        .iter()
        .map(|l| LspInput {
            link_id: l.id,
            group: l.bs_id,
            x: l.ut_position.x,
            y: l.ut_position.y,
            d2d: l.d2d,
            h_ut: l.h_ut(),
            h_bs: l.h_bs(),
        })
        .collect()
}

fn state_index(s: LinkState) -> u64 {
    match s {
        LinkState::LOS => 0,
        LinkState::NLOS => 1,
        LinkState::O2I => 2,
    }
}

fn join(xs: impl IntoIterator<Item = f64>) -> String {
    xs.into_iter().map(|x| format!("{x:.6}")).collect::<Vec<_>>().join(";")
}

/// Simulates one drop and returns its links in id order.
pub fn simulate_drop(cfg: &RunConfig, table: &LspTable, drop: u64) -> Result<Vec<LinkOutput>> {
    let scen = cfg.scenario_config()?;
    let layout = generate_layout(scen)?;
    let pathloss = PathLossTable::shipped();
    let grip = GripAttenuationTable::shipped();
    let key = StreamKey::new(cfg.master_seed).drop(drop);
    let uts = drop_uts(&layout, scen, cfg.n_uts, &mut key.module(ModuleTag::Drop).stream())?;
    let links = assign_links(&layout, scen, &uts, &mut key.module(ModuleTag::LinkState).stream())?;
    let shared = DropShared {
        cfg,
        scen,
        pathloss: &pathloss,
        grip: &grip,
        key,
        drop,
    };

    // Large-scale parameters and excess-delay fields, one draw per state.
    let mut lsps: BTreeMap<usize, (LspSet, f64)> = BTreeMap::new();
    let mut dists_by_state: BTreeMap<u64, LspDistributions> = BTreeMap::new();
    for state in [LinkState::LOS, LinkState::NLOS, LinkState::O2I] {
        let group: Vec<&Link> = links.iter().filter(|l| l.state == state).collect();
        if group.is_empty() {
            continue;
        }
        let dists = table.lookup(scen.scenario, state, scen.fc_ghz)?;
        let inputs = lsp_inputs(&group);
        let si = state_index(state);
        let set = generate_correlated_lsps(&inputs, &dists, &mut key.module(ModuleTag::Lsp).purpose(si).stream())?;
        let z = match (&dists.toa, state) {
            (Some(p), s) if s != LinkState::LOS => toa_field(&inputs, p, &mut key.module(ModuleTag::Toa).purpose(si).stream())?,
            _ => vec![0.0; inputs.len()],
        };
        for (inp, z) in inputs.iter().zip(z) {
            lsps.insert(inp.link_id, (set[&inp.link_id].clone(), z));
        }
        dists_by_state.insert(si, dists);
    }

    links
        .par_iter()
        .map(|l| {
            let (lsp, z) = &lsps[&l.id];
            let dists = &dists_by_state[&state_index(l.state)];
            simulate_link(&shared, l, &uts[l.ut_id], dists, lsp, *z)
        })
        .collect()
}

fn ut_device(cfg: &RunConfig, orientation: Orientation) -> Result<DeviceModel> {
    let d = &cfg.sim.ut_device;
    let probe = DeviceModel::new(d.kind, vec![0], orientation, d.dual_polarized)?;
    let selected = d
        .locations
        .iter()
        .map(|n| {
            probe
                .location_index(n)
                .ok_or_else(|| invalid("sim.ut_device.locations", format!("unknown location `{n}`")))
        })
        .collect::<Result<Vec<_>>>()?;
    DeviceModel::new(d.kind, selected, orientation, d.dual_polarized)
}

fn simulate_link(
    sh: &DropShared,
    link: &Link,
    ut: &Ut,
    dists: &LspDistributions,
    lsp: &LspSet,
    toa_z: f64,
) -> Result<LinkOutput> {
    let cfg = sh.cfg;
    let scen = sh.scen;
    let fc = scen.fc_ghz;
    let f = cfg.features;
    let lk = sh.key.link(link.id as u64);
    let pl = sh
        .pathloss
        .path_loss(scen.scenario, link.state, link.d3d, fc, link.h_bs(), link.h_ut())?;
    let pen_model = if link.state == LinkState::O2I {
        Some(scen.penetration)
    } else if link.in_car {
        Some(PenetrationModel::InCar)
    } else {
        None
    };
    let penetration_db = match pen_model {
        Some(m) => o2i_and_car_loss(
            m,
            &scen.penetration_params,
            fc,
            link.indoor_depth_m.unwrap_or(0.0),
            scen.penetration_variation,
            &mut lk.module(ModuleTag::Penetration).stream(),
        )?
        .total_db(),
        None => 0.0,
    };
    let toa = apply_absolute_toa(link, dists.toa.as_ref(), toa_z)?;
    let mu = |p: LspParam| dists.mean_for(p, link.d2d, link.h_ut(), link.h_bs());
    let mut record = LinkRecord {
        drop: sh.drop,
        link_id: link.id,
        bs_id: link.bs_id,
        sector_id: link.sector_id,
        ut_id: link.ut_id,
        scenario: scen.scenario.name().into(),
        state: link.state,
        fc_ghz: fc,
        d2d: link.d2d,
        d3d: link.d3d,
        h_ut: link.h_ut(),
        h_bs: link.h_bs(),
        indoor: ut.indoor,
        building: ut.building.map(|b| format!("{b:?}").to_lowercase()).unwrap_or_default(),
        in_car: ut.in_car,
        pathloss_db: pl,
        penetration_db,
        sf_db: lsp.sf_db,
        k_db: lsp.k_db,
        lg_ds: lsp.lg[LspParam::DS.index()],
        lg_asa: lsp.lg[LspParam::ASA.index()],
        lg_asd: lsp.lg[LspParam::ASD.index()],
        lg_zsa: lsp.lg[LspParam::ZSA.index()],
        lg_zsd: lsp.lg[LspParam::ZSD.index()],
        mu_lg_ds: mu(LspParam::DS),
        mu_lg_asa: mu(LspParam::ASA),
        mu_lg_asd: mu(LspParam::ASD),
        mu_lg_zsa: mu(LspParam::ZSA),
        mu_lg_zsd: mu(LspParam::ZSD),
        first_delay_s: toa.first,
        delta_tau_s: toa.delta_tau,
        n_drawn: 0,
        n_clusters: 0,
        rays: 0,
        ds_realized_s: 0.0,
        tensor_ds_s: 0.0,
        mean_power: 0.0,
        grip: String::new(),
        sns_impacted: 0,
        pol_var_n: 0,
        pol_var_mean_db: 0.0,
        pol_var_ms_db: 0.0,
        imbalance_db: String::new(),
        lg_aux_bs: String::new(),
    };
    if !cfg.sim.coefficients {
        return Ok(LinkOutput {
            record,
            realization: None,
        });
    }

    let small = &dists.small;
    let los = link.state == LinkState::LOS;
    let mode = if f.variable_clusters {
        ClusterCountMode::UniformInterval
    } else {
        ClusterCountMode::FixedLegacy
    };
    let c_zsd = 3.0 / 8.0 * 10f64.powf(mu(LspParam::ZSD));
    let clusters = generate_clusters(link, lsp, small, c_zsd, mode, &mut lk.module(ModuleTag::Clusters).stream())?;
    let n = clusters.n;
    let n_drawn = clusters.n_drawn;
    let kept_delays = clusters.delays.clone();

    let bs = bs_panel(&cfg.sim.bs_panel, link.sector_orientation, fc)?;
    let lambda = crate::nearfield::wavelength(fc);
    let ray_cfg = RayCountConfig {
        m_min: cfg.sim.min_rays,
        cluster_extent_m: cfg.sim.cluster_extent_m,
        elaa_threshold_wl: cfg.sim.elaa_threshold_wl,
        ..RayCountConfig::shipped(scen.scenario, f.variable_rays)
    };
    let m = rays_per_cluster(fc, cfg.sim.bandwidth_hz, bs.aperture() / lambda, &ray_cfg)?;
    let mut rrng = lk.module(ModuleTag::Rays).stream();
    let rays = build_ray_bundle(n, m, clusters.spreads, small.xpr_mu_db, small.xpr_sigma_db, &mut rrng)?;
    let mut prng = lk.module(ModuleTag::Polarization).stream();
    let pol = rays
        .xpr_db
        .iter()
        .map(|row| {
            row.iter()
                .map(|x| polarization_matrix(10f64.powf(x / 10.0), f.pol_variability, cfg.sim.pol_var_sigma_db, &mut prng))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    let mut arng = lk.module(ModuleTag::Antenna).stream();
    let device = ut_device(cfg, Orientation::new(arng.phase() - std::f64::consts::PI, 0.0, 0.0))?;
    let ut_arr = place_ut_antennas(&device)?;
    let ports_per_loc = if device.dual_polarized { 2 } else { 1 };
    let grip_state = if f.grip {
        Some(draw_grip_and_attenuation(
            &cfg.sim.grip_probs,
            sh.grip,
            &device.candidates,
            fc,
            &mut lk.module(ModuleTag::Grip).stream(),
        )?)
    } else {
        None
    };
    let imbalance = draw_port_imbalance(
        ut_arr.len(),
        cfg.sim.imbalance_range_db,
        f.imbalance,
        &mut lk.module(ModuleTag::Imbalance).stream(),
    )?;
    let ut_gain: Option<Vec<f64>> = (f.grip || f.imbalance).then(|| {
        (0..ut_arr.len())
            .map(|e| {
                let loc = device.selected[e / ports_per_loc];
                let g = grip_state.as_ref().map_or(0.0, |g| g.per_location_attenuation[loc]);
                imbalance[e] - g
            })
            .collect()
    });

    let aux: Option<Vec<AuxiliaryPointPair>> = if f.nf {
        let mut cache = AuxPointCache::new();
        let nkey = sh.key.module(ModuleTag::NearField);
        Some(
            (0..n)
                .map(|c| {
                    cache.get(
                        nkey,
                        link.id,
                        c,
                        Direction::from_degrees(clusters.zod[c], clusters.aod[c]),
                        Direction::from_degrees(clusters.zoa[c], clusters.aoa[c]),
                        link.bs_position,
                        link.ut_position,
                        &cfg.sim.aux_dist,
                    )
                })
                .collect::<Result<Vec<_>>>()?,
        )
    } else {
        None
    };

    let n_out = n + usize::from(los);
    let mut sns_impacted = 0;
    let sns: Option<Vec<Vec<f64>>> = match f.sns {
        SnsMode::Off => None,
        SnsMode::Stochastic => {
            let p = &cfg.sim.bs_panel;
            let pols = match p.polarization {
                BsPolarization::Single(_) => 1,
                BsPolarization::Dual => 2,
            };
            let shape = ArrayShape {
                rows: p.rows,
                cols: p.cols,
                pols,
            };
            let v = stochastic_sns(&cfg.sim.sns, n_out, shape, &mut lk.module(ModuleTag::Sns).stream())?;
            sns_impacted = v.impacted_count();
            Some(v.factors)
        }
        SnsMode::Physical => {
            let mut anchors: Vec<DepartureAnchor> = (0..n)
                .map(|c| match &aux {
                    Some(a) => DepartureAnchor::Point(a[c].p_bs),
                    None => DepartureAnchor::Direction(Direction::from_degrees(clusters.zod[c], clusters.aod[c])),
                })
                .collect();
            if los {
                anchors.push(DepartureAnchor::Point(link.ut_position));
            }
            let elems: Vec<_> = bs.positions().iter().map(|o| link.bs_position + o).collect();
            let fct = physical_blocker_attenuation(&cfg.sim.blockers, &elems, &anchors, &cfg.sim.blocker_params)?;
            sns_impacted = fct.iter().filter(|r| r.iter().any(|&x| x < 1.0)).count();
            Some(fct)
        }
    };

    let times: Vec<f64> = (0..cfg.sim.n_time).map(|i| i as f64 * cfg.sim.dt_s).collect();
    let meta = RealizationMeta {
        link_id: link.id,
        drop: sh.drop,
        bs_id: link.bs_id,
        sector_id: link.sector_id,
        ut_id: link.ut_id,
        state: link.state,
        d3d: link.d3d,
        master_seed: cfg.master_seed,
        features: f,
        rays: m,
    };
    let real = assemble_coefficients(&AssemblyInput {
        link,
        fc_ghz: fc,
        clusters: &clusters,
        rays: &rays,
        pol: &pol,
        bs: &bs,
        ut: &ut_arr,
        near_field: aux.as_deref(),
        sns: sns.as_deref(),
        ut_gain_db: ut_gain.as_deref(),
        times: &times,
        ut_velocity: link.ut_velocity,
        absolute_first_delay: toa.first,
        meta,
    })?;

    let mut all_delays = kept_delays;
    let mut all_powers = clusters.scattered.clone();
    if los {
        all_delays.push(0.0);
        all_powers.push(clusters.los_fraction);
    }
    let var: Vec<f64> = pol.iter().flatten().flat_map(|p| p.variability_db).collect();
    record.n_drawn = n_drawn;
    record.n_clusters = n;
    record.rays = m;
    record.ds_realized_s = rms_delay_spread(&all_delays, &all_powers);
    record.tensor_ds_s = real.tensor_delay_spread(0);
    record.mean_power = real.mean_power(0);
    record.grip = grip_state.map(|g| g.grip.name().to_string()).unwrap_or_default();
    record.sns_impacted = sns_impacted;
    record.pol_var_n = var.len();
    if !var.is_empty() {
        record.pol_var_mean_db = var.iter().sum::<f64>() / var.len() as f64;
        record.pol_var_ms_db = var.iter().map(|x| x * x).sum::<f64>() / var.len() as f64;
    }
    if f.imbalance {
        record.imbalance_db = join(imbalance);
    }
    if let Some(a) = &aux {
        record.lg_aux_bs = join(a.iter().map(|p| p.d_bs.log10()));
    }
    Ok(LinkOutput {
        record,
        realization: Some(real),
    })
}

/// LSP table for a run: the override from the config, else the shipped one.
pub fn load_table(cfg: &RunConfig) -> Result<LspTable> {
    match &cfg.sim.lsp_table {
        Some(p) => LspTable::from_csv(&std::fs::read_to_string(p)?),
        None => Ok(LspTable::shipped()),
    }
}

/// Runs every drop. Output is ordered by (drop, link id).
pub fn simulate_all(cfg: &RunConfig) -> Result<Vec<LinkOutput>> {
    cfg.validate()?;
    let table = load_table(cfg)?;
    let per_drop = (0..cfg.n_drops as u64)
        .into_par_iter()
        .map(|d| simulate_drop(cfg, &table, d))
        .collect::<Result<Vec<_>>>()?;
    Ok(per_drop.into_iter().flatten().collect())
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Worker threads; `None` uses the global rayon pool.
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestFile {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub config_hash: String,
    pub master_seed: u64,
    pub crate_version: String,
    pub tensor_version: u32,
    pub n_links: usize,
    pub files: Vec<ManifestFile>,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    pub n_links: usize,
    pub manifest: Manifest,
}

fn sha_file(p: &Path) -> Result<(u64, String)> {
    let b = fs::read(p)?;
    Ok((b.len() as u64, hex::encode(Sha256::digest(&b))))
}

pub fn write_links_csv<W: Write>(w: W, records: &[LinkRecord]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for r in records {
        wr.serialize(r)?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_links_csv(path: &Path) -> Result<Vec<LinkRecord>> {
    let mut rd = csv::Reader::from_path(path)?;
    rd.deserialize().map(|r| r.map_err(GscmError::from)).collect()
}

fn write_bundle(dir: &Path, cfg: &RunConfig, outputs: &[LinkOutput]) -> Result<Manifest> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(CONFIG_COPY), cfg.canonical_json()?)?;
    let records: Vec<LinkRecord> = outputs.iter().map(|o| o.record.clone()).collect();
    write_links_csv(BufWriter::new(fs::File::create(dir.join(LINKS_CSV))?), &records)?;
    let mut rel = vec![CONFIG_COPY.to_string(), LINKS_CSV.to_string()];
    if cfg.sim.write_tensors {
        fs::create_dir_all(dir.join(TENSOR_DIR))?;
        let names = outputs
            .par_iter()
            .filter_map(|o| o.realization.as_ref().map(|r| (o.record.drop, r)))
            .map(|(d, r)| -> Result<String> {
                let name = format!("{TENSOR_DIR}/d{d:05}_l{:06}.gscm", r.meta.link_id);
                let mut w = BufWriter::new(fs::File::create(dir.join(&name))?);
                write_tensor(&mut w, r)?;
                w.flush()?;
                Ok(name)
            })
            .collect::<Result<Vec<_>>>()?;
        rel.extend(names);
    }
    let files = rel
        .iter()
        .map(|p| {
            let (bytes, sha256) = sha_file(&dir.join(p))?;
            Ok(ManifestFile {
                path: p.clone(),
                bytes,
                sha256,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = Manifest {
        format: BUNDLE_FORMAT.into(),
        config_hash: cfg.hash()?,
        master_seed: cfg.master_seed,
        crate_version: env!("CARGO_PKG_VERSION").into(),
        tensor_version: crate::coeffgen::TENSOR_VERSION,
        n_links: outputs.len(),
        files,
    };
    fs::write(dir.join(MANIFEST), serde_json::to_vec_pretty(&manifest)?)?;
    Ok(manifest)
}

/// Simulates and writes a bundle to `out`. The bundle is assembled in a
/// sibling staging directory and moved into place only on success. An
/// existing `out` is replaced only if it is itself a bundle.
pub fn run_simulation(cfg: &RunConfig, out: &Path, opts: &RunOptions) -> Result<RunSummary> {
    if out.exists() {
        let is_bundle = out.join(MANIFEST).is_file();
        let empty = out.is_dir() && fs::read_dir(out)?.next().is_none();
        if !is_bundle && !empty {
            return Err(GscmError::Bundle(format!(
                "{} exists and is not a bundle; refusing to overwrite",
                out.display()
            )));
        }
    }
    let outputs = match opts.workers {
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k.max(1))
            .build()
            .map_err(|e| GscmError::Bundle(e.to_string()))?
            .install(|| simulate_all(cfg))?,
        None => simulate_all(cfg)?,
    };
    let name = out.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "bundle".into());
    let staging = out.with_file_name(format!(".{name}.partial-{}", std::process::id()));
    if staging.exists() {
        fs::remove_dir_all(&staging)?;
    }
    let manifest = match write_bundle(&staging, cfg, &outputs) {
        Ok(m) => m,
        Err(e) => {
            let _ = fs::remove_dir_all(&staging);
            return Err(e);
        }
    };
    if out.exists() {
        fs::remove_dir_all(out)?;
    }
    fs::rename(&staging, out)?;
    Ok(RunSummary {
        out_dir: out.to_path_buf(),
        n_links: outputs.len(),
        manifest,
    })
}

/// Array used by the harness for one sector; exposed for benches.
pub fn sector_panel(cfg: &RunConfig, orientation: Orientation) -> Result<AntennaArray> {
    bs_panel(&cfg.sim.bs_panel, orientation, cfg.scenario_config()?.fc_ghz)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::Scenario;

    fn small(scenario: Scenario) -> RunConfig {
        let mut c = RunConfig::new(scenario, 2, 5, 17);
        c.sim.bs_panel.rows = 1;
        c.sim.bs_panel.cols = 2;
        c
    }

    #[test]
    fn minimal_bundle_has_one_tensor() {
        let mut c = RunConfig::new(Scenario::UMi, 1, 1, 3);
        c.scenario_config_mut().unwrap().single_site = true;
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("b");
        let s = run_simulation(&c, &out, &RunOptions::default()).unwrap();
        assert_eq!(s.n_links, 1);
        let tensors = fs::read_dir(out.join(TENSOR_DIR)).unwrap().count();
        assert_eq!(tensors, 1);
        assert!(out.join(MANIFEST).is_file());
    }

    #[test]
    fn record_count() {
        let mut c = RunConfig::new(Scenario::UMa, 10, 100, 1);
        c.sim.coefficients = false;
        let dir = tempfile::tempdir().unwrap();
        let s = run_simulation(&c, &dir.path().join("b"), &RunOptions::default()).unwrap();
        assert_eq!(s.n_links, 1000);
        assert_eq!(read_links_csv(&dir.path().join("b").join(LINKS_CSV)).unwrap().len(), 1000);
    }

    #[test]
    fn refuses_to_clobber_non_bundle() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("keep.txt"), "x").unwrap();
        let c = small(Scenario::UMi);
        assert!(run_simulation(&c, dir.path(), &RunOptions::default()).is_err());
        assert!(dir.path().join("keep.txt").exists());
    }

    #[test]
    fn failure_leaves_no_partial_output() {
        let mut c = small(Scenario::SMa);
        // Outside the SMa path-loss validity range.
        c.scenario_config_mut().unwrap().fc_ghz = 60.0;
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("b");
        assert!(run_simulation(&c, &out, &RunOptions::default()).is_err());
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
    }

    #[test]
    fn all_features_run() {
        let mut c = small(Scenario::UMi);
        c.features.nf = true;
        c.features.sns = SnsMode::Stochastic;
        c.features.pol_variability = true;
        c.features.grip = true;
        c.features.imbalance = true;
        c.features.variable_clusters = true;
        c.features.variable_rays = true;
        let out = simulate_all(&c).unwrap();
        assert_eq!(out.len(), 10);
        for o in &out {
            let r = o.realization.as_ref().unwrap();
            assert!(r.h.iter().all(|z| z.re.is_finite()));
            assert!(!o.record.grip.is_empty());
        }
        c.features.sns = SnsMode::Physical;
        assert_eq!(simulate_all(&c).unwrap().len(), 10);
    }
}

//! Cluster and ray structure: counts, delays, powers, angles, ray offsets and
//! coupling.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, GscmError, Result};
use crate::lsp::{LspSet, SmallScaleParams};
use crate::rng::Stream;
use crate::scenario::{Link, LinkState, Scenario, SPEED_OF_LIGHT};
use crate::tables::{parse_records, RAY_COUNT_CSV};

pub const MAX_RAYS: u32 = 20;
pub const K_CAP_DB: f64 = 40.0;
pub const PRUNE_DB: f64 = 25.0;

/// Positive halves of the canonical 20-ray offset table (unit rms spread).
pub const CANONICAL_OFFSETS: [f64; 10] = [
    0.0447, 0.1413, 0.2492, 0.3715, 0.5129, 0.6797, 0.8844, 1.1481, 1.5195, 2.1551,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterInterval {
    pub d_min: u32,
    pub d_max: u32,
}

impl ClusterInterval {
    pub fn new(d_min: u32, d_max: u32) -> Result<Self> {
        if d_min < 1 || d_min > d_max {
            return Err(invalid("cluster interval", format!("need 1 <= d_min <= d_max, got [{d_min}, {d_max}]")));
        }
        Ok(Self { d_min, d_max })
    }

    pub fn contains(&self, n: u32) -> bool {
        (self.d_min..=self.d_max).contains(&n)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum ClusterCountMode {
    #[default]
    FixedLegacy,
    UniformInterval,
}

/// Distribution over the cluster interval.
pub trait ClusterCountSampler {
    fn sample(&self, interval: ClusterInterval, rng: &mut Stream) -> u32;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct UniformClusterSampler;

impl ClusterCountSampler for UniformClusterSampler {
    fn sample(&self, interval: ClusterInterval, rng: &mut Stream) -> u32 {
        rng.int_inclusive(interval.d_min, interval.d_max)
    }
}

pub fn draw_num_clusters(
    interval: ClusterInterval,
    legacy_n: u32,
    mode: ClusterCountMode,
    rng: &mut Stream,
) -> u32 {
    draw_num_clusters_with(interval, legacy_n, mode, &UniformClusterSampler, rng)
}

pub fn draw_num_clusters_with(
    interval: ClusterInterval,
    legacy_n: u32,
    mode: ClusterCountMode,
    sampler: &dyn ClusterCountSampler,
    rng: &mut Stream,
) -> u32 {
    match mode {
        ClusterCountMode::FixedLegacy => legacy_n,
        ClusterCountMode::UniformInterval => sampler.sample(interval, rng),
    }
}

/// K-dependent delay scaling for LOS links.
pub fn los_delay_scaling(k_db: f64) -> f64 {
    let k = k_db.min(K_CAP_DB);
    0.7705 - 0.0433 * k + 0.0002 * k * k + 0.000017 * k * k * k
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Delays {
    /// Sorted delays before the LOS scaling, s. Used for powers.
    pub unscaled: Vec<f64>,
    /// Final delays, s.
    pub delays: Vec<f64>,
}

pub fn generate_delays(n: usize, ds: f64, r_tau: f64, k_db: f64, los: bool, rng: &mut Stream) -> Result<Delays> {
    let us: Vec<f64> = (0..n).map(|_| rng.uniform()).collect();
    delays_from_uniforms(&us, ds, r_tau, k_db, los)
}

/// Delay step with the uniform variates supplied by the caller.
pub fn delays_from_uniforms(us: &[f64], ds: f64, r_tau: f64, k_db: f64, los: bool) -> Result<Delays> {
    if !(ds > 0.0) {
        return Err(invalid("ds", format!("must be > 0, got {ds}")));
    }
    if !(r_tau > 1.0) {
        return Err(invalid("r_tau", format!("must be > 1, got {r_tau}")));
    }
    let mut t: Vec<f64> = us.iter().map(|u| -r_tau * ds * u.ln()).collect();
    t.sort_by(|a, b| a.partial_cmp(b).unwrap());
    if let Some(&min) = t.first() {
        for x in &mut t {
            *x -= min;
        }
    }
    let delays = if los {
        let c = los_delay_scaling(k_db);
        t.iter().map(|x| x / c).collect()
    } else {
        t.clone()
    };
    Ok(Delays { unscaled: t, delays })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Powers {
    /// Indices (into the input delays) of clusters that survived pruning.
    pub kept: Vec<usize>,
    /// Scattered power per kept cluster; for LOS links these sum to
    /// `1 - los_fraction`.
    pub scattered: Vec<f64>,
    /// Power including the specular component on the first cluster; sums to 1.
    pub total: Vec<f64>,
    pub los_fraction: f64,
}

pub fn generate_powers(
    unscaled_delays: &[f64],
    ds: f64,
    r_tau: f64,
    zeta_db: f64,
    k_db: f64,
    los: bool,
    rng: &mut Stream,
) -> Result<Powers> {
    if unscaled_delays.is_empty() {
        return Err(invalid("delays", "at least one cluster required"));
    }
    let z: Vec<f64> = unscaled_delays.iter().map(|_| rng.normal(0.0, zeta_db)).collect();
    let raw: Vec<f64> = unscaled_delays
        .iter()
        .zip(&z)
        .map(|(t, z)| (-t * (r_tau - 1.0) / (r_tau * ds)).exp() * 10f64.powf(-z / 10.0))
        .collect();
    let sum: f64 = raw.iter().sum();
    let p: Vec<f64> = raw.iter().map(|x| x / sum).collect();
    let max = p.iter().copied().fold(0.0, f64::max);
    let thr = max * 10f64.powf(-PRUNE_DB / 10.0);
    // Cluster 0 has the smallest delay and carries the specular term, so it
    // is always kept.
    let kept: Vec<usize> = (0..p.len()).filter(|&i| i == 0 || p[i] >= thr).collect();
    let ksum: f64 = kept.iter().map(|&i| p[i]).sum();
    let nlos: Vec<f64> = kept.iter().map(|&i| p[i] / ksum).collect();
    let los_fraction = if los {
        let k = 10f64.powf(k_db.min(K_CAP_DB) / 10.0);
        k / (k + 1.0)
    } else {
        0.0
    };
    let scattered: Vec<f64> = nlos.iter().map(|x| x * (1.0 - los_fraction)).collect();
    let mut total = scattered.clone();
    total[0] += los_fraction;
    Ok(Powers {
        kept,
        scattered,
        total,
        los_fraction,
    })
}

const C_PHI_KNOTS: [(f64, f64); 12] = [
    (4.0, 0.779),
    (5.0, 0.860),
    (8.0, 1.018),
    (10.0, 1.090),
    (11.0, 1.123),
    (12.0, 1.146),
    (14.0, 1.190),
    (15.0, 1.211),
    (16.0, 1.226),
    (19.0, 1.273),
    (20.0, 1.289),
    (25.0, 1.358),
];

const C_THETA_KNOTS: [(f64, f64); 8] = [
    (8.0, 0.889),
    (10.0, 0.957),
    (11.0, 1.031),
    (12.0, 1.104),
    (15.0, 1.1088),
    (19.0, 1.184),
    (20.0, 1.178),
    (25.0, 1.282),
];

fn interp(knots: &[(f64, f64)], n: f64) -> f64 {
    if n <= knots[0].0 {
        return knots[0].1;
    }
    for w in knots.windows(2) {
        let (x0, y0) = w[0];
        let (x1, y1) = w[1];
        if n <= x1 {
            return y0 + (y1 - y0) * (n - x0) / (x1 - x0);
        }
    }
    knots[knots.len() - 1].1
}

/// Azimuth scaling constant for `n` clusters (NLOS form).
pub fn c_phi(n: usize) -> f64 {
    interp(&C_PHI_KNOTS, n as f64)
}

/// Zenith scaling constant for `n` clusters (NLOS form).
pub fn c_theta(n: usize) -> f64 {
    interp(&C_THETA_KNOTS, n as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AngleSpreads {
    pub asa: f64,
    pub asd: f64,
    pub zsa: f64,
    pub zsd: f64,
}

/// Geometric LOS angles and centering options, degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AngleCenters {
    pub aoa_los: f64,
    pub aod_los: f64,
    pub zoa_los: f64,
    pub zod_los: f64,
    pub o2i: bool,
    pub zod_offset: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterAngles {
    pub aoa: Vec<f64>,
    pub aod: Vec<f64>,
    pub zoa: Vec<f64>,
    pub zod: Vec<f64>,
}

fn wrap_zenith(t: f64) -> f64 {
    let t = t.rem_euclid(360.0);
    if t > 180.0 {
        360.0 - t
    } else {
        t
    }
}

/// Random sign for each cluster, or a forced one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SignMode {
    Random,
    Forced(f64),
}

pub fn generate_angles(
    powers: &[f64],
    spreads: AngleSpreads,
    k_db: f64,
    los: bool,
    centers: AngleCenters,
    rng: &mut Stream,
) -> ClusterAngles {
    generate_angles_with(powers, spreads, k_db, los, centers, SignMode::Random, rng)
}

pub fn generate_angles_with(
    powers: &[f64],
    spreads: AngleSpreads,
    k_db: f64,
    los: bool,
    centers: AngleCenters,
    signs: SignMode,
    rng: &mut Stream,
) -> ClusterAngles {
    let n = powers.len();
    let max = powers.iter().copied().fold(0.0, f64::max);
    let k = k_db.min(K_CAP_DB);
    let (mut cphi, mut cth) = (c_phi(n), c_theta(n));
    if los {
        cphi *= 1.1035 - 0.028 * k - 0.002 * k * k + 0.0001 * k * k * k;
        cth *= 1.3086 + 0.0339 * k - 0.0077 * k * k + 0.0002 * k * k * k;
    }
    let az = |spread: f64, center: f64, rng: &mut Stream| -> Vec<f64> {
        let raw: Vec<f64> = powers
            .iter()
            .map(|p| {
                let base = 2.0 * (spread / 1.4) * (-(p / max).ln()).max(0.0).sqrt() / cphi;
                let x = match signs {
                    SignMode::Random => rng.sign(),
                    SignMode::Forced(s) => s,
                };
                x * base + rng.normal(0.0, spread / 7.0)
            })
            .collect();
        let shift = if los { raw[0] } else { 0.0 };
        raw.iter().map(|v| crate::geometry::wrap_deg(v - shift + center)).collect()
    };
    let aoa = az(spreads.asa, centers.aoa_los, rng);
    let aod = az(spreads.asd, centers.aod_los, rng);
    let zen = |spread: f64, center: f64, rng: &mut Stream| -> Vec<f64> {
        let raw: Vec<f64> = powers
            .iter()
            .map(|p| {
                let base = -spread * (p / max).ln() / cth;
                let x = match signs {
                    SignMode::Random => rng.sign(),
                    SignMode::Forced(s) => s,
                };
                x * base + rng.normal(0.0, spread / 7.0)
            })
            .collect();
        let shift = if los { raw[0] } else { 0.0 };
        raw.iter().map(|v| wrap_zenith(v - shift + center)).collect()
    };
    let zoa_center = if centers.o2i { 90.0 } else { centers.zoa_los };
    let zoa = zen(spreads.zsa, zoa_center, rng);
    let zod = zen(spreads.zsd, centers.zod_los + centers.zod_offset, rng);
    ClusterAngles { aoa, aod, zoa, zod }
}

/// Power-weighted circular angular spread, degrees.
pub fn circular_spread_deg(angles_deg: &[f64], powers: &[f64]) -> f64 {
    let total: f64 = powers.iter().sum();
    let (mut re, mut im) = (0.0, 0.0);
    for (a, p) in angles_deg.iter().zip(powers) {
        re += p * a.to_radians().cos();
        im += p * a.to_radians().sin();
    }
    let r = (re * re + im * im).sqrt() / total;
    (-2.0 * r.min(1.0).ln()).sqrt().to_degrees()
}

/// Power-weighted rms delay spread, s.
pub fn rms_delay_spread(delays: &[f64], powers: &[f64]) -> f64 {
    let total: f64 = powers.iter().sum();
    let mean = delays.iter().zip(powers).map(|(t, p)| t * p).sum::<f64>() / total;
    let m2 = delays.iter().zip(powers).map(|(t, p)| t * t * p).sum::<f64>() / total;
    (m2 - mean * mean).max(0.0).sqrt()
}

#[derive(Debug, Clone, Deserialize)]
pub struct RayCountRow {
    pub scenario: Scenario,
    pub fc_min: f64,
    pub fc_max: f64,
    pub m: f64,
}

#[derive(Debug, Clone)]
pub struct RayCountConfig {
    pub scenario: Scenario,
    pub enabled: bool,
    pub table: Vec<RayCountRow>,
    pub m_min: u32,
    /// Path-length extent of a cluster, m. Wideband trigger when the
    /// bandwidth exceeds `c / (2 extent)`.
    pub cluster_extent_m: f64,
    /// Array extent (wavelengths) above which the array counts as extremely
    /// large.
    pub elaa_threshold_wl: f64,
}

impl RayCountConfig {
    pub fn shipped(scenario: Scenario, enabled: bool) -> Self {
        Self {
            scenario,
            enabled,
            table: parse_records("ray_count", RAY_COUNT_CSV).expect("shipped ray-count table parses"),
            m_min: 4,
            cluster_extent_m: 1.0,
            elaa_threshold_wl: 64.0,
        }
    }

    fn lookup(&self, fc: f64) -> Option<f64> {
        self.table
            .iter()
            .find(|r| r.scenario == self.scenario && fc >= r.fc_min && fc < r.fc_max)
            .map(|r| r.m)
    }
}

pub fn rays_per_cluster(fc_ghz: f64, bandwidth_hz: f64, array_extent_wl: f64, cfg: &RayCountConfig) -> Result<u32> {
    if !(0.5..=100.0).contains(&fc_ghz) {
        return Err(GscmError::OutOfRange {
            quantity: "fc_ghz",
            value: fc_ghz,
            min: 0.5,
            max: 100.0,
        });
    }
    let triggered = bandwidth_hz > SPEED_OF_LIGHT / (2.0 * cfg.cluster_extent_m)
        || array_extent_wl > cfg.elaa_threshold_wl;
    if !cfg.enabled || !triggered {
        return Ok(MAX_RAYS);
    }
    let m = cfg.lookup(fc_ghz).unwrap_or(MAX_RAYS as f64).round();
    Ok((m.max(0.0) as u32).clamp(cfg.m_min.min(MAX_RAYS), MAX_RAYS))
}

/// Unit-rms offsets for `m` rays. `m = 20` returns the canonical table; fewer
/// rays keep the smallest symmetric pairs (plus a zero ray when `m` is odd)
/// and are rescaled to unit rms.
pub fn unit_offsets(m: u32) -> Result<Vec<f64>> {
    if !(1..=MAX_RAYS).contains(&m) {
        return Err(invalid("m", format!("must be in [1, 20], got {m}")));
    }
    let pairs = (m / 2) as usize;
    let mut out = Vec::with_capacity(m as usize);
    if m % 2 == 1 {
        out.push(0.0);
    }
    for &a in &CANONICAL_OFFSETS[..pairs] {
        out.push(a);
        out.push(-a);
    }
    if m < MAX_RAYS && pairs > 0 {
        let rms = (out.iter().map(|x| x * x).sum::<f64>() / m as f64).sqrt();
        for x in &mut out {
            *x /= rms;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClusterSpreads {
    pub c_asa: f64,
    pub c_asd: f64,
    pub c_zsa: f64,
    pub c_zsd: f64,
}

/// Ray pairing inside one cluster. Entry `i` of each vector gives the ray
/// index (into the offsets) used on that axis by ray `i`; ray `i` always uses
/// arrival-azimuth offset `i`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Coupling {
    pub aod: Vec<usize>,
    pub zod: Vec<usize>,
    pub zoa: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RayBundle {
    pub m: u32,
    pub unit: Vec<f64>,
    pub aoa_offsets: Vec<f64>,
    pub aod_offsets: Vec<f64>,
    pub zoa_offsets: Vec<f64>,
    pub zod_offsets: Vec<f64>,
    pub coupling: Vec<Coupling>,
    /// Per-cluster, per-ray XPR in dB.
    pub xpr_db: Vec<Vec<f64>>,
}

fn permutation(m: usize, rng: &mut Stream) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut p: Vec<usize> = (0..m).collect();
    p.shuffle(rng.rng());
    p
}

pub fn build_ray_bundle(
    n_clusters: usize,
    m: u32,
    spreads: ClusterSpreads,
    xpr_mu_db: f64,
    xpr_sigma_db: f64,
    rng: &mut Stream,
) -> Result<RayBundle> {
    let unit = unit_offsets(m)?;
    let scale = |c: f64| unit.iter().map(|a| c * a).collect::<Vec<_>>();
    let mut coupling = Vec::with_capacity(n_clusters);
    let mut xpr_db = Vec::with_capacity(n_clusters);
    for _ in 0..n_clusters {
        coupling.push(Coupling {
            aod: permutation(m as usize, rng),
            zod: permutation(m as usize, rng),
            zoa: permutation(m as usize, rng),
        });
        xpr_db.push(
            (0..m)
                .map(|_| crate::polarization::draw_xpr_db(xpr_mu_db, xpr_sigma_db, rng))
                .collect::<Result<Vec<_>>>()?,
        );
    }
    Ok(RayBundle {
        m,
        aoa_offsets: scale(spreads.c_asa),
        aod_offsets: scale(spreads.c_asd),
        zoa_offsets: scale(spreads.c_zsa),
        zod_offsets: scale(spreads.c_zsd),
        unit,
        coupling,
        xpr_db,
    })
}

/// Full cluster description of one link after pruning.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterSet {
    pub n: usize,
    /// Excess delays, s. `delays[0] = 0`.
    pub delays: Vec<f64>,
    /// Normalized powers including any specular term; sums to 1.
    pub powers: Vec<f64>,
    /// Scattered part of each cluster's power.
    pub scattered: Vec<f64>,
    pub los_fraction: f64,
    pub aoa: Vec<f64>,
    pub aod: Vec<f64>,
    pub zoa: Vec<f64>,
    pub zod: Vec<f64>,
    pub spreads: ClusterSpreads,
    pub zeta_db: f64,
    /// Cluster count drawn before pruning.
    pub n_drawn: usize,
}

/// Runs count, delay, power and angle generation for one link and keeps the
/// clusters that survive pruning. `c_zsd` is the intra-cluster zenith
/// departure spread, deg.
pub fn generate_clusters(
    link: &Link,
    lsp: &LspSet,
    small: &SmallScaleParams,
    c_zsd: f64,
    mode: ClusterCountMode,
    rng: &mut Stream,
) -> Result<ClusterSet> {
    let los = link.state == LinkState::LOS;
    let interval = ClusterInterval::new(small.d_min, small.d_max)?;
    let n_drawn = draw_num_clusters(interval, small.n_fixed, mode, rng) as usize;
    let delays = generate_delays(n_drawn, lsp.ds, small.r_tau, lsp.k_db, los, rng)?;
    let powers = generate_powers(&delays.unscaled, lsp.ds, small.r_tau, small.zeta_db, lsp.k_db, los, rng)?;
    let dep = link.los_departure();
    let arr = link.los_arrival();
    let angles = generate_angles(
        &powers.scattered,
        AngleSpreads {
            asa: lsp.asa,
            asd: lsp.asd,
            zsa: lsp.zsa,
            zsd: lsp.zsd,
        },
        lsp.k_db,
        los,
        AngleCenters {
            aoa_los: arr.phi_deg(),
            aod_los: dep.phi_deg(),
            zoa_los: arr.theta_deg(),
            zod_los: dep.theta_deg(),
            o2i: link.state == LinkState::O2I,
            // The parameter tables carry no ZOD offset terms.
            zod_offset: 0.0,
        },
        rng,
    );
    Ok(ClusterSet {
        n: powers.kept.len(),
        delays: powers.kept.iter().map(|&i| delays.delays[i]).collect(),
        powers: powers.total,
        scattered: powers.scattered,
        los_fraction: powers.los_fraction,
        aoa: angles.aoa,
        aod: angles.aod,
        zoa: angles.zoa,
        zod: angles.zod,
        spreads: ClusterSpreads {
            c_asa: small.c_asa_deg,
            c_asd: small.c_asd_deg,
            c_zsa: small.c_zsa_deg,
            c_zsd,
        },
        zeta_db: small.zeta_db,
        n_drawn,
    })
}

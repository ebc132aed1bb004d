//! Channel coefficient assembly, Doppler, absolute time of arrival and the
//! binary tensor format.
//!
//! Tensor layout: `h[((n * T + t) * U + u) * S + s]` for cluster `n`, time
//! sample `t`, UT element `u` and BS element `s`. NLOS clusters come first in
//! delay order; the LOS ray, when present, is the last cluster.

use std::f64::consts::PI;
use std::io::{Read, Write};

use num_complex::{Complex32, Complex64};
use serde::{Deserialize, Serialize};

use crate::antenna::AntennaArray;
use crate::error::{GscmError, Result};
use crate::geometry::{wrap_pi, Direction, Vec3};
use crate::lsp::{grouped_field, AbsoluteToaParams, LspInput};
use crate::nearfield::{element_wise_los_params, element_wise_nlos_params, planar_excess, wavelength, AuxiliaryPointPair};
use crate::polarization::PolarizationMatrix;
use crate::rng::Stream;
use crate::scenario::{Link, LinkState, SPEED_OF_LIGHT};
use crate::smallscale::{ClusterSet, RayBundle};
use crate::sns::SnsMode;

pub const TENSOR_MAGIC: &[u8; 4] = b"GSCM";
pub const TENSOR_VERSION: u32 = 1;

/// Feature switches recorded with every realization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct FeatureFlags {
    pub nf: bool,
    pub sns: SnsMode,
    pub pol_variability: bool,
    pub imbalance: bool,
    pub grip: bool,
    pub variable_clusters: bool,
    pub variable_rays: bool,
}

pub fn doppler_phase(velocity: &Vec3, arrival: Direction, fc_ghz: f64, t: f64) -> f64 {
    2.0 * PI * arrival.unit_vector().dot(velocity) * fc_ghz * 1e9 / SPEED_OF_LIGHT * t
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AbsoluteDelay {
    /// First-path delay, s.
    pub first: f64,
    /// Excess over the geometric delay, s. Zero for LOS.
    pub delta_tau: f64,
}

/// Standard-normal field for the excess-delay draw, one value per input,
/// from the same kernel machinery as the large-scale parameters.
pub fn toa_field(inputs: &[LspInput], params: &AbsoluteToaParams, rng: &mut Stream) -> Result<Vec<f64>> {
    params.validate()?;
    grouped_field(inputs, params.corr_dist, rng)
}

/// `z` is the link's value of the standard-normal field from [`toa_field`].
/// Non-LOS links without parameters get no excess.
pub fn apply_absolute_toa(link: &Link, params: Option<&AbsoluteToaParams>, z: f64) -> Result<AbsoluteDelay> {
    let geo = link.d3d / SPEED_OF_LIGHT;
    let delta_tau = match (link.state, params) {
        (LinkState::LOS, _) | (_, None) => 0.0,
        (_, Some(p)) => {
            p.validate()?;
            10f64.powf(p.mu_lg + p.sigma_lg * z)
        }
    };
    Ok(AbsoluteDelay {
        first: geo + delta_tau,
        delta_tau,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealizationMeta {
    pub link_id: usize,
    pub drop: u64,
    pub bs_id: usize,
    pub sector_id: usize,
    pub ut_id: usize,
    pub state: LinkState,
    pub d3d: f64,
    pub master_seed: u64,
    pub features: FeatureFlags,
    /// Rays per NLOS cluster.
    pub rays: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub n_clusters: usize,
    pub n_time: usize,
    pub n_ut: usize,
    pub n_bs: usize,
    pub h: Vec<Complex64>,
    /// Absolute delay per cluster, s.
    pub delays: Vec<f64>,
    /// Power per cluster before antenna effects; sums to 1.
    pub powers: Vec<f64>,
    pub absolute_first_delay: f64,
    pub has_los_ray: bool,
    pub meta: RealizationMeta,
}

impl ChannelRealization {
    pub fn index(&self, n: usize, t: usize, u: usize, s: usize) -> usize {
        ((n * self.n_time + t) * self.n_ut + u) * self.n_bs + s
    }

    pub fn get(&self, n: usize, t: usize, u: usize, s: usize) -> Complex64 {
        self.h[self.index(n, t, u, s)]
    }

    /// Power summed over clusters and element pairs at time `t`, divided by
    /// the number of element pairs.
    pub fn mean_power(&self, t: usize) -> f64 {
        let mut p = 0.0;
        for n in 0..self.n_clusters {
            let base = self.index(n, t, 0, 0);
            p += self.h[base..base + self.n_ut * self.n_bs].iter().map(|c| c.norm_sqr()).sum::<f64>();
        }
        p / (self.n_ut * self.n_bs) as f64
    }

    /// Power-delay rms spread from the tensor at `t` (all element pairs).
    pub fn tensor_delay_spread(&self, t: usize) -> f64 {
        let pw: Vec<f64> = (0..self.n_clusters)
            .map(|n| {
                let base = self.index(n, t, 0, 0);
                self.h[base..base + self.n_ut * self.n_bs].iter().map(|c| c.norm_sqr()).sum()
            })
            .collect();
        crate::smallscale::rms_delay_spread(&self.delays, &pw)
    }
}

/// Everything needed to assemble one link. Slices indexed by cluster refer
/// to NLOS clusters unless noted.
#[derive(Debug, Clone)]
pub struct AssemblyInput<'a> {
    pub link: &'a Link,
    pub fc_ghz: f64,
    pub clusters: &'a ClusterSet,
    pub rays: &'a RayBundle,
    /// `[cluster][ray]`.
    pub pol: &'a [Vec<PolarizationMatrix>],
    pub bs: &'a AntennaArray,
    pub ut: &'a AntennaArray,
    /// Auxiliary points per NLOS cluster; `None` keeps planar wavefronts.
    pub near_field: Option<&'a [AuxiliaryPointPair]>,
    /// Amplitude factors `[output cluster][bs element]`, LOS ray last.
    pub sns: Option<&'a [Vec<f64>]>,
    /// Gain per UT element, dB (imbalance minus grip attenuation).
    pub ut_gain_db: Option<&'a [f64]>,
    pub times: &'a [f64],
    pub ut_velocity: Vec3,
    pub absolute_first_delay: f64,
    pub meta: RealizationMeta,
}

fn mismatch(axis: &'static str, expected: usize, got: usize) -> GscmError {
    GscmError::DimensionMismatch { axis, expected, got }
}

fn check_dims(inp: &AssemblyInput) -> Result<()> {
    let c = inp.clusters;
    let n = c.n;
    let m = inp.rays.m as usize;
    for (axis, got) in [
        ("cluster delays", c.delays.len()),
        ("cluster powers", c.scattered.len()),
        ("cluster aoa", c.aoa.len()),
        ("cluster aod", c.aod.len()),
        ("cluster zoa", c.zoa.len()),
        ("cluster zod", c.zod.len()),
        ("ray coupling", inp.rays.coupling.len()),
        ("polarization clusters", inp.pol.len()),
    ] {
        if got != n {
            return Err(mismatch(axis, n, got));
        }
    }
    if inp.rays.unit.len() != m {
        return Err(mismatch("ray offsets", m, inp.rays.unit.len()));
    }
    for (cp, pm) in inp.rays.coupling.iter().zip(inp.pol) {
        if pm.len() != m {
            return Err(mismatch("polarization rays", m, pm.len()));
        }
        for v in [&cp.aod, &cp.zod, &cp.zoa] {
            if v.len() != m {
                return Err(mismatch("ray coupling", m, v.len()));
            }
        }
    }
    if let Some(nf) = inp.near_field {
        if nf.len() != n {
            return Err(mismatch("near-field clusters", n, nf.len()));
        }
    }
    let n_out = n + usize::from(c.los_fraction > 0.0);
    if let Some(f) = inp.sns {
        if f.len() != n_out {
            return Err(mismatch("sns clusters", n_out, f.len()));
        }
        for row in f {
            if row.len() != inp.bs.len() {
                return Err(mismatch("sns bs elements", inp.bs.len(), row.len()));
            }
        }
    }
    if let Some(g) = inp.ut_gain_db {
        if g.len() != inp.ut.len() {
            return Err(mismatch("ut gains", inp.ut.len(), g.len()));
        }
    }
    if inp.bs.is_empty() || inp.ut.is_empty() {
        return Err(mismatch("antenna elements", 1, 0));
    }
    if inp.times.is_empty() {
        return Err(mismatch("time samples", 1, 0));
    }
    Ok(())
}

/// Shifts a direction by an angular delta, radians on both axes.
fn shifted(d: Direction, d_theta: f64, d_phi: f64) -> Direction {
    Direction::new(d.theta + d_theta, d.phi + d_phi)
}

/// Per-element geometry of one cluster under spherical wavefronts.
struct NfCluster {
    /// Phase correction per BS element (spherical minus planar), rad.
    bs_phase: Vec<f64>,
    ut_phase: Vec<f64>,
    /// Angular offset (dtheta, dphi) of each element's view of the anchor
    /// from the cluster mean direction.
    bs_delta: Vec<(f64, f64)>,
    ut_delta: Vec<(f64, f64)>,
}

fn nf_cluster(
    aux: &AuxiliaryPointPair,
    inp: &AssemblyInput,
    dep: Direction,
    arr: Direction,
    total_delay: f64,
    bs_off: &[Vec3],
    ut_off: &[Vec3],
) -> Result<NfCluster> {
    let lambda = wavelength(inp.fc_ghz);
    let p = element_wise_nlos_params(
        aux,
        inp.link.bs_position,
        bs_off,
        inp.link.ut_position,
        ut_off,
        inp.fc_ghz,
        total_delay,
    )?;
    let side = |els: &[crate::nearfield::ElementSideParams], offs: &[Vec3], mean: Direction| {
        let phase = els
            .iter()
            .zip(offs)
            .map(|(e, o)| -2.0 * PI * (e.excess - planar_excess(mean, o)) / lambda)
            .collect::<Vec<_>>();
        let delta = els
            .iter()
            .map(|e| (e.direction.theta - mean.theta, wrap_pi(e.direction.phi - mean.phi)))
            .collect::<Vec<_>>();
        (phase, delta)
    };
    let (bs_phase, bs_delta) = side(&p.bs, bs_off, dep);
    let (ut_phase, ut_delta) = side(&p.ut, ut_off, arr);
    Ok(NfCluster {
        bs_phase,
        ut_phase,
        bs_delta,
        ut_delta,
    })
}

/// Sums the contributions of all rays of all clusters into a tensor.
pub fn assemble_coefficients(inp: &AssemblyInput) -> Result<ChannelRealization> {
    check_dims(inp)?;
    let c = inp.clusters;
    let rays = inp.rays;
    let m = rays.m as usize;
    let (n_ut, n_bs, n_t) = (inp.ut.len(), inp.bs.len(), inp.times.len());
    let has_los = c.los_fraction > 0.0;
    let n_out = c.n + usize::from(has_los);
    let lambda = wavelength(inp.fc_ghz);
    let k0 = 2.0 * PI / lambda;
    let bs_off = inp.bs.positions();
    let ut_off = inp.ut.positions();
    let ut_amp: Vec<f64> = match inp.ut_gain_db {
        Some(g) => g.iter().map(|db| 10f64.powf(db / 20.0)).collect(),
        None => vec![1.0; n_ut],
    };
    let mut h = vec![Complex64::new(0.0, 0.0); n_out * n_t * n_ut * n_bs];
    let mut delays = Vec::with_capacity(n_out);
    let mut powers = Vec::with_capacity(n_out);

    let mut tx = vec![(Complex64::default(), Complex64::default()); n_bs];
    let mut rx = vec![(Complex64::default(), Complex64::default()); n_ut];
    let mut rot = vec![Complex64::default(); n_t];
    for n in 0..c.n {
        let dep_c = Direction::from_degrees(c.zod[n], c.aod[n]);
        let arr_c = Direction::from_degrees(c.zoa[n], c.aoa[n]);
        let nf = match inp.near_field {
            Some(aux) => Some(nf_cluster(
                &aux[n],
                inp,
                dep_c,
                arr_c,
                inp.absolute_first_delay + c.delays[n],
                &bs_off,
                &ut_off,
            )?),
            None => None,
        };
        let amp = (c.scattered[n] / m as f64).sqrt();
        let cp = &rays.coupling[n];
        let base_n = n * n_t * n_ut * n_bs;
        for r in 0..m {
            let arr = Direction::from_degrees(c.zoa[n] + rays.zoa_offsets[cp.zoa[r]], c.aoa[n] + rays.aoa_offsets[r]);
            let dep = Direction::from_degrees(c.zod[n] + rays.zod_offsets[cp.zod[r]], c.aod[n] + rays.aod_offsets[cp.aod[r]]);
            let (ru, du) = (arr.unit_vector(), dep.unit_vector());
            for (s, e) in inp.bs.elements.iter().enumerate() {
                let (d, extra) = match &nf {
                    Some(f) => (shifted(dep, f.bs_delta[s].0, f.bs_delta[s].1), f.bs_phase[s]),
                    None => (dep, 0.0),
                };
                let (ft, fp) = e.field_gcs(d);
                let ph = Complex64::from_polar(1.0, k0 * du.dot(&bs_off[s]) + extra);
                tx[s] = (ft * ph, fp * ph);
            }
            for (u, e) in inp.ut.elements.iter().enumerate() {
                let (d, extra) = match &nf {
                    Some(f) => (shifted(arr, f.ut_delta[u].0, f.ut_delta[u].1), f.ut_phase[u]),
                    None => (arr, 0.0),
                };
                let (ft, fp) = e.field_gcs(d);
                let ph = Complex64::from_polar(amp * ut_amp[u], k0 * ru.dot(&ut_off[u]) + extra);
                rx[u] = (ft * ph, fp * ph);
            }
            let pm = &inp.pol[n][r];
            for (t, &time) in inp.times.iter().enumerate() {
                rot[t] = Complex64::from_polar(1.0, doppler_phase(&inp.ut_velocity, arr, inp.fc_ghz, time));
            }
            for u in 0..n_ut {
                for s in 0..n_bs {
                    let mut v = pm.couple(rx[u], tx[s]);
                    if let Some(f) = inp.sns {
                        v *= f[n][s];
                    }
                    for (t, w) in rot.iter().enumerate() {
                        h[base_n + (t * n_ut + u) * n_bs + s] += v * w;
                    }
                }
            }
        }
        delays.push(inp.absolute_first_delay + c.delays[n]);
        powers.push(c.scattered[n]);
    }

    if has_los {
        let n = c.n;
        let base_n = n * n_t * n_ut * n_bs;
        let amp = c.los_fraction.sqrt();
        let los_pol = |rx: (Complex64, Complex64), tx: (Complex64, Complex64)| rx.0 * tx.0 - rx.1 * tx.1;
        let dep = inp.link.los_departure();
        let arr = inp.link.los_arrival();
        for (t, &time) in inp.times.iter().enumerate() {
            rot[t] = Complex64::from_polar(1.0, doppler_phase(&inp.ut_velocity, arr, inp.fc_ghz, time));
        }
        let pairs = if inp.near_field.is_some() {
            let bs_abs: Vec<Vec3> = bs_off.iter().map(|o| inp.link.bs_position + o).collect();
            let ut_abs: Vec<Vec3> = ut_off.iter().map(|o| inp.link.ut_position + o).collect();
            Some(element_wise_los_params(&bs_abs, &ut_abs, inp.fc_ghz)?)
        } else {
            None
        };
        for u in 0..n_ut {
            for s in 0..n_bs {
                let (d_dep, d_arr, phase) = match &pairs {
                    Some(p) => {
                        let q = &p[u][s];
                        (q.departure, q.arrival, -k0 * q.distance)
                    }
                    None => (
                        dep,
                        arr,
                        -k0 * inp.link.d3d + k0 * arr.unit_vector().dot(&ut_off[u]) + k0 * dep.unit_vector().dot(&bs_off[s]),
                    ),
                };
                let mut v = los_pol(inp.ut.elements[u].field_gcs(d_arr), inp.bs.elements[s].field_gcs(d_dep))
                    * Complex64::from_polar(amp * ut_amp[u], phase);
                if let Some(f) = inp.sns {
                    v *= f[n][s];
                }
                for (t, w) in rot.iter().enumerate() {
                    h[base_n + (t * n_ut + u) * n_bs + s] += v * w;
                }
            }
        }
        delays.push(inp.absolute_first_delay);
        powers.push(c.los_fraction);
    }

    if h.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(GscmError::Geometry(format!("non-finite coefficient on link {}", inp.link.id)));
    }
    Ok(ChannelRealization {
        n_clusters: n_out,
        n_time: n_t,
        n_ut,
        n_bs,
        h,
        delays,
        powers,
        absolute_first_delay: inp.absolute_first_delay,
        has_los_ray: has_los,
        meta: inp.meta.clone(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TensorHeader {
    meta: RealizationMeta,
    delays_s: Vec<f64>,
    powers: Vec<f64>,
    absolute_first_delay_s: f64,
    has_los_ray: bool,
}

/// Writes `"GSCM"`, version, four u32 dims `(N, T, U, S)`, a u32-length JSON
/// descriptor, then little-endian `f32` (re, im) pairs in tensor order.
pub fn write_tensor<W: Write>(w: &mut W, r: &ChannelRealization) -> Result<()> {
    w.write_all(TENSOR_MAGIC)?;
    w.write_all(&TENSOR_VERSION.to_le_bytes())?;
    for d in [r.n_clusters, r.n_time, r.n_ut, r.n_bs] {
        w.write_all(&(d as u32).to_le_bytes())?;
    }
    let header = TensorHeader {
        meta: r.meta.clone(),
        delays_s: r.delays.clone(),
        powers: r.powers.clone(),
        absolute_first_delay_s: r.absolute_first_delay,
        has_los_ray: r.has_los_ray,
    };
    let json = serde_json::to_vec(&header)?;
    w.write_all(&(json.len() as u32).to_le_bytes())?;
    w.write_all(&json)?;
    let mut buf = Vec::with_capacity(r.h.len() * 8);
    for z in &r.h {
        buf.extend_from_slice(&(z.re as f32).to_le_bytes());
        buf.extend_from_slice(&(z.im as f32).to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TensorFile {
    pub dims: [usize; 4],
    pub meta: RealizationMeta,
    pub delays: Vec<f64>,
    pub powers: Vec<f64>,
    pub absolute_first_delay: f64,
    pub has_los_ray: bool,
    pub h: Vec<Complex32>,
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub fn read_tensor<R: Read>(r: &mut R) -> Result<TensorFile> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != TENSOR_MAGIC {
        return Err(GscmError::Bundle("bad tensor magic".into()));
    }
    let v = read_u32(r)?;
    if v != TENSOR_VERSION {
        return Err(GscmError::Bundle(format!("unsupported tensor version {v}")));
    }
    let mut dims = [0usize; 4];
    for d in &mut dims {
        *d = read_u32(r)? as usize;
    }
    let len = read_u32(r)? as usize;
    let mut json = vec![0u8; len];
    r.read_exact(&mut json)?;
    let header: TensorHeader = serde_json::from_slice(&json)?;
    let count = dims.iter().product::<usize>();
    let mut raw = vec![0u8; count * 8];
    r.read_exact(&mut raw)?;
    let h = raw
        .chunks_exact(8)
        .map(|c| {
            Complex32::new(
                f32::from_le_bytes([c[0], c[1], c[2], c[3]]),
                f32::from_le_bytes([c[4], c[5], c[6], c[7]]),
            )
        })
        .collect();
    Ok(TensorFile {
        dims,
        meta: header.meta,
        delays: header.delays_s,
        powers: header.powers,
        absolute_first_delay: header.absolute_first_delay_s,
        has_los_ray: header.has_los_ray,
        h,
    })
}

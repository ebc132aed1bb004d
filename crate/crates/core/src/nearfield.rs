//! Spherical-wavefront parameters: exact element-pair geometry for the direct
//! path and auxiliary-point anchors for scattered clusters.
//!
//! Phases are reported both as absolute `2 pi d / lambda mod 2 pi` and as the
//! excess path relative to the array reference point. Coefficient assembly
//! uses the excess, applied as `exp(-j 2 pi excess / lambda)`, so that it
//! reduces to the planar array factor in the far field.

use std::collections::HashMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, GscmError, Result};
use crate::geometry::{Direction, Vec3};
use crate::rng::{Stream, StreamKey};
use crate::scenario::SPEED_OF_LIGHT;

pub fn wavelength(fc_ghz: f64) -> f64 {
    SPEED_OF_LIGHT / (fc_ghz * 1e9)
}

/// `|p - a| - |p - b|`, computed without cancellation when `p` is far away.
pub fn distance_difference(p: &Vec3, a: &Vec3, b: &Vec3) -> f64 {
    let da = (p - a).norm();
    let db = (p - b).norm();
    if da + db == 0.0 {
        return 0.0;
    }
    // |p-a|^2 - |p-b|^2 = (b - a) . (2p - a - b)
    (b - a).dot(&(2.0 * p - a - b)) / (da + db)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LosPairParams {
    pub distance: f64,
    /// `2 pi d / lambda` wrapped to [0, 2 pi).
    pub phase: f64,
    /// Direction of the BS-to-UT segment seen from the BS element.
    pub departure: Direction,
    /// Direction of the UT-to-BS segment seen from the UT element.
    pub arrival: Direction,
}

/// Exact geometry for every (UT element, BS element) pair, indexed `[u][s]`.
/// Positions are absolute, global frame.
pub fn element_wise_los_params(bs: &[Vec3], ut: &[Vec3], fc_ghz: f64) -> Result<Vec<Vec<LosPairParams>>> {
    if bs.is_empty() || ut.is_empty() {
        return Err(invalid("elements", "element sets must be non-empty"));
    }
    let lambda = wavelength(fc_ghz);
    let mut out = Vec::with_capacity(ut.len());
    for u in ut {
        let mut row = Vec::with_capacity(bs.len());
        for s in bs {
            let v = u - s;
            let d = v.norm();
            if d <= 0.0 {
                return Err(GscmError::Geometry("coincident BS and UT elements".into()));
            }
            row.push(LosPairParams {
                distance: d,
                phase: (2.0 * PI * d / lambda).rem_euclid(2.0 * PI),
                departure: Direction::from_vector(&v),
                arrival: Direction::from_vector(&(-v)),
            });
        }
        out.push(row);
    }
    Ok(out)
}

/// Lognormal distance distributions for the auxiliary points (log10 of m).
/// Shipped values are placeholders.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuxDistParams {
    pub mu_lg_bs: f64,
    pub sigma_lg_bs: f64,
    pub mu_lg_ut: f64,
    pub sigma_lg_ut: f64,
}

impl Default for AuxDistParams {
    fn default() -> Self {
        Self {
            mu_lg_bs: 1.7,
            sigma_lg_bs: 0.3,
            mu_lg_ut: 1.3,
            sigma_lg_ut: 0.3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AuxiliaryPointPair {
    pub p_bs: Vec3,
    pub p_ut: Vec3,
    pub d_bs: f64,
    pub d_ut: f64,
}

const MAX_RESAMPLE: usize = 16;

fn positive_lognormal(mu: f64, sigma: f64, rng: &mut Stream) -> Result<f64> {
    for _ in 0..MAX_RESAMPLE {
        let d = rng.lognormal10(mu, sigma)?;
        if d > 0.0 && d.is_finite() {
            return Ok(d);
        }
    }
    Err(GscmError::Geometry(format!(
        "auxiliary distance not positive after {MAX_RESAMPLE} draws (mu {mu}, sigma {sigma})"
    )))
}

/// Places the cluster's anchors along its mean departure direction from the
/// BS reference point and its mean arrival direction from the UT reference
/// point.
pub fn place_auxiliary_points(
    departure: Direction,
    arrival: Direction,
    bs_center: Vec3,
    ut_center: Vec3,
    params: &AuxDistParams,
    rng: &mut Stream,
) -> Result<AuxiliaryPointPair> {
    let d_bs = positive_lognormal(params.mu_lg_bs, params.sigma_lg_bs, rng)?;
    let d_ut = positive_lognormal(params.mu_lg_ut, params.sigma_lg_ut, rng)?;
    Ok(AuxiliaryPointPair {
        p_bs: bs_center + d_bs * departure.unit_vector(),
        p_ut: ut_center + d_ut * arrival.unit_vector(),
        d_bs,
        d_ut,
    })
}

/// Per-drop cache so a cluster keeps its anchors across elements and time.
/// Each (link, cluster) draws from its own derived stream, so the result does
/// not depend on query order.
#[derive(Debug, Clone, Default)]
pub struct AuxPointCache {
    map: HashMap<(usize, usize), AuxiliaryPointPair>,
}

impl AuxPointCache {
    pub fn new() -> Self {
        Self::default()
    }

    #[allow(clippy::too_many_arguments)]
    pub fn get(
        &mut self,
        key: StreamKey,
        link: usize,
        cluster: usize,
        departure: Direction,
        arrival: Direction,
        bs_center: Vec3,
        ut_center: Vec3,
        params: &AuxDistParams,
    ) -> Result<AuxiliaryPointPair> {
        if let Some(p) = self.map.get(&(link, cluster)) {
            return Ok(*p);
        }
        let mut rng = key.link(link as u64).purpose(cluster as u64).stream();
        let p = place_auxiliary_points(departure, arrival, bs_center, ut_center, params, &mut rng)?;
        self.map.insert((link, cluster), p);
        Ok(p)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ElementSideParams {
    /// Path length from the element to the anchor minus the reference-point
    /// distance, m.
    pub excess: f64,
    /// `2 pi excess / lambda`.
    pub phase: f64,
    /// Direction from the element toward the anchor.
    pub direction: Direction,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NlosElementParams {
    pub bs: Vec<ElementSideParams>,
    pub ut: Vec<ElementSideParams>,
    /// Length of the anchor-to-anchor segment, common to all elements, m.
    pub mid_length: f64,
}

fn side(anchor: &Vec3, center: &Vec3, offsets: &[Vec3], lambda: f64) -> Result<Vec<ElementSideParams>> {
    offsets
        .iter()
        .map(|o| {
            let e = center + o;
            let v = anchor - e;
            if v.norm() <= 0.0 {
                return Err(GscmError::Geometry("element coincides with an auxiliary point".into()));
            }
            let excess = distance_difference(anchor, &e, center);
            Ok(ElementSideParams {
                excess,
                phase: 2.0 * PI * excess / lambda,
                direction: Direction::from_vector(&v),
            })
        })
        .collect()
}

/// Length of the middle segment that keeps the cluster's total path length
/// equal to `c * total_delay`. Never negative.
pub fn mid_segment_length(aux: &AuxiliaryPointPair, total_delay_s: f64) -> f64 {
    (SPEED_OF_LIGHT * total_delay_s - aux.d_bs - aux.d_ut).max(0.0)
}

/// Element-wise parameters for one cluster. `*_offsets` are element
/// positions relative to the array reference points.
pub fn element_wise_nlos_params(
    aux: &AuxiliaryPointPair,
    bs_center: Vec3,
    bs_offsets: &[Vec3],
    ut_center: Vec3,
    ut_offsets: &[Vec3],
    fc_ghz: f64,
    total_delay_s: f64,
) -> Result<NlosElementParams> {
    let lambda = wavelength(fc_ghz);
    Ok(NlosElementParams {
        bs: side(&aux.p_bs, &bs_center, bs_offsets, lambda)?,
        ut: side(&aux.p_ut, &ut_center, ut_offsets, lambda)?,
        mid_length: mid_segment_length(aux, total_delay_s),
    })
}

/// Planar-wavefront excess path for an element at `offset` and a plane wave
/// leaving/arriving along `dir`.
pub fn planar_excess(dir: Direction, offset: &Vec3) -> f64 {
    -dir.unit_vector().dot(offset)
}

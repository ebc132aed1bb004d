//! BS-side spatial non-stationarity: per-cluster, per-element amplitude
//! factors from physical blockers or from stochastic visibility regions.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::geometry::{Direction, Orientation, Vec3};
use crate::rng::Stream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SnsMode {
    #[default]
    Off,
    Physical,
    Stochastic,
}

impl std::str::FromStr for SnsMode {
    type Err = crate::error::GscmError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "off" => Ok(SnsMode::Off),
            "physical" => Ok(SnsMode::Physical),
            "stochastic" => Ok(SnsMode::Stochastic),
            _ => Err(crate::error::GscmError::Unsupported {
                what: "sns mode",
                given: s.into(),
                supported: "off, physical, stochastic".into(),
            }),
        }
    }
}

/// Rectangular screen. Its plane is spanned by the local y (width) and z
/// (height) axes of `orientation`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Blocker {
    pub center: Vec3,
    pub width: f64,
    pub height: f64,
    pub orientation: Orientation,
}

impl Blocker {
    pub fn validate(&self) -> Result<()> {
        if !(self.width > 0.0 && self.height > 0.0) {
            return Err(invalid("blocker", "width and height must be > 0"));
        }
        Ok(())
    }

    /// Depth inside the rectangle (distance to the nearest edge) where the
    /// ray from `origin` along `dir` crosses it within `max_t`, if it does.
    fn penetration(&self, origin: &Vec3, dir: &Vec3, max_t: f64) -> Option<f64> {
        let r = self.orientation.rotation();
        let n = r.column(0).into_owned();
        let ey = r.column(1).into_owned();
        let ez = r.column(2).into_owned();
        let denom = n.dot(dir);
        if denom.abs() < 1e-15 {
            return None;
        }
        let t = n.dot(&(self.center - origin)) / denom;
        if t <= 0.0 || t > max_t {
            return None;
        }
        let h = origin + t * dir - self.center;
        let (u, v) = (h.dot(&ey), h.dot(&ez));
        let m = (self.width / 2.0 - u.abs()).min(self.height / 2.0 - v.abs());
        (m >= 0.0).then_some(m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BlockerParams {
    /// Loss deep inside a blocker, dB (placeholder).
    pub blocked_loss_db: f64,
    /// Width of the soft transition inside the blocker edge, m.
    pub edge_width_m: f64,
}

impl Default for BlockerParams {
    fn default() -> Self {
        Self {
            blocked_loss_db: 20.0,
            edge_width_m: 0.05,
        }
    }
}

/// Where a cluster leaves the BS: toward a point (near field) or along a
/// direction (far field).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DepartureAnchor {
    Point(Vec3),
    Direction(Direction),
}

fn raised_cosine(x: f64) -> f64 {
    0.5 * (1.0 - (PI * x.clamp(0.0, 1.0)).cos())
}

/// Amplitude factors indexed `[cluster][element]`. `elements` are absolute
/// element positions.
pub fn physical_blocker_attenuation(
    blockers: &[Blocker],
    elements: &[Vec3],
    anchors: &[DepartureAnchor],
    params: &BlockerParams,
) -> Result<Vec<Vec<f64>>> {
    for b in blockers {
        b.validate()?;
    }
    let floor = 10f64.powf(-params.blocked_loss_db / 20.0);
    Ok(anchors
        .iter()
        .map(|a| {
            elements
                .iter()
                .map(|e| {
                    let (dir, max_t) = match a {
                        DepartureAnchor::Point(p) => {
                            let v = p - e;
                            let l = v.norm();
                            (v / l, l)
                        }
                        DepartureAnchor::Direction(d) => (d.unit_vector(), f64::INFINITY),
                    };
                    blockers
                        .iter()
                        .filter_map(|b| b.penetration(e, &dir, max_t))
                        .map(|m| {
                            let s = if params.edge_width_m > 0.0 {
                                raised_cosine(m / params.edge_width_m)
                            } else {
                                1.0
                            };
                            1.0 - (1.0 - floor) * s
                        })
                        .product::<f64>()
                })
                .collect()
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Dist {
    Fixed(f64),
    Uniform(f64, f64),
}

impl Dist {
    fn sample(&self, u: f64) -> f64 {
        match *self {
            Dist::Fixed(v) => v,
            Dist::Uniform(a, b) => a + (b - a) * u,
        }
    }
}

/// Settings for the stochastic visibility model. Distribution defaults are
/// placeholders.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StochasticSnsConfig {
    pub visibility_prob: f64,
    pub region_fraction: Dist,
    pub attenuation_db: Dist,
    pub rolloff_span: usize,
    pub max_step_db: f64,
    pub two_d: bool,
}

impl Default for StochasticSnsConfig {
    fn default() -> Self {
        Self {
            visibility_prob: 0.7,
            region_fraction: Dist::Uniform(0.3, 0.9),
            attenuation_db: Dist::Uniform(3.0, 15.0),
            rolloff_span: 2,
            max_step_db: 3.0,
            two_d: false,
        }
    }
}

/// Array grid the visibility windows live on. Elements are ordered
/// row-major with `pols` ports per position innermost.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ArrayShape {
    pub rows: usize,
    pub cols: usize,
    pub pols: usize,
}

impl ArrayShape {
    pub fn len(&self) -> usize {
        self.rows * self.cols * self.pols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Contiguous window on one axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Window {
    pub start: usize,
    pub len: usize,
    pub extent_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VisibleRegion {
    /// Window along columns (or along the dominant axis in 1-D mode).
    pub primary: Window,
    /// Row window in 2-D mode.
    pub secondary: Option<Window>,
    pub attenuation_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VisibilityAssignment {
    pub impacted: Vec<bool>,
    pub regions: Vec<Option<VisibleRegion>>,
    /// Amplitude factors `[cluster][element]`.
    pub factors: Vec<Vec<f64>>,
}

impl VisibilityAssignment {
    pub fn impacted_count(&self) -> usize {
        self.impacted.iter().filter(|&&b| b).count()
    }
}

fn window(len_axis: usize, fraction: f64, u: f64) -> Window {
    let len = ((fraction * len_axis as f64).round() as usize).clamp(1, len_axis);
    let slots = len_axis - len + 1;
    let start = ((u * slots as f64) as usize).min(slots - 1);
    Window {
        start,
        len,
        extent_fraction: fraction,
    }
}

/// Roll-off span wide enough that adjacent elements differ by less than
/// `max_step_db` for an attenuation level of `level_db`.
pub fn effective_span(span_cfg: usize, level_db: f64, max_step_db: f64) -> usize {
    let need = (PI * level_db / (2.0 * max_step_db)).ceil() as usize + 1;
    span_cfg.max(need).max(1)
}

/// Attenuation in dB at `i` for a window with raised-cosine roll-off.
fn profile_db(i: usize, w: &Window, level_db: f64, span: usize) -> f64 {
    let dist = if i < w.start {
        w.start - i
    } else if i >= w.start + w.len {
        i + 1 - (w.start + w.len)
    } else {
        0
    };
    level_db * raised_cosine(dist as f64 / span as f64)
}

pub fn stochastic_sns(
    cfg: &StochasticSnsConfig,
    n_clusters: usize,
    shape: ArrayShape,
    rng: &mut Stream,
) -> Result<VisibilityAssignment> {
    if !(0.0..=1.0).contains(&cfg.visibility_prob) {
        return Err(invalid("visibility_prob", format!("must be in [0, 1], got {}", cfg.visibility_prob)));
    }
    if !(cfg.max_step_db > 0.0) {
        return Err(invalid("max_step_db", "must be > 0"));
    }
    let (dominant, other) = if shape.cols >= shape.rows {
        (shape.cols, shape.rows)
    } else {
        (shape.rows, shape.cols)
    };
    let mut impacted = Vec::with_capacity(n_clusters);
    let mut regions = Vec::with_capacity(n_clusters);
    let mut factors = Vec::with_capacity(n_clusters);
    for _ in 0..n_clusters {
        // Fixed number of draws per cluster keeps the stream aligned.
        let u: [f64; 6] = std::array::from_fn(|_| rng.uniform());
        let hit = u[0] >= cfg.visibility_prob;
        impacted.push(hit);
        if !hit {
            regions.push(None);
            factors.push(vec![1.0; shape.len()]);
            continue;
        }
        let frac = cfg.region_fraction.sample(u[1]).clamp(0.0, 1.0);
        let level = cfg.attenuation_db.sample(u[3]).max(0.0);
        let primary = window(dominant, frac, u[2]);
        let secondary = cfg.two_d.then(|| window(other, cfg.region_fraction.sample(u[4]).clamp(0.0, 1.0), u[5]));
        let span = effective_span(cfg.rolloff_span, level, cfg.max_step_db);
        let mut f = Vec::with_capacity(shape.len());
        for r in 0..shape.rows {
            for c in 0..shape.cols {
                let (i_dom, i_other) = if shape.cols >= shape.rows { (c, r) } else { (r, c) };
                let mut db = profile_db(i_dom, &primary, level, span);
                if let Some(w) = &secondary {
                    db = db.max(profile_db(i_other, w, level, span));
                }
                let a = 10f64.powf(-db / 20.0);
                for _ in 0..shape.pols {
                    f.push(a);
                }
            }
        }
        regions.push(Some(VisibleRegion {
            primary,
            secondary,
            attenuation_db: level,
        }));
        factors.push(f);
    }
    Ok(VisibilityAssignment {
        impacted,
        regions,
        factors,
    })
}

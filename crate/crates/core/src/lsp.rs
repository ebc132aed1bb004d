//! Large-scale parameters: table lookup and spatially correlated generation.
//!
//! Log-domain conventions: DS is lg(DS / 1 s), angular spreads are lg(deg),
//! SF and K are in dB.

use std::collections::{BTreeMap, HashMap};

use nalgebra::{DMatrix, DVector, SMatrix, SVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, GscmError, Result};
use crate::rng::Stream;
use crate::scenario::{LinkState, Scenario};
use crate::tables::{parse_records, Provenance, LSP_CSV};

pub const N_LSP: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LspParam {
    DS,
    ASA,
    ASD,
    ZSA,
    ZSD,
    SF,
    K,
}

impl LspParam {
    pub const ALL: [LspParam; N_LSP] = [
        LspParam::DS,
        LspParam::ASA,
        LspParam::ASD,
        LspParam::ZSA,
        LspParam::ZSD,
        LspParam::SF,
        LspParam::K,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            LspParam::DS => "DS",
            LspParam::ASA => "ASA",
            LspParam::ASD => "ASD",
            LspParam::ZSA => "ZSA",
            LspParam::ZSD => "ZSD",
            LspParam::SF => "SF",
            LspParam::K => "K",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.name() == s)
    }

    /// Upper clip applied to the delinearized value, in degrees.
    pub fn clip_deg(self) -> Option<f64> {
        match self {
            LspParam::ASA | LspParam::ASD => Some(104.0),
            LspParam::ZSA | LspParam::ZSD => Some(52.0),
            _ => None,
        }
    }
}

/// Coefficients of one mean or spread term:
/// `c + c_log1p lg(1 + fc) + c_log lg(fc)`, with `fc` floored at `fc_floor`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct FcPoly {
    pub c: f64,
    pub c_log1p: f64,
    pub c_log: f64,
}

impl FcPoly {
    pub fn eval(&self, fc: f64) -> f64 {
        self.c + self.c_log1p * (1.0 + fc).log10() + self.c_log * fc.log10()
    }
}

/// Geometry-dependent additions to the mean (used by ZSD).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct GeoTerms {
    pub d2d_km: f64,
    pub h_ut: f64,
    pub h_bs_abs: f64,
    pub h_ut_above_bs: f64,
    pub floor: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
struct ParamTerms {
    mu: FcPoly,
    sigma: FcPoly,
    geo: GeoTerms,
    fc_floor: f64,
    corr_dist: Option<f64>,
    provenance: Option<Provenance>,
    structural_provenance: Option<Provenance>,
}

/// Placeholder values are the most important to surface, then updates.
fn provenance_rank(p: Provenance) -> u8 {
    match p {
        Provenance::Legacy => 0,
        Provenance::Rel19Updated => 1,
        Provenance::Placeholder => 2,
    }
}

/// Small-scale constants that travel with the LSP table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SmallScaleParams {
    pub n_fixed: u32,
    pub d_min: u32,
    pub d_max: u32,
    pub r_tau: f64,
    pub xpr_mu_db: f64,
    pub xpr_sigma_db: f64,
    /// Cluster delay spread, ns.
    pub c_ds_ns: f64,
    pub c_asd_deg: f64,
    pub c_asa_deg: f64,
    pub c_zsa_deg: f64,
    /// Per-cluster shadowing std, dB.
    pub zeta_db: f64,
}

/// Absolute time-of-arrival excess delay parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AbsoluteToaParams {
    pub mu_lg: f64,
    pub sigma_lg: f64,
    pub corr_dist: f64,
}

impl AbsoluteToaParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_lg >= 0.0) {
            return Err(invalid("sigma_lg", "must be >= 0"));
        }
        if !(self.corr_dist > 0.0) {
            return Err(invalid("corr_dist", "must be > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default)]
struct StateTable {
    params: HashMap<LspParam, ParamTerms>,
    corr: HashMap<(LspParam, LspParam), f64>,
    scalars: HashMap<(String, String), (f64, Provenance)>,
}

impl StateTable {
    fn scalar(&self, param: &str, term: &str) -> Option<f64> {
        self.scalars
            .get(&(param.to_string(), term.to_string()))
            .map(|v| v.0)
    }

    fn need(&self, ctx: &str, param: &str, term: &str) -> Result<f64> {
        self.scalar(param, term).ok_or_else(|| GscmError::Table {
            table: "lsp".into(),
            line: 0,
            reason: format!("{ctx}: missing {param}/{term}"),
        })
    }
}

#[derive(Debug, Deserialize)]
struct LspRow {
    scenario: Scenario,
    state: LinkState,
    param: String,
    term: String,
    value: f64,
    provenance: Provenance,
}

/// All large-scale and small-scale parameter rows for every supported
/// (scenario, state) pair.
#[derive(Debug, Clone)]
pub struct LspTable {
    states: BTreeMap<(Scenario, LinkState), StateTable>,
}

impl LspTable {
    pub fn shipped() -> Self {
        Self::from_csv(LSP_CSV).expect("shipped LSP table is valid")
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let rows: Vec<LspRow> = parse_records("lsp", text)?;
        let mut states: BTreeMap<(Scenario, LinkState), StateTable> = BTreeMap::new();
        for (i, r) in rows.into_iter().enumerate() {
            let line = i + 2;
            let bad = |reason: String| GscmError::Table {
                table: "lsp".into(),
                line,
                reason,
            };
            let st = states.entry((r.scenario, r.state)).or_default();
            if r.param == "CORR" {
                let (a, b) = r
                    .term
                    .split_once(':')
                    .and_then(|(a, b)| Some((LspParam::parse(a)?, LspParam::parse(b)?)))
                    .ok_or_else(|| bad(format!("bad correlation pair `{}`", r.term)))?;
                if !(-1.0..=1.0).contains(&r.value) {
                    return Err(bad(format!("correlation {} outside [-1, 1]", r.value)));
                }
                st.corr.insert((a, b), r.value);
                st.corr.insert((b, a), r.value);
                continue;
            }
            if let Some(p) = LspParam::parse(&r.param) {
                let t = st.params.entry(p).or_default();
                // Distribution terms decide provenance; structural terms such
                // as the frequency floor only fill in when nothing else does.
                if r.term.starts_with("mu") || r.term.starts_with("sigma") {
                    t.provenance = Some(match t.provenance {
                        Some(old) if provenance_rank(old) >= provenance_rank(r.provenance) => old,
                        _ => r.provenance,
                    });
                } else {
                    t.structural_provenance.get_or_insert(r.provenance);
                }
                match r.term.as_str() {
                    "mu" => t.mu.c = r.value,
                    "mu_log1p" => t.mu.c_log1p = r.value,
                    "mu_log" => t.mu.c_log = r.value,
                    "sigma" => t.sigma.c = r.value,
                    "sigma_log1p" => t.sigma.c_log1p = r.value,
                    "sigma_log" => t.sigma.c_log = r.value,
                    "mu_d2d_km" => t.geo.d2d_km = r.value,
                    "mu_h_ut" => t.geo.h_ut = r.value,
                    "mu_h_bs_abs" => t.geo.h_bs_abs = r.value,
                    "mu_h_ut_above_bs" => t.geo.h_ut_above_bs = r.value,
                    "mu_floor" => t.geo.floor = Some(r.value),
                    "fc_floor" => t.fc_floor = r.value,
                    "corr_dist" => t.corr_dist = Some(r.value),
                    other => return Err(bad(format!("unknown term `{other}`"))),
                }
            } else {
                st.scalars.insert((r.param, r.term), (r.value, r.provenance));
            }
        }
        let table = Self { states };
        for (&(sc, state), _) in table.states.iter() {
            let m = table.cross_corr(sc, state)?;
            check_psd(&format!("{sc} {state}"), &m)?;
        }
        Ok(table)
    }

    pub fn supported(&self) -> Vec<(Scenario, LinkState)> {
        self.states.keys().copied().collect()
    }

    fn state(&self, scenario: Scenario, state: LinkState) -> Result<&StateTable> {
        self.states.get(&(scenario, state)).ok_or_else(|| {
            let supported = self
                .supported()
                .iter()
                .map(|(a, b)| format!("{a}/{b}"))
                .collect::<Vec<_>>()
                .join(", ");
            GscmError::Unsupported {
                what: "scenario/state",
                given: format!("{scenario}/{state}"),
                supported,
            }
        })
    }

    fn cross_corr(&self, scenario: Scenario, state: LinkState) -> Result<SMatrix<f64, N_LSP, N_LSP>> {
        let st = self.state(scenario, state)?;
        let mut m = SMatrix::<f64, N_LSP, N_LSP>::identity();
        for (&(a, b), &v) in &st.corr {
            m[(a.index(), b.index())] = v;
        }
        Ok(m)
    }

    /// Distributions at carrier `fc_ghz`.
    pub fn lookup(&self, scenario: Scenario, state: LinkState, fc_ghz: f64) -> Result<LspDistributions> {
        let st = self.state(scenario, state)?;
        let ctx = format!("{scenario} {state}");
        let mut mu = [0.0; N_LSP];
        let mut sigma = [0.0; N_LSP];
        let mut geo = [GeoTerms::default(); N_LSP];
        let mut corr_dist = [1.0; N_LSP];
        let mut present = [false; N_LSP];
        let mut provenance = [None; N_LSP];
        for p in LspParam::ALL {
            let Some(t) = st.params.get(&p) else {
                continue;
            };
            let i = p.index();
            let fc = fc_ghz.max(t.fc_floor);
            mu[i] = t.mu.eval(fc);
            sigma[i] = t.sigma.eval(fc);
            if sigma[i] < 0.0 {
                return Err(GscmError::Table {
                    table: "lsp".into(),
                    line: 0,
                    reason: format!("{ctx}: sigma of {} negative at fc = {fc_ghz}", p.name()),
                });
            }
            geo[i] = t.geo;
            corr_dist[i] = t.corr_dist.unwrap_or(1.0);
            present[i] = true;
            provenance[i] = t.provenance.or(t.structural_provenance);
        }
        for p in [LspParam::DS, LspParam::ASA, LspParam::ASD, LspParam::ZSA, LspParam::ZSD, LspParam::SF] {
            if !present[p.index()] {
                return Err(GscmError::Table {
                    table: "lsp".into(),
                    line: 0,
                    reason: format!("{ctx}: missing {}", p.name()),
                });
            }
        }
        if state == LinkState::LOS && !present[LspParam::K.index()] {
            return Err(GscmError::Table {
                table: "lsp".into(),
                line: 0,
                reason: format!("{ctx}: LOS state without K"),
            });
        }

        let c_ds_ns = {
            let base = st.need(&ctx, "CDS", "value")?;
            let lg = st.scalar("CDS", "log").unwrap_or(0.0);
            let floor = st.scalar("CDS", "floor").unwrap_or(f64::NEG_INFINITY);
            (base + lg * fc_ghz.max(6.0).log10()).max(floor)
        };
        let small = SmallScaleParams {
            n_fixed: st.need(&ctx, "NCLUST", "fixed")? as u32,
            d_min: st.need(&ctx, "NCLUST", "d_min")? as u32,
            d_max: st.need(&ctx, "NCLUST", "d_max")? as u32,
            r_tau: st.need(&ctx, "RTAU", "value")?,
            xpr_mu_db: st.need(&ctx, "XPR", "mu")?,
            xpr_sigma_db: st.need(&ctx, "XPR", "sigma")?,
            c_ds_ns,
            c_asd_deg: st.need(&ctx, "CASD", "value")?,
            c_asa_deg: st.need(&ctx, "CASA", "value")?,
            c_zsa_deg: st.need(&ctx, "CZSA", "value")?,
            zeta_db: st.need(&ctx, "ZETA", "value")?,
        };
        // O2I links use the NLOS excess-delay statistics.
        let toa_state = if state == LinkState::LOS {
            None
        } else {
            Some(LinkState::NLOS)
        };
        let toa = match toa_state {
            Some(s) => {
                let t = self.state(scenario, s)?;
                match (t.scalar("DTAU", "mu"), t.scalar("DTAU", "sigma"), t.scalar("DTAU", "corr_dist")) {
                    (Some(mu_lg), Some(sigma_lg), Some(corr_dist)) => Some(AbsoluteToaParams {
                        mu_lg,
                        sigma_lg,
                        corr_dist,
                    }),
                    _ => None,
                }
            }
            None => None,
        };

        Ok(LspDistributions {
            scenario,
            state,
            fc_ghz,
            mu,
            sigma,
            geo,
            cross_corr: self.cross_corr(scenario, state)?,
            corr_dist,
            present,
            provenance,
            small,
            toa,
        })
    }

    /// Flat dump of every row, for the `tables` CLI command.
    pub fn dump(&self) -> Vec<(String, String, String, String, f64, String)> {
        let mut out = Vec::new();
        for (&(sc, state), st) in &self.states {
            let mut params: Vec<_> = st.params.iter().collect();
            params.sort_by_key(|(p, _)| **p);
            for (p, t) in params {
                let prov = t.provenance.or(t.structural_provenance).map(|p| p.to_string()).unwrap_or_default();
                let mut push = |term: &str, v: f64| {
                    out.push((sc.to_string(), state.to_string(), p.name().to_string(), term.to_string(), v, prov.clone()));
                };
                push("mu", t.mu.c);
                push("mu_log1p", t.mu.c_log1p);
                push("mu_log", t.mu.c_log);
                push("sigma", t.sigma.c);
                push("sigma_log1p", t.sigma.c_log1p);
                push("sigma_log", t.sigma.c_log);
                if let Some(d) = t.corr_dist {
                    push("corr_dist", d);
                }
            }
            let mut scalars: Vec<_> = st.scalars.iter().collect();
            scalars.sort_by(|a, b| a.0.cmp(b.0));
            for ((p, term), (v, prov)) in scalars {
                out.push((sc.to_string(), state.to_string(), p.clone(), term.clone(), *v, prov.to_string()));
            }
        }
        out
    }
}

/// Convenience wrapper over the shipped table.
pub fn lsp_table_lookup(scenario: Scenario, state: LinkState, fc_ghz: f64) -> Result<LspDistributions> {
    LspTable::shipped().lookup(scenario, state, fc_ghz)
}

fn check_psd(context: &str, m: &SMatrix<f64, N_LSP, N_LSP>) -> Result<()> {
    let eig = m.symmetric_eigen();
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if min < -1e-9 {
        return Err(GscmError::NotPositiveSemidefinite {
            context: context.to_string(),
            min_eigenvalue: min,
        });
    }
    Ok(())
}

/// Lower-triangular square root of a PSD matrix. Falls back to an
/// eigen-decomposition when the matrix is singular.
fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    if let Some(c) = m.clone().cholesky() {
        return c.l();
    }
    let eig = m.clone().symmetric_eigen();
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|v| v.max(0.0).sqrt()));
    &eig.eigenvectors * d
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LspDistributions {
    pub scenario: Scenario,
    pub state: LinkState,
    pub fc_ghz: f64,
    /// Frequency-dependent part of each mean, log domain.
    pub mu: [f64; N_LSP],
    pub sigma: [f64; N_LSP],
    pub geo: [GeoTerms; N_LSP],
    pub cross_corr: SMatrix<f64, N_LSP, N_LSP>,
    pub corr_dist: [f64; N_LSP],
    pub present: [bool; N_LSP],
    pub provenance: [Option<Provenance>; N_LSP],
    pub small: SmallScaleParams,
    pub toa: Option<AbsoluteToaParams>,
}

impl LspDistributions {
    pub fn mu_of(&self, p: LspParam) -> f64 {
        self.mu[p.index()]
    }

    pub fn sigma_of(&self, p: LspParam) -> f64 {
        self.sigma[p.index()]
    }

    /// Mean including the geometry terms for a specific link.
    pub fn mean_for(&self, p: LspParam, d2d: f64, h_ut: f64, h_bs: f64) -> f64 {
        let i = p.index();
        let g = &self.geo[i];
        let v = self.mu[i]
            + g.d2d_km * d2d / 1000.0
            + g.h_ut * (h_ut - 1.5)
            + g.h_bs_abs * (h_ut - h_bs).abs()
            + g.h_ut_above_bs * (h_ut - h_bs).max(0.0);
        match g.floor {
            Some(f) => v.max(f),
            None => v,
        }
    }

    /// Zeroes every spread; used by degenerate-variance checks.
    pub fn with_zero_sigma(mut self) -> Self {
        self.sigma = [0.0; N_LSP];
        self
    }
}

/// Per-link realized large-scale parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LspSet {
    /// Log-domain draws before any clipping, indexed by [`LspParam`].
    pub lg: [f64; N_LSP],
    /// Delay spread, s.
    pub ds: f64,
    pub asa: f64,
    pub asd: f64,
    pub zsa: f64,
    pub zsd: f64,
    pub sf_db: f64,
    pub k_db: f64,
}

impl LspSet {
    pub fn from_lg(lg: [f64; N_LSP]) -> Self {
        let spread = |p: LspParam| {
            let v = 10f64.powf(lg[p.index()]);
            p.clip_deg().map_or(v, |c| v.min(c))
        };
        Self {
            lg,
            ds: 10f64.powf(lg[LspParam::DS.index()]),
            asa: spread(LspParam::ASA),
            asd: spread(LspParam::ASD),
            zsa: spread(LspParam::ZSA),
            zsd: spread(LspParam::ZSD),
            sf_db: lg[LspParam::SF.index()],
            k_db: lg[LspParam::K.index()],
        }
    }
}

pub fn spatial_correlation(d: f64, corr_dist: f64) -> Result<f64> {
    if !(corr_dist > 0.0) {
        return Err(invalid("corr_dist", format!("must be > 0, got {corr_dist}")));
    }
    if !(d >= 0.0) {
        return Err(invalid("d", format!("must be >= 0, got {d}")));
    }
    Ok((-d / corr_dist).exp())
}

/// Position and grouping of one link for LSP generation. Links that share a
/// `group` (normally the serving site) are spatially correlated; different
/// groups are independent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LspInput {
    pub link_id: usize,
    pub group: usize,
    pub x: f64,
    pub y: f64,
    pub d2d: f64,
    pub h_ut: f64,
    pub h_bs: f64,
}

/// Above this many links per group the exact Cholesky field is replaced by a
/// gridded separable filter.
pub const EXACT_FIELD_LIMIT: usize = 2000;

/// Unit-variance Gaussian field over `points`, correlated by
/// `exp(-d / corr_dist)`. Exact for small groups. For large groups a separable
/// first-order filter on a grid is used, whose kernel is
/// `exp(-(|dx| + |dy|) / corr_dist)`.
pub fn correlated_field(points: &[(f64, f64)], corr_dist: f64, rng: &mut Stream) -> Result<Vec<f64>> {
    if !(corr_dist > 0.0) {
        return Err(invalid("corr_dist", format!("must be > 0, got {corr_dist}")));
    }
    let n = points.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    if n == 1 {
        return Ok(vec![rng.standard_normal()]);
    }
    if n <= EXACT_FIELD_LIMIT {
        let k = DMatrix::from_fn(n, n, |i, j| {
            let d = (points[i].0 - points[j].0).hypot(points[i].1 - points[j].1);
            (-d / corr_dist).exp()
        });
        let l = psd_sqrt(&k);
        let g = DVector::from_fn(n, |_, _| rng.standard_normal());
        return Ok((l * g).iter().copied().collect());
    }
    Ok(gridded_field(points, corr_dist, rng))
}

const MAX_GRID_CELLS: f64 = 4.0e6;

fn gridded_field(points: &[(f64, f64)], corr_dist: f64, rng: &mut Stream) -> Vec<f64> {
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in points {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    let mut step = corr_dist / 8.0;
    let area = (x1 - x0 + step) * (y1 - y0 + step);
    if area / (step * step) > MAX_GRID_CELLS {
        step = (area / MAX_GRID_CELLS).sqrt();
    }
    let nx = ((x1 - x0) / step).ceil() as usize + 1;
    let ny = ((y1 - y0) / step).ceil() as usize + 1;
    let a = (-step / corr_dist).exp();
    let b = (1.0 - a * a).sqrt();
    let mut grid: Vec<f64> = (0..nx * ny).map(|_| rng.standard_normal()).collect();
    // Stationary AR(1) along x, then along y.
    for j in 0..ny {
        for i in 1..nx {
            let prev = grid[j * nx + i - 1];
            grid[j * nx + i] = a * prev + b * grid[j * nx + i];
        }
    }
    for i in 0..nx {
        for j in 1..ny {
            let prev = grid[(j - 1) * nx + i];
            grid[j * nx + i] = a * prev + b * grid[j * nx + i];
        }
    }
    points
        .iter()
        .map(|&(x, y)| {
            let i = ((x - x0) / step).round() as usize;
            let j = ((y - y0) / step).round() as usize;
            grid[j.min(ny - 1) * nx + i.min(nx - 1)]
        })
        .collect()
}

/// Correlated standard-normal fields grouped by `group`, one value per
/// input. Groups are processed in ascending order and links within a group in
/// ascending id, so the draw order is fixed.
pub fn grouped_field(inputs: &[LspInput], corr_dist: f64, rng: &mut Stream) -> Result<Vec<f64>> {
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    order.sort_by_key(|&i| (inputs[i].group, inputs[i].link_id));
    let mut out = vec![0.0; inputs.len()];
    let mut start = 0;
    while start < order.len() {
        let g = inputs[order[start]].group;
        let mut end = start;
        while end < order.len() && inputs[order[end]].group == g {
            end += 1;
        }
        let idx = &order[start..end];
        let pts: Vec<(f64, f64)> = idx.iter().map(|&i| (inputs[i].x, inputs[i].y)).collect();
        let f = correlated_field(&pts, corr_dist, rng)?;
        for (k, &i) in idx.iter().enumerate() {
            out[i] = f[k];
        }
        start = end;
    }
    Ok(out)
}

/// Draws one [`LspSet`] per input link, all sharing `dists`.
pub fn generate_correlated_lsps(
    inputs: &[LspInput],
    dists: &LspDistributions,
    rng: &mut Stream,
) -> Result<BTreeMap<usize, LspSet>> {
    check_psd(&format!("{} {}", dists.scenario, dists.state), &dists.cross_corr)?;
    let l = psd_sqrt(&DMatrix::from_fn(N_LSP, N_LSP, |i, j| dists.cross_corr[(i, j)]));
    let l = SMatrix::<f64, N_LSP, N_LSP>::from_fn(|i, j| l[(i, j)]);
    let mut fields: Vec<Vec<f64>> = Vec::with_capacity(N_LSP);
    for p in LspParam::ALL {
        if dists.present[p.index()] {
            fields.push(grouped_field(inputs, dists.corr_dist[p.index()], rng)?);
        } else {
            fields.push(vec![0.0; inputs.len()]);
        }
    }
    let mut out = BTreeMap::new();
    for (k, inp) in inputs.iter().enumerate() {
        let g = SVector::<f64, N_LSP>::from_fn(|i, _| fields[i][k]);
        let z = l * g;
        let mut lg = [0.0; N_LSP];
        for p in LspParam::ALL {
            let i = p.index();
            if dists.present[i] {
                lg[i] = dists.mean_for(p, inp.d2d, inp.h_ut, inp.h_bs) + dists.sigma[i] * z[i];
            }
        }
        out.insert(inp.link_id, LspSet::from_lg(lg));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{ModuleTag, StreamKey};

    fn s(p: u64) -> Stream {
        StreamKey::new(11).module(ModuleTag::Lsp).purpose(p).stream()
    }

    fn independent(n: usize) -> Vec<LspInput> {
        (0..n)
            .map(|i| LspInput {
                link_id: i,
                group: i,
                x: 0.0,
                y: 0.0,
                d2d: 100.0,
                h_ut: 1.5,
                h_bs: 10.0,
            })
            .collect()
    }

    #[test]
    fn umi_los_ds_updated() {
        let d = lsp_table_lookup(Scenario::UMi, LinkState::LOS, 7.0).unwrap();
        assert!((d.mu_of(LspParam::DS) - (-0.18 * 8f64.log10() - 7.28)).abs() < 1e-12);
        assert!((d.mu_of(LspParam::DS) - (-7.4426)).abs() < 1e-4);
    }

    #[test]
    fn provenance_follows_distribution_terms() {
        // DS rows start with a legacy frequency floor ahead of updated terms.
        let d = lsp_table_lookup(Scenario::UMi, LinkState::LOS, 7.0).unwrap();
        assert_eq!(d.provenance[LspParam::DS.index()], Some(Provenance::Rel19Updated));
        let o = lsp_table_lookup(Scenario::UMi, LinkState::O2I, 7.0).unwrap();
        assert_eq!(o.provenance[LspParam::DS.index()], Some(Provenance::Legacy));
    }

    #[test]
    fn uma_nlos_ds_at_10ghz() {
        let d = lsp_table_lookup(Scenario::UMa, LinkState::NLOS, 10.0).unwrap();
        assert!((d.mu_of(LspParam::DS) - (-6.604)).abs() < 1e-12);
        assert!((d.sigma_of(LspParam::DS) - 0.39).abs() < 1e-12);
    }

    #[test]
    fn uma_asd_updated_values() {
        for fc in [2.0, 7.0, 15.0, 24.0] {
            let d = lsp_table_lookup(Scenario::UMa, LinkState::LOS, fc).unwrap();
            assert_eq!(d.mu_of(LspParam::ASD), 0.92);
            assert_eq!(d.sigma_of(LspParam::ASD), 0.31);
        }
        let d = lsp_table_lookup(Scenario::UMa, LinkState::O2I, 7.0).unwrap();
        assert_eq!(d.mu_of(LspParam::ASD), 0.58);
        assert_eq!(d.sigma_of(LspParam::ASD), 0.7);
    }

    #[test]
    fn unsupported_pair_lists_supported() {
        let e = lsp_table_lookup(Scenario::InH, LinkState::O2I, 7.0).unwrap_err();
        let msg = e.to_string();
        assert!(msg.contains("UMi/LOS") && msg.contains("InH/NLOS"), "{msg}");
    }

    #[test]
    fn all_tables_psd_and_sigma_nonnegative() {
        let t = LspTable::shipped();
        for (sc, st) in t.supported() {
            for fc in [0.5, 2.0, 7.0, 15.0, 24.0, 37.0, 100.0] {
                let d = t.lookup(sc, st, fc).unwrap();
                assert!(d.sigma.iter().all(|&s| s >= 0.0), "{sc} {st} {fc}");
                let min = d.cross_corr.symmetric_eigen().eigenvalues.min();
                assert!(min >= -1e-9);
                assert_eq!(d.cross_corr, d.cross_corr.transpose());
            }
        }
    }

    #[test]
    fn non_psd_table_rejected() {
        let text = "scenario,state,param,term,value,provenance\n\
                    UMi,LOS,CORR,DS:ASA,0.9,legacy\n\
                    UMi,LOS,CORR,DS:ASD,0.9,legacy\n\
                    UMi,LOS,CORR,ASA:ASD,-0.9,legacy\n";
        assert!(matches!(
            LspTable::from_csv(text),
            Err(GscmError::NotPositiveSemidefinite { .. })
        ));
    }

    #[test]
    fn spatial_correlation_examples() {
        assert_eq!(spatial_correlation(0.0, 10.0).unwrap(), 1.0);
        assert!((spatial_correlation(10.0, 10.0).unwrap() - (-1f64).exp()).abs() < 1e-15);
        assert!((spatial_correlation(50.0, 50.0).unwrap() - 0.3679).abs() < 1e-4);
        assert!(spatial_correlation(1.0, 0.0).is_err());
    }

    #[test]
    fn zero_sigma_gives_means() {
        let d = lsp_table_lookup(Scenario::UMi, LinkState::NLOS, 7.0).unwrap().with_zero_sigma();
        let out = generate_correlated_lsps(&independent(10), &d, &mut s(1)).unwrap();
        for v in out.values() {
            for p in LspParam::ALL {
                if d.present[p.index()] {
                    assert_eq!(v.lg[p.index()], d.mean_for(p, 100.0, 1.5, 10.0));
                }
            }
        }
    }

    #[test]
    fn colocated_uts_share_lsps() {
        let d = lsp_table_lookup(Scenario::UMa, LinkState::NLOS, 7.0).unwrap();
        let mut inp = independent(2);
        inp[1].group = 0;
        let out = generate_correlated_lsps(&inp, &d, &mut s(2)).unwrap();
        for i in 0..N_LSP {
            assert!((out[&0].lg[i] - out[&1].lg[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn umi_nlos_ds_moments() {
        let d = lsp_table_lookup(Scenario::UMi, LinkState::NLOS, 7.0).unwrap();
        let out = generate_correlated_lsps(&independent(100_000), &d, &mut s(3)).unwrap();
        let xs: Vec<f64> = out.values().map(|v| v.lg[0]).collect();
        let m = xs.iter().sum::<f64>() / xs.len() as f64;
        let sd = (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt();
        // Oracle: arithmetic on the table entries.
        let mu = -0.22 * 8f64.log10() - 6.87;
        let sigma = 0.19 * 8f64.log10() + 0.22;
        assert!((mu - (-7.0687)).abs() < 1e-4 && (sigma - 0.3916).abs() < 1e-4);
        assert!((m - mu).abs() < 0.01, "mean {m}");
        assert!((sd - sigma).abs() < 0.01, "std {sd}");
    }

    #[test]
    fn pairwise_cross_correlation_recovered() {
        let d = lsp_table_lookup(Scenario::UMi, LinkState::LOS, 7.0).unwrap();
        let n = 100_000;
        let out = generate_correlated_lsps(&independent(n), &d, &mut s(4)).unwrap();
        let cols: Vec<Vec<f64>> = (0..N_LSP).map(|i| out.values().map(|v| v.lg[i]).collect()).collect();
        for i in 0..N_LSP {
            for j in (i + 1)..N_LSP {
                if d.sigma[i] == 0.0 || d.sigma[j] == 0.0 {
                    continue;
                }
                let r = pearson(&cols[i], &cols[j]);
                assert!((r - d.cross_corr[(i, j)]).abs() < 0.03, "{i},{j}: {r} vs {}", d.cross_corr[(i, j)]);
            }
        }
    }

    fn pearson(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let ma = a.iter().sum::<f64>() / n;
        let mb = b.iter().sum::<f64>() / n;
        let (mut ab, mut aa, mut bb) = (0.0, 0.0, 0.0);
        for (x, y) in a.iter().zip(b) {
            ab += (x - ma) * (y - mb);
            aa += (x - ma).powi(2);
            bb += (y - mb).powi(2);
        }
        ab / (aa * bb).sqrt()
    }

    #[test]
    fn sf_spatial_kernel() {
        // Pairs of UTs at fixed separations; each pair is its own group.
        let d = lsp_table_lookup(Scenario::UMi, LinkState::NLOS, 7.0).unwrap();
        let cd = d.corr_dist[LspParam::SF.index()];
        for sep in [0.0, 5.0, 13.0, 30.0] {
            let mut inp = Vec::new();
            for k in 0..5000 {
                for (j, x) in [0.0, sep].into_iter().enumerate() {
                    inp.push(LspInput {
                        link_id: 2 * k + j,
                        group: k,
                        x,
                        y: 0.0,
                        d2d: 50.0,
                        h_ut: 1.5,
                        h_bs: 10.0,
                    });
                }
            }
            let f = grouped_field(&inp, cd, &mut s(5)).unwrap();
            let a: Vec<f64> = f.iter().step_by(2).copied().collect();
            let b: Vec<f64> = f.iter().skip(1).step_by(2).copied().collect();
            let r = pearson(&a, &b);
            if sep == 0.0 {
                assert!((r - 1.0).abs() < 1e-9);
            } else {
                assert!((r - (-sep / cd).exp()).abs() < 0.05, "sep {sep}: {r}");
            }
        }
    }

    #[test]
    fn gridded_field_matches_l1_kernel() {
        let cd = 20.0;
        let mut rs = Vec::new();
        let mut st = s(6);
        for _ in 0..400 {
            // 2001 points forces the gridded path; probe pairs 10 m apart.
            let mut pts = vec![(0.0, 0.0), (10.0, 0.0)];
            for k in 0..1999 {
                pts.push(((k % 50) as f64 * 4.0, (k / 50) as f64 * 4.0));
            }
            let f = correlated_field(&pts, cd, &mut st).unwrap();
            rs.push((f[0], f[1]));
        }
        let a: Vec<f64> = rs.iter().map(|p| p.0).collect();
        let b: Vec<f64> = rs.iter().map(|p| p.1).collect();
        let r = pearson(&a, &b);
        assert!((r - (-0.5f64).exp()).abs() < 0.12, "r = {r}");
    }

    #[test]
    fn clipping_applied_to_linear_values_only() {
        let mut lg = [0.0; N_LSP];
        lg[LspParam::ASA.index()] = 2.5;
        lg[LspParam::ZSD.index()] = 2.0;
        let v = LspSet::from_lg(lg);
        assert_eq!(v.asa, 104.0);
        assert_eq!(v.zsd, 52.0);
        assert_eq!(v.lg[LspParam::ASA.index()], 2.5);
    }

    #[test]
    fn toa_params_present_for_nlos_and_o2i() {
        let d = lsp_table_lookup(Scenario::UMi, LinkState::NLOS, 7.0).unwrap();
        assert_eq!(d.toa.unwrap().mu_lg, -7.5);
        let d = lsp_table_lookup(Scenario::UMa, LinkState::O2I, 7.0).unwrap();
        assert_eq!(d.toa.unwrap().corr_dist, 50.0);
        assert!(lsp_table_lookup(Scenario::UMa, LinkState::LOS, 7.0).unwrap().toa.is_none());
    }
}

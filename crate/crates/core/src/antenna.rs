//! BS panels, the UT device model, element patterns, port imbalance and grip
//! blockage.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::Matrix3;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, GscmError, Result};
use crate::geometry::{gcs_to_lcs, polarization_rotation_angle, rotate_field, Direction, Orientation, Vec3};
use crate::rng::Stream;
use crate::tables::{parse_records, Provenance, GRIP_ATTENUATION_CSV, UT_CANDIDATES_CSV};

pub const UT_PEAK_DBI: f64 = 5.3;
pub const UT_HPBW_DEG: f64 = 125.0;
/// Flat back-hemisphere level of the UT reference pattern. Chosen so that the
/// pattern integrates to unit average gain over the sphere.
pub const UT_BACK_DBI: f64 = -9.77;

pub const BS_PEAK_DBI: f64 = 8.0;
pub const BS_HPBW_DEG: f64 = 65.0;
pub const BS_MAX_ATTEN_DB: f64 = 30.0;

/// UT reference gain (dBi) at `psi` degrees off boresight.
pub fn ut_reference_gain_db(psi_deg: f64) -> f64 {
    if psi_deg <= 90.0 {
        UT_PEAK_DBI - 12.0 * (psi_deg / UT_HPBW_DEG).powi(2)
    } else {
        UT_BACK_DBI
    }
}

fn off_boresight_deg(d_local: Direction) -> f64 {
    let u = d_local.unit_vector();
    u.x.clamp(-1.0, 1.0).acos().to_degrees()
}

/// UT reference field pattern in the element frame (boresight +x, polarized
/// along z). All power sits in the theta component.
pub fn ut_reference_pattern(d_local: Direction) -> (Complex64, Complex64) {
    let g = 10f64.powf(ut_reference_gain_db(off_boresight_deg(d_local)) / 20.0);
    (Complex64::new(g, 0.0), Complex64::new(0.0, 0.0))
}

/// Sectored BS element gain, dBi.
pub fn bs_element_pattern(d_local: Direction) -> f64 {
    let theta = d_local.theta_deg();
    let phi = d_local.phi_deg();
    let a_v = -(12.0 * ((theta - 90.0) / BS_HPBW_DEG).powi(2)).min(BS_MAX_ATTEN_DB);
    let a_h = -(12.0 * (phi / BS_HPBW_DEG).powi(2)).min(BS_MAX_ATTEN_DB);
    BS_PEAK_DBI - (-(a_v + a_h)).min(BS_MAX_ATTEN_DB)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ElementPattern {
    Isotropic,
    Sector,
    UtReference,
}

impl ElementPattern {
    pub fn gain_db(self, d_local: Direction) -> f64 {
        match self {
            ElementPattern::Isotropic => 0.0,
            ElementPattern::Sector => bs_element_pattern(d_local),
            ElementPattern::UtReference => ut_reference_gain_db(off_boresight_deg(d_local)),
        }
    }
}

/// One radiating element placed in the global frame.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AntennaElement {
    pub label: String,
    /// Offset from the array reference point, global frame, m.
    pub position: Vec3,
    pub orientation: Orientation,
    /// Polarization slant within the element frame, rad.
    pub slant: f64,
    pub pattern: ElementPattern,
}

impl AntennaElement {
    /// Global (F_theta, F_phi) toward direction `d`.
    pub fn field_gcs(&self, d: Direction) -> (Complex64, Complex64) {
        let local = gcs_to_lcs(&self.orientation, d);
        let g = 10f64.powf(self.pattern.gain_db(local) / 20.0);
        let ft = Complex64::new(g * self.slant.cos(), 0.0);
        let fp = Complex64::new(g * self.slant.sin(), 0.0);
        let psi = polarization_rotation_angle(&self.orientation, d);
        rotate_field(psi, ft, fp)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AntennaArray {
    pub elements: Vec<AntennaElement>,
}

impl AntennaArray {
    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn positions(&self) -> Vec<Vec3> {
        self.elements.iter().map(|e| e.position).collect()
    }

    /// Largest pairwise element distance, m.
    pub fn aperture(&self) -> f64 {
        let mut a: f64 = 0.0;
        for (i, e) in self.elements.iter().enumerate() {
            for f in &self.elements[i + 1..] {
                a = a.max((e.position - f.position).norm());
            }
        }
        a
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum BsPolarization {
    /// One element per position with this slant, degrees.
    Single(f64),
    /// +45 / -45 pair per position.
    Dual,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BsPanelConfig {
    pub rows: usize,
    pub cols: usize,
    pub spacing_v_wl: f64,
    pub spacing_h_wl: f64,
    pub polarization: BsPolarization,
    pub pattern: ElementPattern,
}

impl Default for BsPanelConfig {
    fn default() -> Self {
        Self {
            rows: 2,
            cols: 4,
            spacing_v_wl: 0.5,
            spacing_h_wl: 0.5,
            polarization: BsPolarization::Dual,
            pattern: ElementPattern::Sector,
        }
    }
}

/// Uniform rectangular panel centered on the sector reference point. Columns
/// run along the panel's local y axis and rows along local z; element order is
/// row-major with polarization innermost.
pub fn bs_panel(cfg: &BsPanelConfig, orientation: Orientation, fc_ghz: f64) -> Result<AntennaArray> {
    if cfg.rows == 0 || cfg.cols == 0 {
        return Err(invalid("bs panel", "rows and cols must be >= 1"));
    }
    if !(fc_ghz > 0.0) {
        return Err(invalid("fc_ghz", "must be > 0"));
    }
    let lambda = crate::scenario::SPEED_OF_LIGHT / (fc_ghz * 1e9);
    let r = orientation.rotation();
    let slants: Vec<f64> = match cfg.polarization {
        BsPolarization::Single(s) => vec![s.to_radians()],
        BsPolarization::Dual => vec![45f64.to_radians(), -45f64.to_radians()],
    };
    let mut elements = Vec::new();
    for row in 0..cfg.rows {
        for col in 0..cfg.cols {
            let y = (col as f64 - (cfg.cols as f64 - 1.0) / 2.0) * cfg.spacing_h_wl * lambda;
            let z = ((cfg.rows as f64 - 1.0) / 2.0 - row as f64) * cfg.spacing_v_wl * lambda;
            let pos = r * Vec3::new(0.0, y, z);
            for (k, &slant) in slants.iter().enumerate() {
                elements.push(AntennaElement {
                    label: format!("r{row}c{col}p{k}"),
                    position: pos,
                    orientation,
                    slant,
                    pattern: cfg.pattern,
                });
            }
        }
    }
    Ok(AntennaArray { elements })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DeviceKind {
    Handheld,
    Cpe,
}

impl DeviceKind {
    /// Width and height in m.
    pub fn dimensions(self) -> (f64, f64) {
        match self {
            DeviceKind::Handheld => (0.07, 0.15),
            DeviceKind::Cpe => (0.20, 0.20),
        }
    }

    fn key(self) -> &'static str {
        match self {
            DeviceKind::Handheld => "handheld",
            DeviceKind::Cpe => "cpe",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CandidateLocation {
    pub name: String,
    /// Device-frame position, m.
    pub position: Vec3,
    pub boresight: Vec3,
    pub polarization: Vec3,
}

#[derive(Debug, Deserialize)]
struct CandidateRow {
    device: String,
    location: String,
    x: f64,
    y: f64,
    z: f64,
    pol_x: f64,
    pol_y: f64,
    pol_z: f64,
    #[allow(dead_code)]
    provenance: Provenance,
}

pub fn shipped_candidates(kind: DeviceKind) -> Vec<CandidateLocation> {
    let rows: Vec<CandidateRow> =
        parse_records("ut_candidates", UT_CANDIDATES_CSV).expect("shipped candidate table parses");
    rows.into_iter()
        .filter(|r| r.device == kind.key())
        .map(|r| {
            let position = Vec3::new(r.x, r.y, r.z);
            let boresight = if position.norm() < 1e-12 {
                Vec3::z()
            } else {
                position.normalize()
            };
            CandidateLocation {
                name: r.location,
                position,
                boresight,
                polarization: Vec3::new(r.pol_x, r.pol_y, r.pol_z).normalize(),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeviceModel {
    pub kind: DeviceKind,
    pub width: f64,
    pub height: f64,
    pub candidates: Vec<CandidateLocation>,
    pub selected: Vec<usize>,
    pub orientation: Orientation,
    pub dual_polarized: bool,
}

impl DeviceModel {
    pub fn new(kind: DeviceKind, selected: Vec<usize>, orientation: Orientation, dual_polarized: bool) -> Result<Self> {
        let (width, height) = kind.dimensions();
        let candidates = shipped_candidates(kind);
        let d = Self {
            kind,
            width,
            height,
            candidates,
            selected,
            orientation,
            dual_polarized,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        if self.selected.is_empty() {
            return Err(invalid("selected", "at least one antenna location required"));
        }
        if let Some(&bad) = self.selected.iter().find(|&&i| i >= self.candidates.len()) {
            return Err(GscmError::OutOfRange {
                quantity: "candidate location index",
                value: bad as f64,
                min: 0.0,
                max: (self.candidates.len() - 1) as f64,
            });
        }
        Ok(())
    }

    pub fn location_index(&self, name: &str) -> Option<usize> {
        self.candidates.iter().position(|c| c.name == name)
    }
}

/// Element frame with x along `boresight` and z along `pol`.
fn frame_orientation(boresight: Vec3, pol: Vec3) -> Orientation {
    let x = boresight.normalize();
    let z = (pol - x * pol.dot(&x)).normalize();
    let y = z.cross(&x);
    Orientation::from_rotation(&Matrix3::from_columns(&[x, y, z]))
}

/// Elements of the device in the global frame. Each selected location yields
/// one element (two when dual polarized, the second rotated 90 deg about the
/// boresight).
pub fn place_ut_antennas(device: &DeviceModel) -> Result<AntennaArray> {
    device.validate()?;
    let r = device.orientation.rotation();
    let mut elements = Vec::new();
    for &i in &device.selected {
        let c = &device.candidates[i];
        let pols = if device.dual_polarized {
            vec![c.polarization, c.boresight.cross(&c.polarization)]
        } else {
            vec![c.polarization]
        };
        for (k, pol) in pols.into_iter().enumerate() {
            let local = frame_orientation(c.boresight, pol);
            elements.push(AntennaElement {
                label: format!("{}p{k}", c.name),
                position: r * c.position,
                orientation: Orientation::compose(&device.orientation, &local),
                slant: 0.0,
                pattern: ElementPattern::UtReference,
            });
        }
    }
    Ok(AntennaArray { elements })
}

/// Per-port gain offsets in dB, uniform over `range_db` when enabled.
pub fn draw_port_imbalance(n_ports: usize, range_db: (f64, f64), enabled: bool, rng: &mut Stream) -> Result<Vec<f64>> {
    let (lo, hi) = range_db;
    if !(lo <= hi) {
        return Err(invalid("imbalance range", format!("min {lo} > max {hi}")));
    }
    if !enabled {
        return Ok(vec![0.0; n_ports]);
    }
    Ok((0..n_ports).map(|_| rng.uniform_range(lo, hi)).collect())
}

pub const DEFAULT_IMBALANCE_DB: (f64, f64) = (-2.0, 3.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Grip {
    FreeSpace,
    OneHand,
    DualHand,
    HeadAndHand,
}

impl Grip {
    pub const ALL: [Grip; 4] = [Grip::FreeSpace, Grip::OneHand, Grip::DualHand, Grip::HeadAndHand];

    pub fn name(self) -> &'static str {
        match self {
            Grip::FreeSpace => "free_space",
            Grip::OneHand => "one_hand",
            Grip::DualHand => "dual_hand",
            Grip::HeadAndHand => "head_and_hand",
        }
    }
}

impl fmt::Display for Grip {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Grip {
    type Err = GscmError;
    fn from_str(s: &str) -> Result<Self> {
        Grip::ALL
            .into_iter()
            .find(|g| g.name() == s)
            .ok_or_else(|| GscmError::Unsupported {
                what: "grip",
                given: s.into(),
                supported: "free_space, one_hand, dual_hand, head_and_hand".into(),
            })
    }
}

/// Occurrence probability of each grip, in [`Grip::ALL`] order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GripProbTable(pub [f64; 4]);

impl Default for GripProbTable {
    fn default() -> Self {
        GripProbTable([0.10, 0.45, 0.25, 0.20])
    }
}

impl GripProbTable {
    pub fn validate(&self) -> Result<()> {
        let s: f64 = self.0.iter().sum();
        if (s - 1.0).abs() > 1e-9 || self.0.iter().any(|&p| p < 0.0) {
            return Err(invalid("grip probabilities", format!("must be >= 0 and sum to 1, sum = {s}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FcBand {
    #[serde(rename = "le8p4")]
    Le8p4,
    #[serde(rename = "ge15")]
    Ge15,
}

impl FcBand {
    /// Carriers up to 8.4 GHz use the low-band column, everything above the
    /// high-band one.
    pub fn for_fc(fc_ghz: f64) -> Self {
        if fc_ghz <= 8.4 {
            FcBand::Le8p4
        } else {
            FcBand::Ge15
        }
    }
}

#[derive(Debug, Deserialize)]
struct GripRow {
    grip: Grip,
    location: String,
    fc_band: FcBand,
    atten_db: f64,
    #[allow(dead_code)]
    provenance: Provenance,
}

#[derive(Debug, Clone)]
pub struct GripAttenuationTable {
    rows: HashMap<(Grip, String, FcBand), f64>,
}

impl GripAttenuationTable {
    pub fn from_csv(text: &str) -> Result<Self> {
        let rows: Vec<GripRow> = parse_records("grip_attenuation", text)?;
        let mut m = HashMap::new();
        for (i, r) in rows.into_iter().enumerate() {
            if r.atten_db < 0.0 {
                return Err(GscmError::Table {
                    table: "grip_attenuation".into(),
                    line: i + 2,
                    reason: "attenuation must be >= 0 dB".into(),
                });
            }
            m.insert((r.grip, r.location, r.fc_band), r.atten_db);
        }
        Ok(Self { rows: m })
    }

    pub fn shipped() -> Self {
        Self::from_csv(GRIP_ATTENUATION_CSV).expect("shipped grip table parses")
    }

    pub fn get(&self, grip: Grip, location: &str, band: FcBand) -> f64 {
        if grip == Grip::FreeSpace {
            return 0.0;
        }
        self.rows
            .get(&(grip, location.to_string(), band))
            .copied()
            .unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GripState {
    pub grip: Grip,
    /// Attenuation per candidate location, dB.
    pub per_location_attenuation: Vec<f64>,
}

pub fn grip_state(grip: Grip, table: &GripAttenuationTable, locations: &[CandidateLocation], fc_ghz: f64) -> GripState {
    let band = FcBand::for_fc(fc_ghz);
    GripState {
        grip,
        per_location_attenuation: locations.iter().map(|c| table.get(grip, &c.name, band)).collect(),
    }
}

pub fn draw_grip_and_attenuation(
    probs: &GripProbTable,
    table: &GripAttenuationTable,
    locations: &[CandidateLocation],
    fc_ghz: f64,
    rng: &mut Stream,
) -> Result<GripState> {
    probs.validate()?;
    let grip = Grip::ALL[rng.categorical(&probs.0)];
    Ok(grip_state(grip, table, locations, fc_ghz))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{lcs_to_gcs, Direction};
    use crate::rng::{ModuleTag, StreamKey};
    use proptest::prelude::*;

    fn s(p: u64) -> Stream {
        StreamKey::new(41).module(ModuleTag::Antenna).purpose(p).stream()
    }

    #[test]
    fn ut_pattern_points() {
        let bore = Direction::from_degrees(90.0, 0.0);
        let (ft, fp) = ut_reference_pattern(bore);
        assert!((20.0 * ft.norm().log10() - 5.3).abs() < 1e-12);
        assert_eq!(fp.norm(), 0.0);
        let off = Direction::from_degrees(90.0, 62.5);
        assert!((ElementPattern::UtReference.gain_db(off) - 2.3).abs() < 1e-12);
        let off = Direction::from_degrees(90.0 - 62.5, 0.0);
        assert!((ElementPattern::UtReference.gain_db(off) - 2.3).abs() < 1e-9);
    }

    #[test]
    fn ut_pattern_total_power() {
        // Midpoint quadrature in the boresight-aligned frame.
        let n = 4000;
        let dpsi = std::f64::consts::PI / n as f64;
        let mut acc = 0.0;
        for i in 0..n {
            let psi = (i as f64 + 0.5) * dpsi;
            acc += 10f64.powf(ut_reference_gain_db(psi.to_degrees()) / 10.0) * psi.sin() * dpsi;
        }
        let avg = acc * 2.0 * std::f64::consts::PI / (4.0 * std::f64::consts::PI);
        assert!((avg - 1.0).abs() < 0.03, "average gain {avg}");
    }

    #[test]
    fn bs_pattern_golden() {
        assert!((bs_element_pattern(Direction::from_degrees(90.0, 0.0)) - 8.0).abs() < 1e-12);
        assert!((bs_element_pattern(Direction::from_degrees(90.0, 65.0)) - (-4.0)).abs() < 1e-12);
        assert!((bs_element_pattern(Direction::from_degrees(90.0, 32.5)) - 5.0).abs() < 1e-12);
        assert!((bs_element_pattern(Direction::from_degrees(90.0, 180.0)) - (-22.0)).abs() < 1e-12);
        assert!((bs_element_pattern(Direction::from_degrees(155.0, 0.0)) - (-4.0)).abs() < 1e-12);
    }

    fn handheld_all() -> DeviceModel {
        DeviceModel::new(DeviceKind::Handheld, (0..8).collect(), Orientation::identity(), false).unwrap()
    }

    #[test]
    fn handheld_has_eight_distinct_boresights() {
        let d = handheld_all();
        assert_eq!(d.candidates.len(), 8);
        assert_eq!(shipped_candidates(DeviceKind::Cpe).len(), 9);
        let a = place_ut_antennas(&d).unwrap();
        assert_eq!(a.len(), 8);
        let bores: Vec<Vec3> = a
            .elements
            .iter()
            .map(|e| e.orientation.rotation() * Vec3::x())
            .collect();
        for (i, b) in bores.iter().enumerate() {
            assert!((b.norm() - 1.0).abs() < 1e-12);
            for c in &bores[i + 1..] {
                assert!((b - c).norm() > 1e-3);
            }
        }
    }

    #[test]
    fn top_center_points_along_plus_y() {
        let d = handheld_all();
        let i = d.location_index("top_center").unwrap();
        let a = place_ut_antennas(&DeviceModel {
            selected: vec![i],
            ..d
        })
        .unwrap();
        let b = a.elements[0].orientation.rotation() * Vec3::x();
        assert!((b - Vec3::y()).norm() < 1e-12);
    }

    #[test]
    fn selection_out_of_range_rejected() {
        assert!(DeviceModel::new(DeviceKind::Handheld, vec![8], Orientation::identity(), false).is_err());
        assert!(DeviceModel::new(DeviceKind::Cpe, vec![8], Orientation::identity(), false).is_ok());
        assert!(DeviceModel::new(DeviceKind::Cpe, vec![], Orientation::identity(), false).is_err());
    }

    #[test]
    fn positions_independent_of_frequency() {
        // Device geometry never sees the carrier, so positions are identical
        // whatever fc is used downstream.
        let d = handheld_all();
        let base = place_ut_antennas(&d).unwrap().positions();
        for _fc in [2.0, 7.0, 15.0, 24.0] {
            assert_eq!(place_ut_antennas(&d).unwrap().positions(), base);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn global_field_preserves_pattern_power(a in -3.1f64..3.1, b in -1.5f64..1.5, g in -3.1f64..3.1,
                                                loc in 0usize..8, th in 0.01f64..3.13, ph in -3.1f64..3.1) {
            let d = DeviceModel::new(DeviceKind::Handheld, vec![loc], Orientation::new(a, b, g), false).unwrap();
            let arr = place_ut_antennas(&d).unwrap();
            let e = &arr.elements[0];
            let dir = Direction::new(th, ph);
            let (ft, fp) = e.field_gcs(dir);
            let local = gcs_to_lcs(&e.orientation, dir);
            let expect = 10f64.powf(ElementPattern::UtReference.gain_db(local) / 10.0);
            prop_assert!((ft.norm_sqr() + fp.norm_sqr() - expect).abs() < 1e-9);
        }
    }

    #[test]
    fn elliptical_polarization_appears_off_axis() {
        let d = DeviceModel::new(DeviceKind::Handheld, vec![0], Orientation::from_degrees(20.0, 10.0, 5.0), false).unwrap();
        let e = &place_ut_antennas(&d).unwrap().elements[0];
        let dir = lcs_to_gcs(&e.orientation, Direction::from_degrees(60.0, 30.0));
        let (ft, fp) = e.field_gcs(dir);
        assert!(ft.norm() > 1e-3 && fp.norm() > 1e-3);
    }

    #[test]
    fn imbalance_examples() {
        assert_eq!(draw_port_imbalance(4, DEFAULT_IMBALANCE_DB, false, &mut s(1)).unwrap(), vec![0.0; 4]);
        assert_eq!(draw_port_imbalance(3, (0.0, 0.0), true, &mut s(1)).unwrap(), vec![0.0; 3]);
        let xs = draw_port_imbalance(100_000, DEFAULT_IMBALANCE_DB, true, &mut s(2)).unwrap();
        let m = xs.iter().sum::<f64>() / xs.len() as f64;
        assert!((m - 0.5).abs() < 0.02);
        assert!(xs.iter().all(|&x| (-2.0..=3.0).contains(&x)));
        assert!(draw_port_imbalance(1, (1.0, 0.0), true, &mut s(3)).is_err());
    }

    #[test]
    fn grip_mixture_and_table() {
        let probs = GripProbTable::default();
        let t = GripAttenuationTable::shipped();
        let locs = shipped_candidates(DeviceKind::Handheld);
        let mut r = s(4);
        let n = 100_000;
        let mut counts = [0usize; 4];
        for _ in 0..n {
            let g = draw_grip_and_attenuation(&probs, &t, &locs, 7.0, &mut r).unwrap();
            counts[Grip::ALL.iter().position(|x| *x == g.grip).unwrap()] += 1;
            if g.grip == Grip::FreeSpace {
                assert!(g.per_location_attenuation.iter().all(|&a| a == 0.0));
            }
            assert!(g.per_location_attenuation.iter().all(|&a| a >= 0.0));
        }
        for k in 0..4 {
            assert!((counts[k] as f64 / n as f64 - probs.0[k]).abs() < 0.01);
        }
        for fc in [3.5, 7.0, 15.0] {
            let g = grip_state(Grip::OneHand, &t, &locs, fc);
            let att = |name: &str| g.per_location_attenuation[locs.iter().position(|c| c.name == name).unwrap()];
            for bottom in ["bottom_left", "bottom_center", "bottom_right"] {
                for top in ["top_left", "top_center", "top_right"] {
                    assert!(att(bottom) > att(top));
                }
            }
        }
        assert!(GripProbTable([0.5, 0.5, 0.5, 0.0]).validate().is_err());
    }

    #[test]
    fn panel_layout() {
        let cfg = BsPanelConfig::default();
        let a = bs_panel(&cfg, Orientation::identity(), 3.0).unwrap();
        assert_eq!(a.len(), 16);
        let lambda = crate::scenario::SPEED_OF_LIGHT / 3e9;
        let d = (a.elements[0].position - a.elements[2].position).norm();
        assert!((d - 0.5 * lambda).abs() < 1e-12);
    }
}

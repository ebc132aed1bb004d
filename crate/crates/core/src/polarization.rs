//! Per-ray 2x2 polarization matrices with XPR and optional power variability.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{invalid, Result};
use crate::rng::Stream;

/// XPR values are capped here before conversion to linear.
pub const XPR_CAP_DB: f64 = 40.0;
pub const DEFAULT_VARIABILITY_DB: f64 = 3.0;

pub fn draw_xpr_db(mu_db: f64, sigma_db: f64, rng: &mut Stream) -> Result<f64> {
    if !(sigma_db >= 0.0) {
        return Err(invalid("sigma_xpr_db", format!("must be >= 0, got {sigma_db}")));
    }
    Ok(rng.normal(mu_db, sigma_db).min(XPR_CAP_DB))
}

/// Linear XPR `kappa = 10^(X/10)`.
pub fn draw_xpr(mu_db: f64, sigma_db: f64, rng: &mut Stream) -> Result<f64> {
    Ok(10f64.powf(draw_xpr_db(mu_db, sigma_db, rng)? / 10.0))
}

/// Entries are ordered `[tt, tp, pt, pp]` (theta-theta, theta-phi, ...).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PolarizationMatrix {
    pub m: [Complex64; 4],
    pub kappa: f64,
    /// Variability factor applied to each entry, dB (zero when disabled).
    pub variability_db: [f64; 4],
}

impl PolarizationMatrix {
    pub fn tt(&self) -> Complex64 {
        self.m[0]
    }
    pub fn tp(&self) -> Complex64 {
        self.m[1]
    }
    pub fn pt(&self) -> Complex64 {
        self.m[2]
    }
    pub fn pp(&self) -> Complex64 {
        self.m[3]
    }

    /// `[rx_t, rx_p] * M * [tx_t, tx_p]^T`.
    pub fn couple(&self, rx: (Complex64, Complex64), tx: (Complex64, Complex64)) -> Complex64 {
        rx.0 * (self.m[0] * tx.0 + self.m[1] * tx.1) + rx.1 * (self.m[2] * tx.0 + self.m[3] * tx.1)
    }
}

/// Four uniform phases plus the XPR magnitude pattern. Phases and variability
/// are always drawn so the stream position does not depend on the switch.
pub fn polarization_matrix(
    kappa: f64,
    variability: bool,
    sigma_var_db: f64,
    rng: &mut Stream,
) -> Result<PolarizationMatrix> {
    if !(kappa > 0.0) {
        return Err(invalid("kappa", format!("must be > 0, got {kappa}")));
    }
    if !(sigma_var_db >= 0.0) {
        return Err(invalid("sigma_var_db", "must be >= 0"));
    }
    let cross = 1.0 / kappa.sqrt();
    let mags = [1.0, cross, cross, 1.0];
    let phases: [f64; 4] = std::array::from_fn(|_| rng.phase());
    let z: [f64; 4] = std::array::from_fn(|_| rng.standard_normal());
    let var = if variability {
        z.map(|z| sigma_var_db * z)
    } else {
        [0.0; 4]
    };
    let m = std::array::from_fn(|i| Complex64::from_polar(mags[i] * 10f64.powf(var[i] / 20.0), phases[i]));
    Ok(PolarizationMatrix {
        m,
        kappa,
        variability_db: var,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{ModuleTag, StreamKey};

    fn s(p: u64) -> Stream {
        StreamKey::new(31).module(ModuleTag::Polarization).purpose(p).stream()
    }

    fn std(xs: &[f64]) -> (f64, f64) {
        let m = xs.iter().sum::<f64>() / xs.len() as f64;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
        (m, v.sqrt())
    }

    #[test]
    fn xpr_examples() {
        assert_eq!(draw_xpr(10.0, 0.0, &mut s(1)).unwrap(), 10.0);
        let mut r = s(2);
        let xs: Vec<f64> = (0..100_000).map(|_| 10.0 * draw_xpr(8.0, 3.0, &mut r).unwrap().log10()).collect();
        assert!((std(&xs).0 - 8.0).abs() < 0.05);
        let k = draw_xpr(1e6, 0.0, &mut r).unwrap();
        let p = polarization_matrix(k, false, 3.0, &mut r).unwrap();
        assert!(p.tp().norm() <= 1e-2 * p.tt().norm() + 1e-15);
        assert!(draw_xpr(0.0, -1.0, &mut r).is_err());
    }

    #[test]
    fn disabled_is_unit_copolar() {
        let mut r = s(3);
        for _ in 0..1000 {
            let p = polarization_matrix(6.3, false, 3.0, &mut r).unwrap();
            assert!((p.tt().norm() - 1.0).abs() < 1e-15);
            assert!((p.pp().norm() - 1.0).abs() < 1e-15);
            assert!((p.tp().norm() - 1.0 / 6.3f64.sqrt()).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_sigma_matches_disabled() {
        let a = polarization_matrix(5.0, true, 0.0, &mut s(4)).unwrap();
        let b = polarization_matrix(5.0, false, 3.0, &mut s(4)).unwrap();
        assert_eq!(a.m, b.m);
    }

    #[test]
    fn variability_std_3db() {
        let mut r = s(5);
        let xs: Vec<f64> = (0..100_000)
            .map(|_| 20.0 * polarization_matrix(8.0, true, 3.0, &mut r).unwrap().tt().norm().log10())
            .collect();
        let (_, sd) = std(&xs);
        assert!((sd - 3.0).abs() < 0.05, "{sd}");
    }

    #[test]
    fn cross_to_co_ratio() {
        let kappa = 10f64.powf(0.8);
        let mut r = s(6);
        let (mut co, mut cr) = (0.0, 0.0);
        for _ in 0..100_000 {
            let p = polarization_matrix(kappa, false, 3.0, &mut r).unwrap();
            co += p.tt().norm_sqr();
            cr += p.tp().norm_sqr();
        }
        assert!(((cr / co) * kappa - 1.0).abs() < 0.02);
        let mut ratios: Vec<f64> = (0..100_000)
            .map(|_| {
                let p = polarization_matrix(kappa, true, 3.0, &mut r).unwrap();
                p.tp().norm_sqr() / p.tt().norm_sqr()
            })
            .collect();
        ratios.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let med = ratios[ratios.len() / 2];
        assert!((med * kappa - 1.0).abs() < 0.02, "{}", med * kappa);
    }

    #[test]
    fn phases_uniform_rayleigh_test() {
        let mut r = s(7);
        let n = 10_000;
        let mats: Vec<_> = (0..n).map(|_| polarization_matrix(8.0, false, 3.0, &mut r).unwrap()).collect();
        for k in 0..4 {
            let (mut c, mut si) = (0.0, 0.0);
            for p in &mats {
                let a = p.m[k].arg();
                c += a.cos();
                si += a.sin();
            }
            let rbar = (c * c + si * si).sqrt() / n as f64;
            let z = n as f64 * rbar * rbar;
            // Rayleigh test p-value, first-order form.
            let pval = (-z).exp();
            assert!(pval > 0.01, "entry {k}: p = {pval}");
        }
    }

    #[test]
    fn deterministic() {
        let a = polarization_matrix(4.0, true, 3.0, &mut s(8)).unwrap();
        let b = polarization_matrix(4.0, true, 3.0, &mut s(8)).unwrap();
        assert_eq!(a, b);
    }
}

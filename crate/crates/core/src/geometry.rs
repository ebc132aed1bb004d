//! Coordinate frames shared by every other module.
//!
//! Orientation follows the intrinsic z-y-x convention: a local frame is
//! obtained from the global one by rotating by the bearing `alpha` about z,
//! then the downtilt `beta` about the new y, then the slant `gamma` about the
//! new x. The composite rotation is `R = Rz(alpha) * Ry(beta) * Rx(gamma)`
//! and maps local coordinates into global ones; `R^T` maps global into local.
//!
//! All angles are radians. Degrees only appear at config and report edges.

use nalgebra::{Matrix3, Vector3};
use num_complex::Complex64;
use std::f64::consts::PI;

pub type Vec3 = Vector3<f64>;

/// Below this `sin(theta)` a direction is treated as a pole and gets `phi = 0`.
pub const POLE_EPS: f64 = 1e-12;

/// Wraps an angle into (-pi, pi].
pub fn wrap_pi(a: f64) -> f64 {
    let mut r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r -= 2.0 * PI;
    }
    r
}

/// Wraps an angle in degrees into (-180, 180].
pub fn wrap_deg(a: f64) -> f64 {
    let mut r = a.rem_euclid(360.0);
    if r > 180.0 {
        r -= 360.0;
    }
    r
}

/// Device or sector orientation (bearing, downtilt, slant).
#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize, serde::Deserialize)]
pub struct Orientation {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl Orientation {
    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Self {
        assert!(
            alpha.is_finite() && beta.is_finite() && gamma.is_finite(),
            "orientation angles must be finite"
        );
        Self {
            alpha: wrap_pi(alpha),
            beta: wrap_pi(beta),
            gamma: wrap_pi(gamma),
        }
    }

    pub fn from_degrees(alpha: f64, beta: f64, gamma: f64) -> Self {
        Self::new(alpha.to_radians(), beta.to_radians(), gamma.to_radians())
    }

    pub fn identity() -> Self {
        Self::default()
    }

    /// Local-to-global rotation matrix.
    pub fn rotation(&self) -> Matrix3<f64> {
        let (sa, ca) = self.alpha.sin_cos();
        let (sb, cb) = self.beta.sin_cos();
        let (sg, cg) = self.gamma.sin_cos();
        let rz = Matrix3::new(ca, -sa, 0.0, sa, ca, 0.0, 0.0, 0.0, 1.0);
        let ry = Matrix3::new(cb, 0.0, sb, 0.0, 1.0, 0.0, -sb, 0.0, cb);
        let rx = Matrix3::new(1.0, 0.0, 0.0, 0.0, cg, -sg, 0.0, sg, cg);
        rz * ry * rx
    }

    /// Recovers the z-y-x angles of a proper rotation matrix.
    ///
    /// At gimbal lock (|beta| = 90 deg) the slant is folded into the bearing.
    pub fn from_rotation(r: &Matrix3<f64>) -> Self {
        let sb = (-r[(2, 0)]).clamp(-1.0, 1.0);
        let beta = sb.asin();
        if sb.abs() < 1.0 - 1e-12 {
            let alpha = r[(1, 0)].atan2(r[(0, 0)]);
            let gamma = r[(2, 1)].atan2(r[(2, 2)]);
            Self::new(alpha, beta, gamma)
        } else {
            let alpha = (-r[(0, 1)]).atan2(r[(1, 1)]);
            Self::new(alpha, beta, 0.0)
        }
    }

    /// Orientation of `self` applied on top of a parent frame.
    pub fn compose(parent: &Orientation, child: &Orientation) -> Self {
        Self::from_rotation(&(parent.rotation() * child.rotation()))
    }
}

/// Zenith/azimuth pair.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Direction {
    pub theta: f64,
    pub phi: f64,
}

impl Direction {
    pub fn new(theta: f64, phi: f64) -> Self {
        assert!(theta.is_finite() && phi.is_finite(), "direction must be finite");
        // Reflect zenith overshoot back into [0, pi].
        let mut t = theta.rem_euclid(2.0 * PI);
        let mut p = phi;
        if t > PI {
            t = 2.0 * PI - t;
            p += PI;
        }
        Self {
            theta: t,
            phi: wrap_pi(p),
        }
    }

    pub fn from_degrees(theta: f64, phi: f64) -> Self {
        Self::new(theta.to_radians(), phi.to_radians())
    }

    /// Direction of a (not necessarily unit) vector. Pole outputs use phi = 0.
    pub fn from_vector(v: &Vec3) -> Self {
        let n = v.norm();
        assert!(n > 0.0, "direction of a zero vector");
        let z = (v.z / n).clamp(-1.0, 1.0);
        let theta = z.acos();
        let phi = if theta.sin() < POLE_EPS {
            0.0
        } else {
            v.y.atan2(v.x)
        };
        Self {
            theta,
            phi: wrap_pi(phi),
        }
    }

    pub fn unit_vector(&self) -> Vec3 {
        spherical_unit_vector(*self)
    }

    /// Unit vector along increasing theta.
    pub fn theta_hat(&self) -> Vec3 {
        let (st, ct) = self.theta.sin_cos();
        let (sp, cp) = self.phi.sin_cos();
        Vec3::new(ct * cp, ct * sp, -st)
    }

    /// Unit vector along increasing phi.
    pub fn phi_hat(&self) -> Vec3 {
        let (sp, cp) = self.phi.sin_cos();
        Vec3::new(-sp, cp, 0.0)
    }

    pub fn theta_deg(&self) -> f64 {
        self.theta.to_degrees()
    }

    pub fn phi_deg(&self) -> f64 {
        self.phi.to_degrees()
    }
}

pub fn spherical_unit_vector(d: Direction) -> Vec3 {
    let (st, ct) = d.theta.sin_cos();
    let (sp, cp) = d.phi.sin_cos();
    Vec3::new(st * cp, st * sp, ct)
}

pub fn gcs_to_lcs(orientation: &Orientation, d_gcs: Direction) -> Direction {
    let local = orientation.rotation().transpose() * d_gcs.unit_vector();
    Direction::from_vector(&local)
}

pub fn lcs_to_gcs(orientation: &Orientation, d_lcs: Direction) -> Direction {
    let global = orientation.rotation() * d_lcs.unit_vector();
    Direction::from_vector(&global)
}

/// Angle by which the local (theta, phi) polarization basis is rotated when
/// seen in the global frame at direction `d_gcs`.
///
/// A local field `(F'_theta, F'_phi)` maps to the global pair through
/// [`rotate_field`] with this angle.
pub fn polarization_rotation_angle(orientation: &Orientation, d_gcs: Direction) -> f64 {
    let r = orientation.rotation();
    let d_lcs = Direction::from_vector(&(r.transpose() * d_gcs.unit_vector()));
    let theta_local_in_global = r * d_lcs.theta_hat();
    let c = d_gcs.theta_hat().dot(&theta_local_in_global);
    let s = d_gcs.phi_hat().dot(&theta_local_in_global);
    s.atan2(c)
}

/// Rotates a `(F_theta, F_phi)` pair by `psi`.
pub fn rotate_field(psi: f64, f_theta: Complex64, f_phi: Complex64) -> (Complex64, Complex64) {
    let (s, c) = psi.sin_cos();
    (f_theta * c - f_phi * s, f_theta * s + f_phi * c)
}

//! Spherical projection coordinates `(z1, z2, z3)`: the composition of
//! spherical coordinates with a stereographic projection of the angular part.
//! The chart maps the hemispherical shell `{x1 > 0, r_lo < |x| < r_hi}` onto
//! the cylinder `[r_lo, r_hi] x unit disk` with no coordinate singularity.

pub mod ops;

use crate::error::{Error, Result};

/// A point of the cylinder chart: radius `z1` and disk coordinates `(z2, z3)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjPoint {
    pub z1: f64,
    pub z2: f64,
    pub z3: f64,
}

impl ProjPoint {
    #[inline]
    pub fn disk_radius_sq(&self) -> f64 {
        self.z2 * self.z2 + self.z3 * self.z3
    }

    /// Polar pair `(a, tau)` of the disk coordinates.
    #[inline]
    pub fn polar(&self) -> (f64, f64) {
        (self.disk_radius_sq().sqrt(), self.z3.atan2(self.z2))
    }
}

/// Orthonormal moving frame attached to a chart point. `e1` is the radial
/// unit vector; `e2`, `e3` span the angular directions.
#[derive(Debug, Clone, Copy)]
pub struct Frame {
    pub e1: [f64; 3],
    pub e2: [f64; 3],
    pub e3: [f64; 3],
}

/// Map a Cartesian point of the open hemisphere into the chart.
pub fn to_projection(x: [f64; 3], r_lo: f64, r_hi: f64) -> Result<ProjPoint> {
    let r = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
    if x[0] < 0.0 {
        return Err(Error::Domain(format!("x1 = {} < 0", x[0])));
    }
    let tol = 1e-12 * (1.0 + r_hi);
    if r < r_lo - tol || r > r_hi + tol {
        return Err(Error::Domain(format!("|x| = {r} outside [{r_lo}, {r_hi}]")));
    }
    let den = x[0] + r;
    Ok(ProjPoint { z1: r, z2: x[1] / den, z3: x[2] / den })
}

/// Inverse chart map.
pub fn from_projection(z: &ProjPoint) -> Result<[f64; 3]> {
    let s = z.disk_radius_sq();
    if s > 1.0 + 1e-12 {
        return Err(Error::Domain(format!("|z'|^2 = {s} > 1")));
    }
    let w = 1.0 + s;
    Ok([
        z.z1 * (1.0 - s) / w,
        2.0 * z.z1 * z.z2 / w,
        2.0 * z.z1 * z.z3 / w,
    ])
}

/// Orthonormal frame at a chart point.
pub fn frame(z: &ProjPoint) -> Frame {
    let s = z.disk_radius_sq();
    let w = 1.0 + s;
    let (z2, z3) = (z.z2, z.z3);
    Frame {
        e1: [(1.0 - s) / w, 2.0 * z2 / w, 2.0 * z3 / w],
        e2: [-2.0 * z2 / w, (1.0 + z3 * z3 - z2 * z2) / w, -2.0 * z2 * z3 / w],
        e3: [-2.0 * z3 / w, -2.0 * z2 * z3 / w, (1.0 + z2 * z2 - z3 * z3) / w],
    }
}

/// Cartesian-disk components -> polar components at azimuth `tau`.
#[inline]
pub fn to_polar_pair(u2: f64, u3: f64, tau: f64) -> (f64, f64) {
    let (s, c) = tau.sin_cos();
    (u2 * c + u3 * s, -u2 * s + u3 * c)
}

/// Polar components -> Cartesian-disk components at azimuth `tau`.
#[inline]
pub fn from_polar_pair(ua: f64, ut: f64, tau: f64) -> (f64, f64) {
    let (s, c) = tau.sin_cos();
    (ua * c - ut * s, ua * s + ut * c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn gram_defect(f: &Frame) -> f64 {
        let dot = |a: &[f64; 3], b: &[f64; 3]| a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
        let mut worst = 0.0f64;
        let es = [f.e1, f.e2, f.e3];
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((dot(&es[i], &es[j]) - want).abs());
            }
        }
        worst
    }

    #[test]
    fn axis_maps_to_disk_center() {
        let p = to_projection([1.5, 0.0, 0.0], 1.0, 2.0).unwrap();
        assert_eq!(p, ProjPoint { z1: 1.5, z2: 0.0, z3: 0.0 });
        let x = from_projection(&p).unwrap();
        assert_eq!(x, [1.5, 0.0, 0.0]);
    }

    #[test]
    fn equator_maps_to_disk_rim() {
        let p = to_projection([0.0, 1.5, 0.0], 1.0, 2.0).unwrap();
        assert!((p.z1 - 1.5).abs() < 1e-15);
        assert!((p.z2 - 1.0).abs() < 1e-15);
        assert!(p.z3.abs() < 1e-15);
        let x = from_projection(&ProjPoint { z1: 1.5, z2: 1.0, z3: 0.0 }).unwrap();
        assert!((x[0]).abs() < 1e-15 && (x[1] - 1.5).abs() < 1e-15);
    }

    #[test]
    fn negative_x1_rejected() {
        assert!(to_projection([-0.1, 1.0, 0.0], 0.5, 2.0).is_err());
    }

    #[test]
    fn frame_at_center_is_cartesian() {
        let f = frame(&ProjPoint { z1: 1.0, z2: 0.0, z3: 0.0 });
        assert_eq!(f.e1, [1.0, 0.0, 0.0]);
        assert_eq!(f.e2, [0.0, 1.0, 0.0]);
        assert_eq!(f.e3, [0.0, 0.0, 1.0]);
    }

    #[test]
    fn polar_conversion_examples_and_round_trip() {
        // (u2, u3) = (cos t, sin t) -> (1, 0); (-sin t, cos t) -> (0, 1)
        for &t in &[0.0f64, 0.7, 2.9, 5.1] {
            let (ua, ut) = to_polar_pair(t.cos(), t.sin(), t);
            assert!((ua - 1.0).abs() < 1e-14 && ut.abs() < 1e-14);
            let (ua, ut) = to_polar_pair(-t.sin(), t.cos(), t);
            assert!(ua.abs() < 1e-14 && (ut - 1.0).abs() < 1e-14);
            let (u2, u3) = from_polar_pair(0.3, -1.2, t);
            let (ua, ut) = to_polar_pair(u2, u3, t);
            assert!((ua - 0.3).abs() < 1e-14 && (ut + 1.2).abs() < 1e-14);
        }
    }

    proptest! {
        #[test]
        fn round_trip_and_radius(
            x1 in 0.01f64..2.0,
            x2 in -2.0f64..2.0,
            x3 in -2.0f64..2.0,
        ) {
            let r = (x1 * x1 + x2 * x2 + x3 * x3).sqrt();
            prop_assume!(r > 0.2);
            let scale = 1.5 / r; // normalize into the shell [1, 2]
            let x = [x1 * scale, x2 * scale, x3 * scale];
            let p = to_projection(x, 1.0, 2.0).unwrap();
            let back = from_projection(&p).unwrap();
            for i in 0..3 {
                prop_assert!((back[i] - x[i]).abs() < 1e-12);
            }
            // |S^{-1}(z)| = z1 and the frame stays orthonormal
            let n = (back[0] * back[0] + back[1] * back[1] + back[2] * back[2]).sqrt();
            prop_assert!((n - p.z1).abs() < 1e-12);
            prop_assert!(gram_defect(&frame(&p)) < 1e-13);
            // e1 is the radial direction
            let f = frame(&p);
            for i in 0..3 {
                prop_assert!((f.e1[i] - back[i] / p.z1).abs() < 1e-12);
            }
        }
    }
}

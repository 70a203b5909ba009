use crate::error::{Error, Result};

/// Tensor grid on the shell `[r_lo, r_hi] x unit disk`.
///
/// Radial nodes are vertex-centered so the shock face and the exit are grid
/// surfaces. Disk-radius nodes are cell-centered, `a_j = (j + 1/2) / na`, so
/// the pole `a = 0` is never a node; the wall `a = 1` sits half a cell beyond
/// the last node and is handled by mirror ghosts. The azimuthal count must be
/// even so that the pole closure can pair `tau` with `tau + pi` exactly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub n1: usize,
    pub na: usize,
    pub ntau: usize,
    pub r_lo: f64,
    pub r_hi: f64,
}

impl GridSpec {
    pub fn new(n1: usize, na: usize, ntau: usize, r_lo: f64, r_hi: f64) -> Result<Self> {
        if ntau % 2 != 0 {
            return Err(Error::Grid(format!("ntau = {ntau} must be even")));
        }
        if n1 < 4 || na < 4 || ntau < 4 {
            return Err(Error::Grid(format!(
                "grid {n1}x{na}x{ntau} too coarse for second-order stencils"
            )));
        }
        if !(r_lo.is_finite() && r_hi.is_finite()) || r_lo <= 0.0 || r_hi <= r_lo {
            return Err(Error::Grid(format!("bad radial extent [{r_lo}, {r_hi}]")));
        }
        Ok(Self { n1, na, ntau, r_lo, r_hi })
    }

    #[inline]
    pub fn d1(&self) -> f64 {
        (self.r_hi - self.r_lo) / self.n1 as f64
    }
    #[inline]
    pub fn da(&self) -> f64 {
        1.0 / self.na as f64
    }
    #[inline]
    pub fn dtau(&self) -> f64 {
        std::f64::consts::TAU / self.ntau as f64
    }

    #[inline]
    pub fn y1(&self, i: usize) -> f64 {
        self.r_lo + self.d1() * i as f64
    }
    #[inline]
    pub fn a(&self, j: usize) -> f64 {
        (j as f64 + 0.5) * self.da()
    }
    #[inline]
    pub fn tau(&self, k: usize) -> f64 {
        k as f64 * self.dtau()
    }

    /// Disk coordinates `(y2, y3)` of node `(j, k)`.
    #[inline]
    pub fn disk_point(&self, j: usize, k: usize) -> (f64, f64) {
        let a = self.a(j);
        let t = self.tau(k);
        (a * t.cos(), a * t.sin())
    }

    /// Azimuthal index of `tau_k + pi`.
    #[inline]
    pub fn opposite(&self, k: usize) -> usize {
        (k + self.ntau / 2) % self.ntau
    }

    #[inline]
    pub fn wrap_tau(&self, k: isize) -> usize {
        k.rem_euclid(self.ntau as isize) as usize
    }

    /// Same shell refined by a factor two in every direction.
    pub fn refined(&self) -> Self {
        Self {
            n1: self.n1 * 2,
            na: self.na * 2,
            ntau: self.ntau * 2,
            ..*self
        }
    }

    /// Grid with a different radial extent but the same resolution counts.
    pub fn with_radial_extent(&self, r_lo: f64, r_hi: f64) -> Self {
        Self { r_lo, r_hi, ..*self }
    }
}

use crate::error::{Error, Result};
use crate::grid::GridSpec;
use ndarray::{Array2, Array3};

/// Scalar field on the unit disk, stored on the `(a, tau)` nodes of a grid.
#[derive(Debug, Clone)]
pub struct DiskField {
    pub grid: GridSpec,
    pub data: Array2<f64>,
}

/// Scalar field on the computational shell, stored on `(y1, a, tau)` nodes.
#[derive(Debug, Clone)]
pub struct ShellField {
    pub grid: GridSpec,
    pub data: Array3<f64>,
}

/// Map a possibly negative disk-radius index to its pole-parity image.
///
/// Crossing the disk center, the node at `-a_j` along azimuth `tau` is the
/// node at `a_j` along `tau + pi`. Returns the reflected radial index and
/// whether the azimuth must be flipped.
#[inline]
pub fn pole_reflect(j: isize) -> (usize, bool) {
    if j >= 0 {
        (j as usize, false)
    } else {
        ((-j - 1) as usize, true)
    }
}

impl DiskField {
    pub fn zeros(grid: &GridSpec) -> Self {
        Self { grid: *grid, data: Array2::zeros((grid.na, grid.ntau)) }
    }

    pub fn from_fn(grid: &GridSpec, mut f: impl FnMut(f64, f64) -> f64) -> Self {
        let mut out = Self::zeros(grid);
        for j in 0..grid.na {
            for k in 0..grid.ntau {
                out.data[[j, k]] = f(grid.a(j), grid.tau(k));
            }
        }
        out
    }

    /// Node value with pole-parity closure for negative radial indices.
    /// Indices at or beyond the wall are a caller bug.
    #[inline]
    pub fn at(&self, j: isize, k: isize) -> f64 {
        let (jj, flip) = pole_reflect(j);
        let kk = if flip {
            self.grid.opposite(self.grid.wrap_tau(k))
        } else {
            self.grid.wrap_tau(k)
        };
        self.data[[jj, kk]]
    }

    pub fn sup(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn check_grid(&self, grid: &GridSpec) -> Result<()> {
        if self.grid != *grid || self.data.dim() != (grid.na, grid.ntau) {
            return Err(Error::Grid("disk field/grid mismatch".into()));
        }
        Ok(())
    }

    /// Interpolate at disk point `(y2, y3)` with a bicubic stencil
    /// (pole-parity ghosts below `a_0`, shifted stencil at the wall).
    pub fn interp(&self, y2: f64, y3: f64) -> f64 {
        let g = &self.grid;
        let a = y2.hypot(y3);
        let tau = y3.atan2(y2);
        let (ja, wa) = cubic_nodes_a(g, a);
        let (kt, wt) = cubic_nodes_tau(g, tau);
        let mut acc = 0.0;
        for (p, &jj) in ja.iter().enumerate() {
            let mut row = 0.0;
            for (q, &kk) in kt.iter().enumerate() {
                row += wt[q] * self.at(jj, kk);
            }
            acc += wa[p] * row;
        }
        acc
    }
}

impl ShellField {
    pub fn zeros(grid: &GridSpec) -> Self {
        Self { grid: *grid, data: Array3::zeros((grid.n1 + 1, grid.na, grid.ntau)) }
    }

    pub fn from_fn(grid: &GridSpec, mut f: impl FnMut(f64, f64, f64) -> f64) -> Self {
        let mut out = Self::zeros(grid);
        for i in 0..=grid.n1 {
            for j in 0..grid.na {
                for k in 0..grid.ntau {
                    out.data[[i, j, k]] = f(grid.y1(i), grid.a(j), grid.tau(k));
                }
            }
        }
        out
    }

    /// Node value with pole-parity closure in the radial disk index.
    #[inline]
    pub fn at(&self, i: usize, j: isize, k: isize) -> f64 {
        let (jj, flip) = pole_reflect(j);
        let kk = if flip {
            self.grid.opposite(self.grid.wrap_tau(k))
        } else {
            self.grid.wrap_tau(k)
        };
        self.data[[i, jj, kk]]
    }

    /// Extract the disk trace at radial level `i`.
    pub fn level(&self, i: usize) -> DiskField {
        DiskField {
            grid: self.grid,
            data: self.data.index_axis(ndarray::Axis(0), i).to_owned(),
        }
    }

    pub fn sup(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn check_grid(&self, grid: &GridSpec) -> Result<()> {
        if self.grid != *grid || self.data.dim() != (grid.n1 + 1, grid.na, grid.ntau) {
            return Err(Error::Grid("shell field/grid mismatch".into()));
        }
        Ok(())
    }

    /// Tricubic interpolation at `(y1, y2, y3)`; the radial stencil is
    /// clamped at the shell ends.
    pub fn interp(&self, y1: f64, y2: f64, y3: f64) -> f64 {
        let g = &self.grid;
        let a = y2.hypot(y3);
        let tau = y3.atan2(y2);
        let (i1, w1) = cubic_nodes_clamped(y1, g.r_lo, g.d1(), g.n1);
        let (ja, wa) = cubic_nodes_a(g, a);
        let (kt, wt) = cubic_nodes_tau(g, tau);
        let mut acc = 0.0;
        for (r, &ii) in i1.iter().enumerate() {
            let mut plane = 0.0;
            for (p, &jj) in ja.iter().enumerate() {
                let mut row = 0.0;
                for (q, &kk) in kt.iter().enumerate() {
                    row += wt[q] * self.at(ii, jj, kk);
                }
                plane += wa[p] * row;
            }
            acc += w1[r] * plane;
        }
        acc
    }
}

/// Lagrange cubic weights on four consecutive equally spaced nodes, with the
/// evaluation point at offset `t` (in units of the spacing) from the first.
#[inline]
fn lagrange4(t: f64) -> [f64; 4] {
    [
        -(t - 1.0) * (t - 2.0) * (t - 3.0) / 6.0,
        t * (t - 2.0) * (t - 3.0) / 2.0,
        -t * (t - 1.0) * (t - 3.0) / 2.0,
        t * (t - 1.0) * (t - 2.0) / 6.0,
    ]
}

/// Four-node cubic stencil for a vertex grid `x_i = x0 + i h`, clamped to
/// `[0, n]`.
fn cubic_nodes_clamped(x: f64, x0: f64, h: f64, n: usize) -> ([usize; 4], [f64; 4]) {
    let s = (x - x0) / h;
    let mut base = s.floor() as isize - 1;
    base = base.clamp(0, n as isize - 3);
    let t = s - base as f64;
    let b = base as usize;
    ([b, b + 1, b + 2, b + 3], lagrange4(t))
}

/// Four-node cubic stencil in the cell-centered disk radius. Indices may be
/// negative (pole ghosts); at the wall the stencil shifts inward.
fn cubic_nodes_a(g: &GridSpec, a: f64) -> ([isize; 4], [f64; 4]) {
    let da = g.da();
    let s = a / da - 0.5; // node j sits at s = j
    let mut base = s.floor() as isize - 1;
    // Keep the stencil inside [-2, na-1]; ghosts below zero use pole parity.
    let max_base = g.na as isize - 4;
    if base > max_base {
        base = max_base;
    }
    if base < -2 {
        base = -2;
    }
    let t = s - base as f64;
    (
        [base, base + 1, base + 2, base + 3],
        lagrange4(t),
    )
}

fn cubic_nodes_tau(g: &GridSpec, tau: f64) -> ([isize; 4], [f64; 4]) {
    let dt = g.dtau();
    let s = tau.rem_euclid(std::f64::consts::TAU) / dt;
    let base = s.floor() as isize - 1;
    let t = s - base as f64;
    (
        [base, base + 1, base + 2, base + 3],
        lagrange4(t),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> GridSpec {
        GridSpec::new(8, 12, 16, 1.0, 2.0).unwrap()
    }

    #[test]
    fn pole_parity_lookup_matches_reflected_node() {
        let g = grid();
        let f = DiskField::from_fn(&g, |a, t| a * t.cos()); // smooth: y2
        // f(-a_0, tau) must equal f(a_0, tau + pi)
        let k = 3usize;
        let v = f.at(-1, k as isize);
        assert_eq!(v, f.data[[0, g.opposite(k)]]);
    }

    #[test]
    fn disk_interp_converges_at_cubic_order() {
        let exact = |y2: f64, y3: f64| {
            let a2 = y2 * y2 + y3 * y3;
            let t = y3.atan2(y2);
            (1.0 - a2).powi(2) * (2.0 * t).cos()
        };
        let probe = [(0.3, 0.2), (-0.1, 0.05), (0.0, 0.6), (0.62, -0.33), (0.01, 0.009)];
        let mut errs = Vec::new();
        for (na, nt) in [(24, 32), (48, 64)] {
            let g = GridSpec::new(8, na, nt, 1.0, 2.0).unwrap();
            let f = DiskField::from_fn(&g, |a, t| (1.0 - a * a).powi(2) * (2.0 * t).cos());
            let mut worst = 0.0f64;
            for &(y2, y3) in &probe {
                worst = worst.max((f.interp(y2, y3) - exact(y2, y3)).abs());
            }
            errs.push(worst);
        }
        let order = (errs[0] / errs[1]).log2();
        assert!(errs[1] < 1e-4, "bicubic error {}", errs[1]);
        assert!(order > 3.0, "observed interpolation order {order}");
    }

    #[test]
    fn shell_interp_is_exact_on_cubics_in_y1() {
        let g = grid();
        let f = ShellField::from_fn(&g, |y1, _, _| 1.0 + y1 + y1 * y1 + y1 * y1 * y1);
        let y1 = 1.2345;
        let want = 1.0 + y1 + y1 * y1 + y1 * y1 * y1;
        let got = f.interp(y1, 0.31, 0.17);
        assert!((got - want).abs() < 1e-10, "{got} vs {want}");
    }
}

/// Tricubic interpolation of two shell fields sharing one weight
/// computation; the hot paths of the characteristic tracing use this. A
/// contiguous fast path covers stencils that touch neither the pole ghosts
/// nor the azimuthal wrap.
pub fn interp_pair(a: &ShellField, b: &ShellField, y1: f64, y2: f64, y3: f64) -> (f64, f64) {
    let g = &a.grid;
    let rad = y2.hypot(y3);
    let tau = y3.atan2(y2);
    let (i1, w1) = cubic_nodes_clamped(y1, g.r_lo, g.d1(), g.n1);
    let (ja, wa) = cubic_nodes_a(g, rad);
    let (kt, wt) = cubic_nodes_tau(g, tau);
    let jb = ja[0];
    let kb = kt[0];
    if jb >= 0 && (jb as usize) + 3 < g.na && kb >= 0 && (kb as usize) + 3 < g.ntau {
        let (jb, kb) = (jb as usize, kb as usize);
        let da = a.data.as_slice().unwrap();
        let db = b.data.as_slice().unwrap();
        let stride_i = g.na * g.ntau;
        let stride_j = g.ntau;
        let mut va = 0.0;
        let mut vb = 0.0;
        for r in 0..4 {
            let base_i = (i1[r]) * stride_i;
            let mut pa = 0.0;
            let mut pb = 0.0;
            for p in 0..4 {
                let off = base_i + (jb + p) * stride_j + kb;
                let ra = wt[0] * da[off]
                    + wt[1] * da[off + 1]
                    + wt[2] * da[off + 2]
                    + wt[3] * da[off + 3];
                let rb = wt[0] * db[off]
                    + wt[1] * db[off + 1]
                    + wt[2] * db[off + 2]
                    + wt[3] * db[off + 3];
                pa += wa[p] * ra;
                pb += wa[p] * rb;
            }
            va += w1[r] * pa;
            vb += w1[r] * pb;
        }
        return (va, vb);
    }
    let mut va = 0.0;
    let mut vb = 0.0;
    for (r, &ii) in i1.iter().enumerate() {
        let mut pa = 0.0;
        let mut pb = 0.0;
        for (p, &jj) in ja.iter().enumerate() {
            let mut ra = 0.0;
            let mut rb = 0.0;
            for (q, &kk) in kt.iter().enumerate() {
                ra += wt[q] * a.at(ii, jj, kk);
                rb += wt[q] * b.at(ii, jj, kk);
            }
            pa += wa[p] * ra;
            pb += wa[p] * rb;
        }
        va += w1[r] * pa;
        vb += w1[r] * pb;
    }
    (va, vb)
}

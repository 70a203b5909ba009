//! The elliptic stage: the auxiliary Poisson problem for the divergence
//! cleanup, the divergence-curl least-squares solve, the disk
//! Poisson-Neumann problem for the oblique shock datum, and the nonlocal
//! potential equation. Every solver works per azimuthal Fourier mode: all
//! coefficients depend on `(y1, a)` only, the nonlocal trace term couples
//! radial levels within a mode but never across modes.

use crate::background::CoeffSet;
use crate::coords::ops;
use crate::error::{Error, Result};
use crate::field::{DiskField, ShellField};
use crate::grid::GridSpec;
use crate::linalg::{BandedCholesky, BlockTriSolver, CMat, DenseLu};
use num_complex::Complex64 as C64;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

const ZERO: C64 = C64::new(0.0, 0.0);

// ---------------------------------------------------------------------------
// azimuthal mode transforms
// ---------------------------------------------------------------------------

pub struct FftPair {
    fwd: Arc<dyn Fft<f64>>,
    n: usize,
}

impl FftPair {
    pub fn new(ntau: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self { fwd: planner.plan_fft_forward(ntau), n: ntau }
    }

    /// Modes `m = 0..=n/2` of a real line of length `n`.
    fn line_to_modes(&self, line: &[f64], out: &mut [C64]) {
        let mut buf: Vec<C64> = line.iter().map(|&v| C64::new(v, 0.0)).collect();
        self.fwd.process(&mut buf);
        let scale = 1.0 / self.n as f64;
        for (m, o) in out.iter_mut().enumerate() {
            *o = buf[m] * scale;
        }
    }

    /// Reconstruct the real line from modes `0..=n/2`.
    fn modes_to_line(&self, modes: &[C64], out: &mut [f64]) {
        let n = self.n;
        let half = n / 2;
        for (k, o) in out.iter_mut().enumerate() {
            let t = std::f64::consts::TAU * k as f64 / n as f64;
            let mut acc = modes[0].re;
            for m in 1..half {
                let ph = C64::from_polar(1.0, m as f64 * t);
                acc += 2.0 * (modes[m] * ph).re;
            }
            acc += (modes[half] * C64::from_polar(1.0, half as f64 * t)).re;
            *o = acc;
        }
    }
}

/// Per-mode coefficients of a shell field, indexed `[m][i1 * na + j]`.
pub fn shell_to_modes(f: &ShellField, fft: &FftPair) -> Vec<Vec<C64>> {
    let g = &f.grid;
    let half = g.ntau / 2;
    let mut out = vec![vec![ZERO; (g.n1 + 1) * g.na]; half + 1];
    let mut buf = vec![ZERO; half + 1];
    for i in 0..=g.n1 {
        for j in 0..g.na {
            let line: Vec<f64> = (0..g.ntau).map(|k| f.data[[i, j, k]]).collect();
            fft.line_to_modes(&line, &mut buf);
            for m in 0..=half {
                out[m][i * g.na + j] = buf[m];
            }
        }
    }
    out
}

pub fn modes_to_shell(modes: &[Vec<C64>], grid: &GridSpec, fft: &FftPair) -> ShellField {
    let half = grid.ntau / 2;
    let mut f = ShellField::zeros(grid);
    let mut line = vec![0.0; grid.ntau];
    let mut coef = vec![ZERO; half + 1];
    for i in 0..=grid.n1 {
        for j in 0..grid.na {
            for m in 0..=half {
                coef[m] = modes[m][i * grid.na + j];
            }
            fft.modes_to_line(&coef, &mut line);
            for k in 0..grid.ntau {
                f.data[[i, j, k]] = line[k];
            }
        }
    }
    f
}

pub fn disk_to_modes(f: &DiskField, fft: &FftPair) -> Vec<Vec<C64>> {
    let g = &f.grid;
    let half = g.ntau / 2;
    let mut out = vec![vec![ZERO; g.na]; half + 1];
    let mut buf = vec![ZERO; half + 1];
    for j in 0..g.na {
        let line: Vec<f64> = (0..g.ntau).map(|k| f.data[[j, k]]).collect();
        fft.line_to_modes(&line, &mut buf);
        for m in 0..=half {
            out[m][j] = buf[m];
        }
    }
    out
}

pub fn modes_to_disk(modes: &[Vec<C64>], grid: &GridSpec, fft: &FftPair) -> DiskField {
    let half = grid.ntau / 2;
    let mut f = DiskField::zeros(grid);
    let mut line = vec![0.0; grid.ntau];
    let mut coef = vec![ZERO; half + 1];
    for j in 0..grid.na {
        for m in 0..=half {
            coef[m] = modes[m][j];
        }
        fft.modes_to_line(&coef, &mut line);
        for k in 0..grid.ntau {
            f.data[[j, k]] = line[k];
        }
    }
    f
}

/// Modified wavenumbers reproducing the centered three-point stencils:
/// first derivative `sin(m dt)/dt`, second difference `(2 sin(m dt/2)/dt)^2`.
fn mod_wavenumbers(m: usize, dtau: f64) -> (f64, f64) {
    let mm = m as f64;
    let m1 = (mm * dtau).sin() / dtau;
    let s = (0.5 * mm * dtau).sin();
    (m1, (2.0 * s / dtau) * (2.0 * s / dtau))
}

// ---------------------------------------------------------------------------
// the per-mode disk operator in conservative flux form
// ---------------------------------------------------------------------------

/// Tridiagonal coefficients of the flux-form disk Laplacian for mode `m`:
/// row `j` of `(1/a) d/da (a d/da .) - m~^2/a^2`, with a zero flux through
/// the pole face and the wall face treated per `wall`:
/// `Dirichlet` mirrors the ghost negatively, `Neumann` zeroes the flux.
#[derive(Clone, Copy, PartialEq)]
enum WallBc {
    Dirichlet,
    Neumann,
}

fn disk_rows(grid: &GridSpec, m: usize, wall: WallBc) -> Vec<(f64, f64, f64)> {
    disk_rows_sym(grid, m, wall, false)
}

/// `composed_tau = true` replaces the compact second-difference symbol by
/// the symbol of two composed centered first derivatives, matching the
/// node-divergence-of-node-gradient operator used for the divergence
/// bookkeeping.
fn disk_rows_sym(
    grid: &GridSpec,
    m: usize,
    wall: WallBc,
    composed_tau: bool,
) -> Vec<(f64, f64, f64)> {
    let na = grid.na;
    let da = grid.da();
    let (m1t, m2t_compact) = mod_wavenumbers(m, grid.dtau());
    let m2t = if composed_tau { m1t * m1t } else { m2t_compact };
    let mut rows = Vec::with_capacity(na);
    for j in 0..na {
        let aj = grid.a(j);
        let af_lo = j as f64 * da;
        let af_hi = (j + 1) as f64 * da;
        let mut lo = af_lo / (aj * da * da);
        let mut di = -(af_lo + af_hi) / (aj * da * da) - m2t / (aj * aj);
        let mut hi = af_hi / (aj * da * da);
        if j == 0 {
            lo = 0.0; // pole face carries no flux
            di = -af_hi / (aj * da * da) - m2t / (aj * aj);
        }
        if j == na - 1 {
            match wall {
                WallBc::Neumann => {
                    hi = 0.0;
                    di = -af_lo / (aj * da * da) - m2t / (aj * aj);
                }
                WallBc::Dirichlet => {
                    // ghost = -last: the wall face flux becomes -2 f_last / da
                    hi = 0.0;
                    di = -(af_lo + 2.0 * af_hi) / (aj * da * da) - m2t / (aj * aj);
                }
            }
        }
        rows.push((lo, di, hi));
    }
    rows
}

// ---------------------------------------------------------------------------
// solver context with cached factorizations
// ---------------------------------------------------------------------------

/// One least-squares divergence-curl system per mode.
struct DivCurlMode {
    /// unknown offsets: per radial level the index of its first unknown
    offsets: Vec<usize>,
    n_unknowns: usize,
    /// CSR of the first-order operator
    rows: Vec<Vec<(usize, C64)>>,
    chol: BandedCholesky,
}

/// Elliptic solver context for a fixed grid and background; the per-mode
/// factorizations are iterate-independent and built once.
pub struct EllipticCtx {
    pub grid: GridSpec,
    pub coeffs: CoeffSet,
    pub fft: FftPair,
    pub tol_ell: f64,
    upsilon: Vec<BlockTriSolver>,
    potential: Vec<BlockTriSolver>,
    divcurl: Vec<DivCurlMode>,
    ms: Vec<DenseLu>,
}

impl EllipticCtx {
    pub fn new(grid: &GridSpec, coeffs: &CoeffSet, tol_ell: f64) -> Result<Self> {
        use rayon::prelude::*;
        let half = grid.ntau / 2;
        // the modes are independent; build their factorizations in parallel
        let built: Result<Vec<_>> = (0..=half)
            .into_par_iter()
            .map(|m| {
                Ok((
                    build_upsilon_mode(grid, m)?,
                    build_potential_mode(grid, coeffs, m)?,
                    build_divcurl_mode(grid, m)?,
                    build_ms_mode(grid, m)?,
                ))
            })
            .collect();
        let mut upsilon = Vec::with_capacity(half + 1);
        let mut potential = Vec::with_capacity(half + 1);
        let mut divcurl = Vec::with_capacity(half + 1);
        let mut ms = Vec::with_capacity(half + 1);
        for (u, p, d, m) in built? {
            upsilon.push(u);
            potential.push(p);
            divcurl.push(d);
            ms.push(m);
        }
        Ok(Self {
            grid: *grid,
            coeffs: *coeffs,
            fft: FftPair::new(grid.ntau),
            tol_ell,
            upsilon,
            potential,
            divcurl,
            ms,
        })
    }
}

// ---------------------------------------------------------------------------
// auxiliary Poisson problem for the divergence cleanup
// ---------------------------------------------------------------------------

/// Laplace operator of the chart with homogeneous radial Neumann and wall
/// Dirichlet conditions, assembled per mode as a block-tridiagonal system.
fn build_upsilon_mode(grid: &GridSpec, m: usize) -> Result<BlockTriSolver> {
    let n1 = grid.n1;
    let na = grid.na;
    let d1 = grid.d1();
    let rows = disk_rows_sym(grid, m, WallBc::Dirichlet, true);
    let mut lower = Vec::with_capacity(n1 + 1);
    let mut diag = Vec::with_capacity(n1 + 1);
    let mut upper = Vec::with_capacity(n1 + 1);
    for i in 0..=n1 {
        let y1 = grid.y1(i);
        let mut dm = CMat::zeros(na, na);
        let mut lm = CMat::zeros(na, na);
        let mut um = CMat::zeros(na, na);
        for j in 0..na {
            let a = grid.a(j);
            let s = (1.0 + a * a) * (1.0 + a * a) / (4.0 * y1 * y1);
            let (lo, di, hi) = rows[j];
            if j > 0 {
                dm[(j, j - 1)] += C64::new(s * lo, 0.0);
            }
            dm[(j, j)] += C64::new(s * di, 0.0);
            if j + 1 < na {
                dm[(j, j + 1)] += C64::new(s * hi, 0.0);
            }
            // radial part
            if i == 0 {
                // Neumann ghost: f_{-1} = f_1, first derivative vanishes
                dm[(j, j)] += C64::new(-2.0 / (d1 * d1), 0.0);
                um[(j, j)] += C64::new(2.0 / (d1 * d1), 0.0);
            } else if i == n1 {
                dm[(j, j)] += C64::new(-2.0 / (d1 * d1), 0.0);
                lm[(j, j)] += C64::new(2.0 / (d1 * d1), 0.0);
            } else {
                dm[(j, j)] += C64::new(-2.0 / (d1 * d1), 0.0);
                lm[(j, j)] += C64::new(1.0 / (d1 * d1) - 1.0 / (y1 * d1), 0.0);
                um[(j, j)] += C64::new(1.0 / (d1 * d1) + 1.0 / (y1 * d1), 0.0);
            }
        }
        lower.push(lm);
        diag.push(dm);
        upper.push(um);
    }
    BlockTriSolver::factor(lower, diag, upper)
}

/// Diagnostics of the divergence cleanup.
#[derive(Debug, Clone, Copy)]
pub struct UpsilonDiag {
    /// node divergence of the input field
    pub div_in: f64,
    /// node divergence after subtracting the gradient of the solution
    pub div_out: f64,
    /// wall values of the solution (Dirichlet residual)
    pub wall_value: f64,
    /// one-sided (d/da^2 + d/da) at the wall
    pub wall_daa: f64,
}

/// Solve the auxiliary problem: Laplacian of the result equals the shell
/// divergence of `g`, with vanishing radial derivative at both spheres and
/// zero wall trace.
pub fn solve_upsilon(
    ctx: &EllipticCtx,
    g: &[ShellField; 3],
) -> Result<(ShellField, UpsilonDiag)> {
    let grid = &ctx.grid;
    let rhs = ops::divergence(&g[0], &g[1], &g[2])?;
    let div_in = ops::shell_l2(&rhs);
    let solve_compact = |data: &ShellField| -> ShellField {
        let modes = shell_to_modes(data, &ctx.fft);
        let half = grid.ntau / 2;
        let mut sol = vec![vec![ZERO; (grid.n1 + 1) * grid.na]; half + 1];
        for m in 0..=half {
            let mut f = modes[m].clone();
            ctx.upsilon[m].solve(&mut f);
            sol[m] = f;
        }
        modes_to_shell(&sol, grid, &ctx.fft)
    };
    let cleaned_div = |u: &ShellField| -> Result<(ShellField, [ShellField; 3])> {
        let grad = ops::grad_shell(u);
        let mut cleaned = [g[0].clone(), g[1].clone(), g[2].clone()];
        for c in 0..3 {
            ndarray::Zip::from(&mut cleaned[c].data)
                .and(&grad[c].data)
                .for_each(|a, &b| *a -= b);
        }
        let d = ops::divergence(&cleaned[0], &cleaned[1], &cleaned[2])?;
        Ok((d, cleaned))
    };
    // compact solve, then defect corrections against the composed
    // divergence-of-gradient operator so the cleaned field is divergence
    // free in the same discrete divergence that measured the data
    let mut ups = solve_compact(&rhs);
    let (mut res, mut cleaned) = cleaned_div(&ups)?;
    let mut div_out = ops::shell_l2(&res);
    for _it in 0..6 {
        if div_out <= 1e-10 * div_in.max(1e-300) {
            break;
        }
        if std::env::var("HS_DEBUG_UPS").is_ok() {
            eprintln!("  upsilon defect iter {_it}: div {div_out:.4e} (in {div_in:.4e})");
        }
        let corr = solve_compact(&res);
        ndarray::Zip::from(&mut ups.data)
            .and(&corr.data)
            .for_each(|a, &b| *a += b);
        let (r2, c2) = cleaned_div(&ups)?;
        let d2 = ops::shell_l2(&r2);
        if d2 >= div_out {
            break;
        }
        res = r2;
        cleaned = c2;
        div_out = d2;
    }
    let _ = (&res, &cleaned);
    let mut wall_value = 0.0f64;
    let mut wall_daa = 0.0f64;
    for i in 0..=grid.n1 {
        for k in 0..grid.ntau {
            wall_value = wall_value.max(ops::shell_wall_value(&ups, i, k).abs());
            wall_daa = wall_daa
                .max((ops::shell_wall_daa(&ups, i, k) + ops::shell_wall_da(&ups, i, k)).abs());
        }
    }
    Ok((ups, UpsilonDiag { div_in, div_out, wall_value, wall_daa }))
}

// ---------------------------------------------------------------------------
// divergence-curl least squares
// ---------------------------------------------------------------------------

/// Unknown layout per mode: for each radial level `i`, the polar components
/// `(W1, Wa, Wt)` on the `na` rings, with `W1` removed at the two radial
/// ends where it vanishes.
fn build_divcurl_mode(grid: &GridSpec, m: usize) -> Result<DivCurlMode> {
    let n1 = grid.n1;
    let na = grid.na;
    let d1 = grid.d1();
    let da = grid.da();
    let (m1t, _) = mod_wavenumbers(m, grid.dtau());
    // per-level unknown counts: W1 only on interior levels
    let mut offsets = Vec::with_capacity(n1 + 2);
    let mut acc = 0usize;
    for i in 0..=n1 {
        offsets.push(acc);
        let w1 = if i == 0 || i == n1 { 0 } else { na };
        acc += w1 + 2 * na;
    }
    offsets.push(acc);
    let n_unknowns = acc;
    let idx_w1 = |i: usize, j: usize| -> Option<usize> {
        if i == 0 || i == n1 {
            None
        } else {
            Some(offsets[i] + j)
        }
    };
    let idx_wa = |i: usize, j: usize| -> usize {
        let w1 = if i == 0 || i == n1 { 0 } else { na };
        offsets[i] + w1 + j
    };
    let idx_wt = |i: usize, j: usize| -> usize {
        let w1 = if i == 0 || i == n1 { 0 } else { na };
        offsets[i] + w1 + na + j
    };

    // pole parity signs for the mode: scalars (-1)^m, polar vectors flipped
    let scal = if m % 2 == 0 { 1.0 } else { -1.0 };
    let vect = -scal;

    let mut rows: Vec<Vec<(usize, C64)>> = Vec::new();
    let push = |row: Vec<(usize, C64)>, rows: &mut Vec<Vec<(usize, C64)>>| {
        // merge duplicates for cleanliness
        let mut r = row;
        r.sort_by_key(|e| e.0);
        let mut merged: Vec<(usize, C64)> = Vec::with_capacity(r.len());
        for (c, v) in r {
            if let Some(last) = merged.last_mut() {
                if last.0 == c {
                    last.1 += v;
                    continue;
                }
            }
            merged.push((c, v));
        }
        rows.push(merged);
    };

    // radial derivative stencils acting on a per-level quantity
    let dy1_stencil = |i: usize| -> Vec<(usize, f64)> {
        if i == 0 {
            vec![(0, -1.5 / d1), (1, 2.0 / d1), (2, -0.5 / d1)]
        } else if i == n1 {
            vec![(n1, 1.5 / d1), (n1 - 1, -2.0 / d1), (n1 - 2, 0.5 / d1)]
        } else {
            vec![(i - 1, -0.5 / d1), (i + 1, 0.5 / d1)]
        }
    };
    // disk radial derivative of ring values with parity/one-sided closure,
    // returning (ring, weight) pairs
    let da_stencil = |j: usize, parity: f64| -> Vec<(usize, f64)> {
        if j == na - 1 {
            vec![
                (na - 1, 1.5 / da),
                (na - 2, -2.0 / da),
                (na - 3, 0.5 / da),
            ]
        } else if j == 0 {
            // ghost at -a_0 reflects ring 0 with the parity sign
            vec![(0, -parity * 0.5 / da), (1, 0.5 / da)]
        } else {
            vec![(j - 1, -0.5 / da), (j + 1, 0.5 / da)]
        }
    };

    for i in 0..=n1 {
        let y1 = grid.y1(i);
        for j in 0..na {
            let a = grid.a(j);
            let w = 1.0 + a * a;
            let tfac = w / (2.0 * y1);

            // divergence row
            let mut row: Vec<(usize, C64)> = Vec::new();
            for (ii, wgt) in dy1_stencil(i) {
                if let Some(c) = idx_w1(ii, j) {
                    row.push((c, C64::new(wgt, 0.0)));
                }
            }
            if let Some(c) = idx_w1(i, j) {
                row.push((c, C64::new(2.0 / y1, 0.0)));
            }
            for (jj, wgt) in da_stencil(j, vect) {
                row.push((idx_wa(i, jj), C64::new(tfac * wgt, 0.0)));
            }
            row.push((idx_wa(i, j), C64::new(tfac / a - a / y1, 0.0)));
            row.push((idx_wt(i, j), C64::new(0.0, tfac * m1t / a)));
            push(row, &mut rows);

            // curl-1 row
            let mut row: Vec<(usize, C64)> = Vec::new();
            for (jj, wgt) in da_stencil(j, vect) {
                row.push((idx_wt(i, jj), C64::new(tfac * wgt, 0.0)));
            }
            row.push((idx_wt(i, j), C64::new(tfac / a - a / y1, 0.0)));
            row.push((idx_wa(i, j), C64::new(0.0, -tfac * m1t / a)));
            push(row, &mut rows);

            // curl-tau row: (w/2y1) da W1 - d/dy1 Wa - Wa/y1
            let mut row: Vec<(usize, C64)> = Vec::new();
            for (jj, wgt) in da_stencil(j, scal) {
                if let Some(c) = idx_w1(i, jj) {
                    row.push((c, C64::new(tfac * wgt, 0.0)));
                }
            }
            for (ii, wgt) in dy1_stencil(i) {
                row.push((idx_wa(ii, j), C64::new(-wgt, 0.0)));
            }
            row.push((idx_wa(i, j), C64::new(-1.0 / y1, 0.0)));
            push(row, &mut rows);

            // curl-a row: (w m1t /(2 y1 a)) i W1 - d/dy1 Wt - Wt/y1
            let mut row: Vec<(usize, C64)> = Vec::new();
            if let Some(c) = idx_w1(i, j) {
                row.push((c, C64::new(0.0, tfac * m1t / a)));
            }
            for (ii, wgt) in dy1_stencil(i) {
                row.push((idx_wt(ii, j), C64::new(-wgt, 0.0)));
            }
            row.push((idx_wt(i, j), C64::new(-1.0 / y1, 0.0)));
            push(row, &mut rows);
        }
    }

    // wall condition Wa = 0: strong rows (weighted like the others; the
    // least-squares system is consistent with them)
    for i in 0..=n1 {
        push(
            vec![(idx_wa(i, na - 1), C64::new(1.5 / da, 0.0)),
                 (idx_wa(i, na - 2), C64::new(-0.5 / da, 0.0))],
            &mut rows,
        );
    }

    // radial fourth-difference smoothing seminorm: the centered first-order
    // rows control odd-even radial modes only weakly; this penalty removes
    // them at an O(h^3) consistency cost, far below the scheme order
    let wp = 0.1 / d1;
    let idx_of = |comp: usize, i: usize, j: usize| -> Option<usize> {
        match comp {
            0 => idx_w1(i, j),
            1 => Some(idx_wa(i, j)),
            _ => Some(idx_wt(i, j)),
        }
    };
    let stencil4 = [1.0, -4.0, 6.0, -4.0, 1.0];
    for comp in 0..3 {
        for j in 0..na {
            for i0 in 0..=n1.saturating_sub(4) {
                let mut row: Vec<(usize, C64)> = Vec::new();
                for (q, wq) in stencil4.iter().enumerate() {
                    if let Some(c) = idx_of(comp, i0 + q, j) {
                        row.push((c, C64::new(wp * wq, 0.0)));
                    }
                }
                if !row.is_empty() {
                    push(row, &mut rows);
                }
            }
        }
    }

    // normal equations in banded storage
    let mut bw = 0usize;
    for r in &rows {
        if r.len() > 1 {
            bw = bw.max(r.last().unwrap().0 - r[0].0);
        }
    }
    let mut band = vec![vec![ZERO; n_unknowns]; bw + 1];
    for r in &rows {
        for (p, &(cp, vp)) in r.iter().enumerate() {
            for &(cq, vq) in &r[p..] {
                let d = cq - cp;
                band[d][cp] += vp.conj() * vq;
            }
        }
    }
    // tiny Tikhonov floor keeps the Cholesky robust against exact rank
    // deficiencies that the boundary rows already exclude analytically
    for j in 0..n_unknowns {
        let floor = 1e-13 * band[0][j].re.max(1.0);
        band[0][j] += C64::new(floor, 0.0);
    }
    let chol = BandedCholesky::factor(n_unknowns, bw, band)?;
    Ok(DivCurlMode { offsets, n_unknowns, rows, chol })
}

/// Diagnostics of the divergence-curl solve.
#[derive(Debug, Clone, Copy)]
pub struct DivCurlDiag {
    /// shell divergence of the input curl data
    pub div_data: f64,
    /// worst least-squares equation residual
    pub lsq_residual: f64,
}

/// Solve the first-order system: divergence free (or prescribed), curl
/// prescribed, vanishing radial component at both spheres, vanishing normal
/// component at the wall. `div_rhs` is used by manufactured-solution tests.
pub fn solve_divcurl(
    ctx: &EllipticCtx,
    gdot: &[ShellField; 3],
    div_rhs: Option<&ShellField>,
    div_tol: f64,
) -> Result<([ShellField; 3], DivCurlDiag)> {
    let grid = &ctx.grid;
    let div_data = ops::shell_l2(&ops::divergence(&gdot[0], &gdot[1], &gdot[2])?);
    if div_rhs.is_none() && div_data > div_tol {
        return Err(Error::Consistency { div: div_data, tol: div_tol });
    }
    let (ga, gt) = ops::to_polar_components(&gdot[1], &gdot[2]);
    let m_g1 = shell_to_modes(&gdot[0], &ctx.fft);
    let m_ga = shell_to_modes(&ga, &ctx.fft);
    let m_gt = shell_to_modes(&gt, &ctx.fft);
    let m_div = div_rhs.map(|f| shell_to_modes(f, &ctx.fft));

    let half = grid.ntau / 2;
    let n1 = grid.n1;
    let na = grid.na;
    let mut w1m = vec![vec![ZERO; (n1 + 1) * na]; half + 1];
    let mut wam = vec![vec![ZERO; (n1 + 1) * na]; half + 1];
    let mut wtm = vec![vec![ZERO; (n1 + 1) * na]; half + 1];
    let mut lsq_residual = 0.0f64;

    for m in 0..=half {
        let dc = &ctx.divcurl[m];
        // right-hand side per row, ordered as assembled
        let mut rhs = Vec::with_capacity(dc.rows.len());
        for i in 0..=n1 {
            for j in 0..na {
                let q = i * na + j;
                let dv = m_div.as_ref().map(|mm| mm[m][q]).unwrap_or(ZERO);
                rhs.push(dv);
                rhs.push(m_g1[m][q]);
                rhs.push(-m_gt[m][q]);
                rhs.push(m_ga[m][q]);
            }
        }
        // wall rows and smoothing rows carry zero data
        while rhs.len() < dc.rows.len() {
            rhs.push(ZERO);
        }
        // normal equations right side
        let mut b = vec![ZERO; dc.n_unknowns];
        for (r, row) in dc.rows.iter().enumerate() {
            let f = rhs[r];
            if f != ZERO {
                for &(c, v) in row {
                    b[c] += v.conj() * f;
                }
            }
        }
        dc.chol.solve_in_place(&mut b);
        // residual
        for (r, row) in dc.rows.iter().enumerate() {
            let mut acc = -rhs[r];
            for &(c, v) in row {
                acc += v * b[c];
            }
            lsq_residual = lsq_residual.max(acc.norm());
        }
        // scatter into mode fields
        for i in 0..=n1 {
            let w1_here = !(i == 0 || i == n1);
            for j in 0..na {
                let base = dc.offsets[i];
                if w1_here {
                    w1m[m][i * na + j] = b[base + j];
                    wam[m][i * na + j] = b[base + na + j];
                    wtm[m][i * na + j] = b[base + 2 * na + j];
                } else {
                    wam[m][i * na + j] = b[base + j];
                    wtm[m][i * na + j] = b[base + na + j];
                }
            }
        }
    }
    let w1 = modes_to_shell(&w1m, grid, &ctx.fft);
    let wa = modes_to_shell(&wam, grid, &ctx.fft);
    let wt = modes_to_shell(&wtm, grid, &ctx.fft);
    // polar -> Cartesian components
    let mut w2 = ShellField::zeros(grid);
    let mut w3 = ShellField::zeros(grid);
    for i in 0..=n1 {
        for j in 0..na {
            for k in 0..grid.ntau {
                let (v2, v3) = crate::coords::from_polar_pair(
                    wa.data[[i, j, k]],
                    wt.data[[i, j, k]],
                    grid.tau(k),
                );
                w2.data[[i, j, k]] = v2;
                w3.data[[i, j, k]] = v3;
            }
        }
    }
    Ok(([w1, w2, w3], DivCurlDiag { div_data, lsq_residual }))
}

// ---------------------------------------------------------------------------
// disk Poisson-Neumann problem
// ---------------------------------------------------------------------------

/// Flux Laplacian on the disk with wall Neumann; the axisymmetric mode is
/// pinned by a zero-mean Lagrange border.
fn build_ms_mode(grid: &GridSpec, m: usize) -> Result<DenseLu> {
    let na = grid.na;
    let rows = disk_rows(grid, m, WallBc::Neumann);
    if m == 0 {
        let mut a = CMat::zeros(na + 1, na + 1);
        for j in 0..na {
            let (lo, di, hi) = rows[j];
            if j > 0 {
                a[(j, j - 1)] = C64::new(lo, 0.0);
            }
            a[(j, j)] = C64::new(di, 0.0);
            if j + 1 < na {
                a[(j, j + 1)] = C64::new(hi, 0.0);
            }
            a[(j, na)] = C64::new(1.0, 0.0); // Lagrange multiplier column
            a[(na, j)] = C64::new(grid.a(j) * grid.da(), 0.0); // mean row
        }
        DenseLu::factor(a)
    } else {
        let mut a = CMat::zeros(na, na);
        for j in 0..na {
            let (lo, di, hi) = rows[j];
            if j > 0 {
                a[(j, j - 1)] = C64::new(lo, 0.0);
            }
            a[(j, j)] = C64::new(di, 0.0);
            if j + 1 < na {
                a[(j, j + 1)] = C64::new(hi, 0.0);
            }
        }
        DenseLu::factor(a)
    }
}

/// Solve the disk Poisson problem with wall Neumann data zero and zero mean.
/// The source mean must vanish up to `tol_solv` (scaled by the source size);
/// the residual mean is reported and projected out.
pub fn solve_ms(
    ctx: &EllipticCtx,
    rhs: &DiskField,
    tol_solv: f64,
) -> Result<(DiskField, f64)> {
    let grid = &ctx.grid;
    let mean = ops::disk_integral(rhs);
    let scale = rhs.sup().max(1e-300);
    if mean.abs() > tol_solv * scale.max(1.0) {
        return Err(Error::Solvability { mean, tol: tol_solv * scale.max(1.0) });
    }
    let modes = disk_to_modes(rhs, &ctx.fft);
    let half = grid.ntau / 2;
    let na = grid.na;
    let mut sol = vec![vec![ZERO; na]; half + 1];
    for m in 0..=half {
        if m == 0 {
            let mut f: Vec<C64> = modes[0].clone();
            f.push(ZERO); // zero-mean constraint value
            ctx.ms[0].solve_in_place(&mut f);
            sol[0] = f[..na].to_vec();
        } else {
            let mut f = modes[m].clone();
            ctx.ms[m].solve_in_place(&mut f);
            sol[m] = f;
        }
    }
    Ok((modes_to_disk(&sol, grid, &ctx.fft), mean))
}

// ---------------------------------------------------------------------------
// the nonlocal potential problem
// ---------------------------------------------------------------------------

fn build_potential_mode(grid: &GridSpec, c: &CoeffSet, m: usize) -> Result<BlockTriSolver> {
    let n1 = grid.n1;
    let na = grid.na;
    let d1 = grid.d1();
    let rows = disk_rows(grid, m, WallBc::Neumann);
    let b4 = c.b4;
    let mut lower = Vec::with_capacity(n1 + 1);
    let mut diag = Vec::with_capacity(n1 + 1);
    let mut upper = Vec::with_capacity(n1 + 1);
    for i in 0..=n1 {
        let y1 = grid.y1(i);
        let dd1 = c.d1(y1);
        let dd2 = 2.0 / y1 + c.d2(y1);
        let mut dm = CMat::zeros(na, na);
        let mut lm = CMat::zeros(na, na);
        let mut um = CMat::zeros(na, na);
        for j in 0..na {
            let a = grid.a(j);
            let s = (1.0 + a * a) * (1.0 + a * a) / (4.0 * y1 * y1);
            let (lo, di, hi) = rows[j];
            if j > 0 {
                dm[(j, j - 1)] += C64::new(s * lo, 0.0);
            }
            dm[(j, j)] += C64::new(s * di, 0.0);
            if j + 1 < na {
                dm[(j, j + 1)] += C64::new(s * hi, 0.0);
            }
            if i == 0 {
                // oblique ghost: f_{-1} = f_1 - 2 d1 (b4 f_0 + m_s)
                dm[(j, j)] += C64::new(
                    -2.0 * dd1 / (d1 * d1) - 2.0 * dd1 * b4 / d1 + dd2 * b4,
                    0.0,
                );
                um[(j, j)] += C64::new(2.0 * dd1 / (d1 * d1), 0.0);
            } else if i == n1 {
                dm[(j, j)] += C64::new(-2.0 * dd1 / (d1 * d1), 0.0);
                lm[(j, j)] += C64::new(2.0 * dd1 / (d1 * d1), 0.0);
            } else {
                dm[(j, j)] += C64::new(-2.0 * dd1 / (d1 * d1), 0.0);
                lm[(j, j)] += C64::new(dd1 / (d1 * d1) - dd2 / (2.0 * d1), 0.0);
                um[(j, j)] += C64::new(dd1 / (d1 * d1) + dd2 / (2.0 * d1), 0.0);
            }
        }
        lower.push(lm);
        diag.push(dm);
        upper.push(um);
    }
    let coeff: Vec<f64> = (0..=n1).map(|i| -c.b0 * c.b1 * c.d4(grid.y1(i))).collect();
    BlockTriSolver::factor(lower, diag, upper)?.with_block0_column(&coeff)
}

/// Potential solve output: the field, its shock-face trace and normal
/// derivative (exact with respect to the oblique condition), and the
/// per-mode matrix residual.
pub struct PotentialSolution {
    pub phi: ShellField,
    pub phi_rs: DiskField,
    pub dphi_rs: DiskField,
    /// the exit Neumann datum the solve imposed
    pub m2: DiskField,
    pub residual: f64,
}

pub fn solve_potential(
    ctx: &EllipticCtx,
    g5: &ShellField,
    ms: &DiskField,
    m2: &DiskField,
) -> Result<PotentialSolution> {
    let grid = &ctx.grid;
    let c = &ctx.coeffs;
    let d1 = grid.d1();
    let n1 = grid.n1;
    let na = grid.na;
    let y0 = grid.y1(0);
    let yn = grid.y1(n1);
    let m_g5 = shell_to_modes(g5, &ctx.fft);
    let m_ms = disk_to_modes(ms, &ctx.fft);
    let m_m2 = disk_to_modes(m2, &ctx.fft);
    let half = grid.ntau / 2;
    let mut sol = vec![vec![ZERO; (n1 + 1) * na]; half + 1];
    let dd1_0 = c.d1(y0);
    let dd2_0 = 2.0 / y0 + c.d2(y0);
    let dd1_n = c.d1(yn);
    let dd2_n = 2.0 / yn + c.d2(yn);
    for m in 0..=half {
        let mut f = m_g5[m].clone();
        // move the boundary ghosts to the right side
        for j in 0..na {
            // shock face: ghost contributes -2 d1(y0) dphi/dy ... through the
            // second difference and the first derivative equals b4 f + ms
            f[j] += (2.0 * dd1_0 / d1 - dd2_0) * m_ms[m][j];
            f[n1 * na + j] -= (2.0 * dd1_n / d1 + dd2_n) * m_m2[m][j];
        }
        ctx.potential[m].solve(&mut f);
        sol[m] = f;
    }
    let phi = modes_to_shell(&sol, grid, &ctx.fft);
    let phi_rs = phi.level(0);
    // the oblique condition holds exactly for the eliminated ghost
    let mut dphi_rs = DiskField::zeros(grid);
    for j in 0..na {
        for k in 0..grid.ntau {
            dphi_rs.data[[j, k]] = c.b4 * phi_rs.data[[j, k]] + ms.data[[j, k]];
        }
    }
    // residual of the discrete equations (re-applied per mode)
    let residual = potential_residual(ctx, &sol, &m_g5, &m_ms, &m_m2);
    if residual > ctx.tol_ell {
        return Err(Error::Solver(format!(
            "potential solve residual {residual:.3e} exceeds {:.3e}",
            ctx.tol_ell
        )));
    }
    Ok(PotentialSolution { phi, phi_rs, dphi_rs, m2: m2.clone(), residual })
}

/// Re-apply the per-mode potential operator and compare with the data.
fn potential_residual(
    ctx: &EllipticCtx,
    sol: &[Vec<C64>],
    g5: &[Vec<C64>],
    ms: &[Vec<C64>],
    m2: &[Vec<C64>],
) -> f64 {
    let grid = &ctx.grid;
    let c = &ctx.coeffs;
    let n1 = grid.n1;
    let na = grid.na;
    let d1 = grid.d1();
    let half = grid.ntau / 2;
    let mut worst = 0.0f64;
    let mut scale = 0.0f64;
    for m in 0..=half {
        let rows = disk_rows(grid, m, WallBc::Neumann);
        let x = &sol[m];
        for i in 0..=n1 {
            let y1 = grid.y1(i);
            let dd1 = c.d1(y1);
            let dd2 = 2.0 / y1 + c.d2(y1);
            for j in 0..na {
                let a = grid.a(j);
                let s = (1.0 + a * a) * (1.0 + a * a) / (4.0 * y1 * y1);
                let (lo, di, hi) = rows[j];
                let mut acc = ZERO;
                if j > 0 {
                    acc += C64::new(s * lo, 0.0) * x[i * na + j - 1];
                }
                acc += C64::new(s * di, 0.0) * x[i * na + j];
                if j + 1 < na {
                    acc += C64::new(s * hi, 0.0) * x[i * na + j + 1];
                }
                // radial part with ghost eliminations
                let xc = x[i * na + j];
                if i == 0 {
                    let ghost = x[na + j] - C64::new(2.0 * d1 * c.b4, 0.0) * xc
                        - C64::new(2.0 * d1, 0.0) * ms[m][j];
                    let dpp = (x[na + j] - C64::new(2.0, 0.0) * xc + ghost) / (d1 * d1);
                    let dp = C64::new(c.b4, 0.0) * xc + ms[m][j];
                    acc += C64::new(dd1, 0.0) * dpp + C64::new(dd2, 0.0) * dp;
                } else if i == n1 {
                    let ghost = x[(n1 - 1) * na + j] + C64::new(2.0 * d1, 0.0) * m2[m][j];
                    let dpp =
                        (ghost - C64::new(2.0, 0.0) * xc + x[(n1 - 1) * na + j]) / (d1 * d1);
                    acc += C64::new(dd1, 0.0) * dpp + C64::new(dd2, 0.0) * m2[m][j];
                } else {
                    let dpp = (x[(i + 1) * na + j] - C64::new(2.0, 0.0) * xc
                        + x[(i - 1) * na + j])
                        / (d1 * d1);
                    let dp = (x[(i + 1) * na + j] - x[(i - 1) * na + j]) / (2.0 * d1);
                    acc += C64::new(dd1, 0.0) * dpp + C64::new(dd2, 0.0) * dp;
                }
                // nonlocal trace term
                acc -= C64::new(c.b0 * c.b1 * c.d4(y1), 0.0) * x[j];
                let r = (acc - g5[m][i * na + j]).norm();
                worst = worst.max(r);
                scale = scale.max(x[i * na + j].norm());
            }
        }
    }
    worst / scale.max(1.0)
}

/// Velocity reconstruction from the solenoidal part and the potential.
pub fn assemble_velocity(
    ctx: &EllipticCtx,
    wdot: &[ShellField; 3],
    pot: &PotentialSolution,
) -> [ShellField; 3] {
    let grid = &ctx.grid;
    let c = &ctx.coeffs;
    let n1 = grid.n1;
    let na = grid.na;
    let d1 = grid.d1();
    let mut w1 = wdot[0].clone();
    let mut w2 = wdot[1].clone();
    let mut w3 = wdot[2].clone();
    // radial derivative of phi: boundary values from the imposed conditions,
    // centered inside
    for i in 0..=n1 {
        let y1 = grid.y1(i);
        let d3 = c.d3(y1);
        for j in 0..na {
            for k in 0..grid.ntau {
                let dphi = if i == 0 {
                    pot.dphi_rs.data[[j, k]]
                } else if i == n1 {
                    pot.m2.data[[j, k]]
                } else {
                    (pot.phi.data[[i + 1, j, k]] - pot.phi.data[[i - 1, j, k]]) / (2.0 * d1)
                };
                w1.data[[i, j, k]] +=
                    dphi - d3 / c.b3 * pot.dphi_rs.data[[j, k]];
                let (y2, y3) = grid.disk_point(j, k);
                let wfac = (1.0 + y2 * y2 + y3 * y3) / (2.0 * y1);
                w2.data[[i, j, k]] += wfac * ops::dy2_at(&pot.phi, i, j, k);
                w3.data[[i, j, k]] += wfac * ops::dy3_at(&pot.phi, i, j, k);
            }
        }
    }
    [w1, w2, w3]
}

// ---------------------------------------------------------------------------
// disk eigenproblem
// ---------------------------------------------------------------------------

/// Eigenvalues and eigenvectors of the weighted disk operator per azimuthal
/// mode: `-(flux disk Laplacian) Y = lambda Y / (1+a^2)^2` with wall
/// Neumann. Returns for each mode the ascending eigenvalues with the
/// eigenvectors (columns, weighted-orthonormal).
pub struct DiskEigen {
    pub mode: usize,
    pub values: Vec<f64>,
    /// row-major (na x na), eigenvectors in columns, orthonormal in the
    /// weighted inner product including the azimuthal factor
    pub vectors: Vec<f64>,
    /// the weights `a da / (1+a^2)^2` of the radial inner product
    pub weights: Vec<f64>,
}

pub fn disk_eigenproblem(grid: &GridSpec, m_max: usize) -> Vec<DiskEigen> {
    let na = grid.na;
    let da = grid.da();
    let mut out = Vec::new();
    for m in 0..=m_max {
        let rows = disk_rows(grid, m, WallBc::Neumann);
        // symmetrize with the area weights a_j da, then reduce the
        // generalized problem with mass a_j da / (1+a^2)^2 to standard form
        let mut a = vec![0.0; na * na];
        let mut mass = vec![0.0; na];
        for j in 0..na {
            let w = grid.a(j) * da;
            let (lo, di, hi) = rows[j];
            if j > 0 {
                a[j * na + j - 1] = -w * lo;
            }
            a[j * na + j] = -w * di;
            if j + 1 < na {
                a[j * na + j + 1] = -w * hi;
            }
            let q = 1.0 + grid.a(j) * grid.a(j);
            mass[j] = w / (q * q);
        }
        // symmetric scaled matrix B = M^{-1/2} A M^{-1/2}
        let mut b = vec![0.0; na * na];
        for i in 0..na {
            for j in 0..na {
                b[i * na + j] = a[i * na + j] / (mass[i].sqrt() * mass[j].sqrt());
            }
        }
        // enforce exact symmetry against rounding
        for i in 0..na {
            for j in 0..i {
                let s = 0.5 * (b[i * na + j] + b[j * na + i]);
                b[i * na + j] = s;
                b[j * na + i] = s;
            }
        }
        let (vals, vecs_std) = crate::linalg::jacobi_eigh(&b, na);
        // transform back: Y = M^{-1/2} y, already orthonormal in the mass
        // inner product
        let mut vecs = vec![0.0; na * na];
        for r in 0..na {
            for cidx in 0..na {
                vecs[r * na + cidx] = vecs_std[r * na + cidx] / mass[r].sqrt();
            }
        }
        out.push(DiskEigen { mode: m, values: vals, vectors: vecs, weights: mass });
    }
    out
}

//! Perturbed supersonic flow on the whole shell.
//!
//! The five-field state is marched in the radius by a two-stage explicit
//! midpoint scheme applied to the deviation from the radially symmetric
//! background. The right-hand side of the deviation march is the difference
//! of the full Euler right-hand side and the right-hand side evaluated at
//! the background state through the same code path, so radially symmetric
//! data is propagated exactly and the zero perturbation stays zero to
//! rounding.

use crate::background::RadialBackground;
use crate::coords::ops::{disk_wall_da, disk_wall_daa, disk_wall_value};
use crate::error::{Error, Result};
use crate::field::DiskField;
use crate::grid::GridSpec;

/// Named analytic inflow profiles. Every shape carries the wall factor that
/// makes the inlet compatibility conditions hold identically: scalar
/// perturbations use `(1-a^2)^2` envelopes, the tangential velocity comes
/// from a stream function with a `(1-a^2)^3` envelope.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InflowSpec {
    /// radial velocity, axisymmetric part `(1-a^2)^2`
    pub u1_m0: f64,
    /// radial velocity, `a (1-a^2)^2 cos tau`
    pub u1_m1: f64,
    /// pressure, axisymmetric part
    pub p_m0: f64,
    /// pressure, `a^2 (1-a^2)^2 cos 2tau`
    pub p_m2: f64,
    /// entropy coefficient, `a (1-a^2)^2 sin tau`
    pub k_m1: f64,
    /// stream function `(1-a^2)^3` (pure swirl)
    pub swirl_m0: f64,
    /// stream function `a (1-a^2)^3 cos tau`
    pub swirl_m1: f64,
}

impl Default for InflowSpec {
    fn default() -> Self {
        // amplitudes sized so the discrete strong norm of the response sits
        // inside the solution-class gate through a factor-four sweep of the
        // perturbation size
        Self {
            u1_m0: 0.018,
            u1_m1: 0.023,
            p_m0: 0.014,
            p_m2: 0.018,
            k_m1: 0.014,
            swirl_m0: 0.009,
            swirl_m1: 0.018,
        }
    }
}

/// Unit-amplitude inflow perturbation of the five fields `(U1,U2,U3,P,K)`.
#[derive(Debug, Clone)]
pub struct InflowPerturbation {
    pub grid: GridSpec,
    pub fields: [DiskField; 5],
}

impl InflowPerturbation {
    pub fn from_spec(spec: &InflowSpec, grid: &GridSpec) -> Self {
        let env2 = |a: f64| (1.0 - a * a).powi(2);
        let u1 = DiskField::from_fn(grid, |a, t| {
            spec.u1_m0 * env2(a) + spec.u1_m1 * a * env2(a) * t.cos()
        });
        let p = DiskField::from_fn(grid, |a, t| {
            spec.p_m0 * env2(a) + spec.p_m2 * a * a * env2(a) * (2.0 * t).cos()
        });
        let k = DiskField::from_fn(grid, |a, t| spec.k_m1 * a * env2(a) * t.sin());
        // (U2, U3) = (-d/dy3, d/dy2) of the stream function
        // psi = (1-a^2)^3 (c0 + c1 a cos tau), differentiated in closed form:
        // U_a = -(1/a) d/dtau psi, U_tau = d/da psi
        let mut u2 = DiskField::zeros(grid);
        let mut u3 = DiskField::zeros(grid);
        for j in 0..grid.na {
            for kt in 0..grid.ntau {
                let a = grid.a(j);
                let t = grid.tau(kt);
                let e = 1.0 - a * a;
                let ua = spec.swirl_m1 * e.powi(3) * t.sin();
                let ut = -6.0 * a * e.powi(2) * spec.swirl_m0
                    + spec.swirl_m1 * t.cos() * (e.powi(3) - 6.0 * a * a * e.powi(2));
                let (v2, v3) = crate::coords::from_polar_pair(ua, ut, t);
                u2.data[[j, kt]] = v2;
                u3.data[[j, kt]] = v3;
            }
        }
        Self { grid: *grid, fields: [u1, u2, u3, p, k] }
    }

    pub fn zero(grid: &GridSpec) -> Self {
        Self {
            grid: *grid,
            fields: std::array::from_fn(|_| DiskField::zeros(grid)),
        }
    }
}

/// Maximal wall residuals of the six inlet compatibility conditions, in the
/// order: d/da of U1, U_tau, P, K at the wall, then U_a, then
/// d2/da2 U_a + d/da U_a.
#[derive(Debug, Clone, Copy)]
pub struct InflowReport {
    pub residuals: [f64; 6],
}

impl InflowReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.residuals.iter().all(|r| *r <= tol)
    }
}

pub fn validate_inflow(p: &InflowPerturbation) -> InflowReport {
    let g = &p.grid;
    let [u1, u2, u3, pr, k] = &p.fields;
    let (ua, ut) = crate::coords::ops::disk_to_polar(u2, u3);
    let mut res = [0.0f64; 6];
    for kt in 0..g.ntau {
        res[0] = res[0].max(disk_wall_da(u1, kt).abs());
        res[1] = res[1].max(disk_wall_da(&ut, kt).abs());
        res[2] = res[2].max(disk_wall_da(pr, kt).abs());
        res[3] = res[3].max(disk_wall_da(k, kt).abs());
        res[4] = res[4].max(disk_wall_value(&ua, kt).abs());
        res[5] = res[5].max((disk_wall_daa(&ua, kt) + disk_wall_da(&ua, kt)).abs());
    }
    InflowReport { residuals: res }
}

/// Marched supersonic field: deviations from the background at uniform
/// radial stations, plus the background itself for exact reconstruction.
#[derive(Debug, Clone)]
pub struct SupersonicField {
    pub bg: RadialBackground,
    pub grid: GridSpec,
    pub epsilon: f64,
    pub z_lo: f64,
    pub dz: f64,
    /// per-station deviations of `(U1, U2, U3, P, K)`
    pub psi: Vec<[DiskField; 5]>,
}

/// Five-field right-hand side `d/dz1 (U1,U2,U3,P,K)` of the radial march,
/// as the deviation from the background right-hand side evaluated through
/// the same code path.
fn march_rhs(
    bg: &RadialBackground,
    grid: &GridSpec,
    z1: f64,
    psi: &[DiskField; 5],
    margin: f64,
) -> Result<[DiskField; 5]> {
    let g = bg.gas.gamma;
    let (ub, _, pb) = bg.minus(z1);
    let kb = bg.k_minus;

    // full fields
    let mk = |shape: &DiskField, base: f64| {
        let mut f = shape.clone();
        for v in f.data.iter_mut() {
            *v += base;
        }
        f
    };
    let u1 = mk(&psi[0], ub);
    let u2 = psi[1].clone();
    let u3 = psi[2].clone();
    let p = mk(&psi[3], pb);
    let k = mk(&psi[4], kb);

    // background radial derivative through the same 2x2 solve
    let rho_b = (pb / kb).powf(1.0 / g);
    let c2_b = g * pb / rho_b;
    let det_b = (ub * ub - c2_b) / c2_b;
    let rhs2_b = -2.0 * rho_b * ub / z1;
    let du_b = (-rhs2_b / rho_b) / det_b; // tangential terms vanish
    let dp_b = (ub * rhs2_b) / det_b;

    // disk derivatives of the full fields and of the momentum densities
    let rho = DiskField {
        grid: *grid,
        data: ndarray::Zip::from(&p.data)
            .and(&k.data)
            .map_collect(|&pp, &kk| (pp / kk).powf(1.0 / g)),
    };
    let m2 = DiskField { grid: *grid, data: &rho.data * &u2.data };
    let m3 = DiskField { grid: *grid, data: &rho.data * &u3.data };
    // wall ghosts: scalars and the azimuthal velocity extend evenly across
    // a = 1, the wall-normal velocity oddly (the discrete counterpart of the
    // hemisphere reflection), giving centered stencils at the wall row
    let gst = wall_ghosts(grid, [&u1, &u2, &u3, &p, &k, &m2, &m3]);
    let d2 = [
        disk_dy2_g(&u1, &gst[0]),
        disk_dy2_g(&u2, &gst[1]),
        disk_dy2_g(&u3, &gst[2]),
        disk_dy2_g(&p, &gst[3]),
        disk_dy2_g(&k, &gst[4]),
        disk_dy2_g(&m2, &gst[5]),
    ];
    let d3 = [
        disk_dy3_g(&u1, &gst[0]),
        disk_dy3_g(&u2, &gst[1]),
        disk_dy3_g(&u3, &gst[2]),
        disk_dy3_g(&p, &gst[3]),
        disk_dy3_g(&k, &gst[4]),
        disk_dy3_g(&m3, &gst[6]),
    ];

    let mut out: [DiskField; 5] = std::array::from_fn(|_| DiskField::zeros(grid));
    for j in 0..grid.na {
        for kt in 0..grid.ntau {
            let (y2, y3) = grid.disk_point(j, kt);
            let w = 1.0 + y2 * y2 + y3 * y3;
            let tfac = w / (2.0 * z1);
            let uu1 = u1.data[[j, kt]];
            let uu2 = u2.data[[j, kt]];
            let uu3 = u3.data[[j, kt]];
            let pp = p.data[[j, kt]];
            let kk = k.data[[j, kt]];
            let rr = rho.data[[j, kt]];
            let c2 = g * pp / rr;
            if uu1 <= 0.0 || uu1 * uu1 <= c2 * (1.0 + margin) * (1.0 + margin) {
                return Err(Error::Sonic { z1, ma: uu1 / c2.sqrt() });
            }
            let adv = |i: usize| tfac * (uu2 * d2[i].data[[j, kt]] + uu3 * d3[i].data[[j, kt]]);
            let cross = y3 * uu2 - y2 * uu3;

            // tangential momenta and entropy transport
            let du2 = (-adv(1) - tfac / rr * d2[3].data[[j, kt]] - uu1 * uu2 / z1
                + uu3 * cross / z1)
                / uu1;
            let du3 = (-adv(2) - tfac / rr * d3[3].data[[j, kt]] - uu1 * uu3 / z1
                - uu2 * cross / z1)
                / uu1;
            let dk = -adv(4) / uu1;

            // radial momentum and continuity for (dU1, dP)
            let rhs1 = -adv(0) + (uu2 * uu2 + uu3 * uu3) / z1;
            let rho_k = -rr / (g * kk); // d rho / dK at fixed P
            let div_m = tfac * (d2[5].data[[j, kt]] + d3[5].data[[j, kt]]);
            let rhs2 = -uu1 * rho_k * dk - div_m - 2.0 * rr * uu1 / z1
                + rr * (y2 * uu2 + y3 * uu3) / z1;
            let det = (uu1 * uu1 - c2) / c2;
            let du1 = (rhs1 * uu1 / c2 - rhs2 / rr) / det;
            let dp = (uu1 * rhs2 - rr * rhs1) / det;

            out[0].data[[j, kt]] = du1 - du_b;
            out[1].data[[j, kt]] = du2;
            out[2].data[[j, kt]] = du3;
            out[3].data[[j, kt]] = dp - dp_b;
            out[4].data[[j, kt]] = dk;
        }
    }
    Ok(out)
}



/// One ghost row beyond the wall for the seven marched quantities, built
/// from the even/odd reflection structure of the slip condition: fields
/// with vector character normal to the wall are odd, everything else even.
/// Index order matches the caller: U1, U2, U3, P, K, m2, m3.
fn wall_ghosts(grid: &GridSpec, f: [&DiskField; 7]) -> Vec<Vec<f64>> {
    let n = grid.na - 1;
    let mut out = vec![vec![0.0; grid.ntau]; 7];
    for k in 0..grid.ntau {
        let t = grid.tau(k);
        // even ghosts for the scalars
        for q in [0usize, 3, 4] {
            out[q][k] = f[q].data[[n, k]];
        }
        // velocity: Ua odd, Utau even
        let (ua, ut) = crate::coords::to_polar_pair(f[1].data[[n, k]], f[2].data[[n, k]], t);
        let (g2, g3) = crate::coords::from_polar_pair(-ua, ut, t);
        out[1][k] = g2;
        out[2][k] = g3;
        let (ma, mt) = crate::coords::to_polar_pair(f[5].data[[n, k]], f[6].data[[n, k]], t);
        let (h2, h3) = crate::coords::from_polar_pair(-ma, mt, t);
        out[5][k] = h2;
        out[6][k] = h3;
    }
    out
}

/// Ghost-aware sample: the row just beyond the wall reads the ghost.
#[inline]
fn at_g(f: &DiskField, ghost: &[f64], j: isize, k: isize) -> f64 {
    let g = &f.grid;
    if j == g.na as isize {
        let kk = g.wrap_tau(k);
        ghost[kk]
    } else {
        f.at(j, k)
    }
}

fn disk_da_g(f: &DiskField, ghost: &[f64], j: usize, k: usize) -> f64 {
    let g = &f.grid;
    let (j, k) = (j as isize, k as isize);
    (at_g(f, ghost, j + 1, k) - f.at(j - 1, k)) / (2.0 * g.da())
}

fn disk_dy2_g(f: &DiskField, ghost: &[f64]) -> DiskField {
    let g = f.grid;
    let mut out = DiskField::zeros(&g);
    for j in 0..g.na {
        for k in 0..g.ntau {
            let (s, c) = g.tau(k).sin_cos();
            let da = disk_da_g(f, ghost, j, k);
            let dt = (f.at(j as isize, k as isize + 1) - f.at(j as isize, k as isize - 1))
                / (2.0 * g.dtau());
            out.data[[j, k]] = c * da - s / g.a(j) * dt;
        }
    }
    out
}

fn disk_dy3_g(f: &DiskField, ghost: &[f64]) -> DiskField {
    let g = f.grid;
    let mut out = DiskField::zeros(&g);
    for j in 0..g.na {
        for k in 0..g.ntau {
            let (s, c) = g.tau(k).sin_cos();
            let da = disk_da_g(f, ghost, j, k);
            let dt = (f.at(j as isize, k as isize + 1) - f.at(j as isize, k as isize - 1))
                / (2.0 * g.dtau());
            out.data[[j, k]] = s * da + c / g.a(j) * dt;
        }
    }
    out
}

/// Parity-aware sample for the smoothing stencils: polar-vector components
/// flip sign across the pole (`pole_sign`), and the wall ghosts mirror the
/// interior with the even/odd structure of the slip condition (`wall_sign`).
#[inline]
fn parity_at(f: &DiskField, j: isize, k: isize, pole_sign: f64, wall_sign: f64) -> f64 {
    let g = &f.grid;
    let na = g.na as isize;
    if j >= na {
        wall_sign * f.at(2 * na - 1 - j, k)
    } else if j < 0 {
        pole_sign * f.at(j, k) // DiskField::at already reflects the index
    } else {
        f.at(j, k)
    }
}

/// Undivided fourth-difference smoothing. Central differencing under an
/// explicit midpoint step is only neutrally stable; this standard background
/// dissipation removes grid-scale noise at an O(h^3) cost, below the order
/// of the scheme. Stencils stay centered everywhere thanks to the pole and
/// wall parities.
fn damp_fourth(f: &mut DiskField, sigma: f64, pole_sign: f64, wall_sign: f64) {
    let g = f.grid;
    let src = f.clone();
    for j in 0..g.na {
        for k in 0..g.ntau {
            let (ji, ki) = (j as isize, k as isize);
            let da4 = parity_at(&src, ji - 2, ki, pole_sign, wall_sign)
                - 4.0 * parity_at(&src, ji - 1, ki, pole_sign, wall_sign)
                + 6.0 * src.data[[j, k]]
                - 4.0 * parity_at(&src, ji + 1, ki, pole_sign, wall_sign)
                + parity_at(&src, ji + 2, ki, pole_sign, wall_sign);
            let dt4 = src.at(ji, ki - 2) - 4.0 * src.at(ji, ki - 1) + 6.0 * src.data[[j, k]]
                - 4.0 * src.at(ji, ki + 1)
                + src.at(ji, ki + 2);
            f.data[[j, k]] -= sigma * (da4 + dt4);
        }
    }
}

/// Smooth the five marched deviations, damping the velocity in polar
/// components so the wall parities are the physical ones.
fn damp_state(state: &mut [DiskField; 5], grid: &GridSpec, sigma: f64) {
    damp_fourth(&mut state[0], sigma, 1.0, 1.0);
    damp_fourth(&mut state[3], sigma, 1.0, 1.0);
    damp_fourth(&mut state[4], sigma, 1.0, 1.0);
    let (mut ua, mut ut) = crate::coords::ops::disk_to_polar(&state[1], &state[2]);
    damp_fourth(&mut ua, sigma, -1.0, -1.0);
    damp_fourth(&mut ut, sigma, -1.0, 1.0);
    for j in 0..grid.na {
        for k in 0..grid.ntau {
            let (v2, v3) =
                crate::coords::from_polar_pair(ua.data[[j, k]], ut.data[[j, k]], grid.tau(k));
            state[1].data[[j, k]] = v2;
            state[2].data[[j, k]] = v3;
        }
    }
}

/// Characteristic-cone step bound at radius `z1` for the current state.
fn cfl_bound(bg: &RadialBackground, grid: &GridSpec, z1: f64, psi: &[DiskField; 5]) -> f64 {
    let g = bg.gas.gamma;
    let (ub, _, pb) = bg.minus(z1);
    let kb = bg.k_minus;
    let d_disk = grid.da().min(grid.a(0) * grid.dtau());
    let mut bound = f64::INFINITY;
    for j in 0..grid.na {
        for kt in 0..grid.ntau {
            let a = grid.a(j);
            let w = 1.0 + a * a;
            let u1 = ub + psi[0].data[[j, kt]];
            let p = pb + psi[3].data[[j, kt]];
            let k = kb + psi[4].data[[j, kt]];
            let rho = (p / k).powf(1.0 / g);
            let c = (g * p / rho).sqrt();
            let ut = (psi[1].data[[j, kt]].powi(2) + psi[2].data[[j, kt]].powi(2)).sqrt();
            bound = bound.min(2.0 * z1 * u1 / (w * (ut + c)));
        }
    }
    0.5 * d_disk * bound
}

/// March the perturbed supersonic flow from the inlet to the outer sphere.
pub fn march_supersonic(
    bg: &RadialBackground,
    inflow: &InflowPerturbation,
    epsilon: f64,
    grid: &GridSpec,
    sonic_margin: f64,
) -> Result<SupersonicField> {
    let mut state: [DiskField; 5] = std::array::from_fn(|i| {
        let mut f = inflow.fields[i].clone();
        for v in f.data.iter_mut() {
            *v *= epsilon;
        }
        f
    });
    // station count from the characteristic bound at the inlet, tied to the
    // radial resolution so refinement studies scale consistently
    let span = bg.r2 - bg.r1;
    let bound = cfl_bound(bg, grid, bg.r1, &state);
    let n_min = (span / bound).ceil() as usize + 1;
    let n_sta = n_min.max(2 * grid.n1).max(8);
    let dz = span / n_sta as f64;

    let mut stations = Vec::with_capacity(n_sta + 1);
    stations.push(state.clone());
    let mut z = bg.r1;
    for _ in 0..n_sta {
        let b = cfl_bound(bg, grid, z, &state);
        if dz > b {
            return Err(Error::Cfl { z1: z, dz, bound: b });
        }
        // explicit midpoint
        let k1 = march_rhs(bg, grid, z, &state, sonic_margin)?;
        let half: [DiskField; 5] = std::array::from_fn(|i| {
            let mut f = state[i].clone();
            ndarray::Zip::from(&mut f.data)
                .and(&k1[i].data)
                .for_each(|a, &b| *a += 0.5 * dz * b);
            f
        });
        let k2 = march_rhs(bg, grid, z + 0.5 * dz, &half, sonic_margin)?;
        // dissipation scaled by the step fraction of the characteristic
        // bound, so its cumulative effect is O(h^3) regardless of step count
        let sigma = 0.04 * dz / b;
        for i in 0..5 {
            ndarray::Zip::from(&mut state[i].data)
                .and(&k2[i].data)
                .for_each(|a, &b| *a += dz * b);
        }
        damp_state(&mut state, grid, sigma);
        z += dz;
        stations.push(state.clone());
    }
    Ok(SupersonicField {
        bg: *bg,
        grid: *grid,
        epsilon,
        z_lo: bg.r1,
        dz,
        psi: stations,
    })
}

/// Upstream traces on a disk surface `z1 = xi(y')`: the five fields, density
/// and Bernoulli quantity, plus their radial derivatives.
#[derive(Debug, Clone)]
pub struct UpstreamTrace {
    pub u1: DiskField,
    pub u2: DiskField,
    pub u3: DiskField,
    pub p: DiskField,
    pub k: DiskField,
    pub rho: DiskField,
    pub b: DiskField,
    pub du1: DiskField,
    pub du2: DiskField,
    pub du3: DiskField,
    pub dp: DiskField,
    pub dk: DiskField,
}

impl SupersonicField {
    pub fn n_stations(&self) -> usize {
        self.psi.len() - 1
    }

    fn station_range(&self, z1: f64) -> Result<(usize, [f64; 4], f64)> {
        let z_hi = self.z_lo + self.dz * self.n_stations() as f64;
        if z1 < self.z_lo - 1e-12 || z1 > z_hi + 1e-12 {
            return Err(Error::Range { xi: z1, lo: self.z_lo, hi: z_hi });
        }
        let s = (z1 - self.z_lo) / self.dz;
        let mut base = s.floor() as isize - 1;
        base = base.clamp(0, self.n_stations() as isize - 3);
        let t = s - base as f64;
        let w = [
            -(t - 1.0) * (t - 2.0) * (t - 3.0) / 6.0,
            t * (t - 2.0) * (t - 3.0) / 2.0,
            -t * (t - 1.0) * (t - 3.0) / 2.0,
            t * (t - 1.0) * (t - 2.0) / 6.0,
        ];
        Ok((base as usize, w, t))
    }

    fn dweights(&self, t: f64) -> [f64; 4] {
        let d = [
            -((t - 2.0) * (t - 3.0) + (t - 1.0) * (t - 3.0) + (t - 1.0) * (t - 2.0)) / 6.0,
            ((t - 2.0) * (t - 3.0) + t * (t - 3.0) + t * (t - 2.0)) / 2.0,
            -((t - 1.0) * (t - 3.0) + t * (t - 3.0) + t * (t - 1.0)) / 2.0,
            ((t - 1.0) * (t - 2.0) + t * (t - 1.0) + t * (t - 2.0)) / 6.0,
        ];
        d.map(|v| v / self.dz)
    }

    /// Deviation component `(0..5)` at `(z1, node j, node k)`.
    pub fn psi_at(&self, comp: usize, z1: f64, j: usize, k: usize) -> Result<f64> {
        let (base, w, _) = self.station_range(z1)?;
        Ok((0..4)
            .map(|q| w[q] * self.psi[base + q][comp].data[[j, k]])
            .sum())
    }

    fn dpsi_at(&self, comp: usize, z1: f64, j: usize, k: usize) -> Result<f64> {
        let (base, _, t) = self.station_range(z1)?;
        let dw = self.dweights(t);
        Ok((0..4)
            .map(|q| dw[q] * self.psi[base + q][comp].data[[j, k]])
            .sum())
    }

    /// Full five-field trace with radial derivatives on `z1 = xi(y')`.
    pub fn trace_at_shock(&self, xi: &DiskField) -> Result<UpstreamTrace> {
        let g = &self.grid;
        let gamma = self.bg.gas.gamma;
        let mut t = UpstreamTrace {
            u1: DiskField::zeros(g),
            u2: DiskField::zeros(g),
            u3: DiskField::zeros(g),
            p: DiskField::zeros(g),
            k: DiskField::zeros(g),
            rho: DiskField::zeros(g),
            b: DiskField::zeros(g),
            du1: DiskField::zeros(g),
            du2: DiskField::zeros(g),
            du3: DiskField::zeros(g),
            dp: DiskField::zeros(g),
            dk: DiskField::zeros(g),
        };
        for j in 0..g.na {
            for k in 0..g.ntau {
                let z = xi.data[[j, k]];
                let (ub, _, pb) = self.bg.minus(z);
                let u1 = ub + self.psi_at(0, z, j, k)?;
                let u2 = self.psi_at(1, z, j, k)?;
                let u3 = self.psi_at(2, z, j, k)?;
                let p = pb + self.psi_at(3, z, j, k)?;
                let kk = self.bg.k_minus + self.psi_at(4, z, j, k)?;
                let rho = (p / kk).powf(1.0 / gamma);
                t.u1.data[[j, k]] = u1;
                t.u2.data[[j, k]] = u2;
                t.u3.data[[j, k]] = u3;
                t.p.data[[j, k]] = p;
                t.k.data[[j, k]] = kk;
                t.rho.data[[j, k]] = rho;
                t.b.data[[j, k]] =
                    0.5 * (u1 * u1 + u2 * u2 + u3 * u3) + gamma * p / ((gamma - 1.0) * rho);
                t.du1.data[[j, k]] = self.bg.du_minus(z) + self.dpsi_at(0, z, j, k)?;
                t.du2.data[[j, k]] = self.dpsi_at(1, z, j, k)?;
                t.du3.data[[j, k]] = self.dpsi_at(2, z, j, k)?;
                let (um, rm, _) = self.bg.minus(z);
                t.dp.data[[j, k]] = -rm * um * self.bg.du_minus(z) + self.dpsi_at(3, z, j, k)?;
                t.dk.data[[j, k]] = self.dpsi_at(4, z, j, k)?;
            }
        }
        Ok(t)
    }

    /// Wall residuals of the propagated compatibility conditions at station
    /// `s`, same ordering as the inflow report.
    pub fn wall_residuals(&self, s: usize) -> [f64; 6] {
        let g = &self.grid;
        let [u1, u2, u3, p, k] = &self.psi[s];
        let (ua, ut) = crate::coords::ops::disk_to_polar(u2, u3);
        let mut res = [0.0f64; 6];
        for kt in 0..g.ntau {
            res[0] = res[0].max(disk_wall_da(u1, kt).abs());
            res[1] = res[1].max(disk_wall_da(&ut, kt).abs());
            res[2] = res[2].max(disk_wall_da(p, kt).abs());
            res[3] = res[3].max(disk_wall_da(k, kt).abs());
            res[4] = res[4].max(disk_wall_value(&ua, kt).abs());
            res[5] = res[5].max((disk_wall_daa(&ua, kt) + disk_wall_da(&ua, kt)).abs());
        }
        res
    }

    /// Largest deviation from the background over all stations.
    pub fn deviation_sup(&self) -> f64 {
        self.psi
            .iter()
            .flat_map(|s| s.iter())
            .map(|f| f.sup())
            .fold(0.0, f64::max)
    }
}

//! Pointwise Rankine-Hugoniot algebra on the shock trace: jump
//! determinants, the shock-gradient sources, the linearized-jump remainder
//! terms, the vorticity boundary datum, and the derived boundary sources of
//! the elliptic stage.
//!
//! Everything here follows the exact closed forms; the remainder terms are
//! algebraic identities (not truncations), so the unit tests can verify
//! them against the raw jump conditions at machine precision.

use crate::background::CoeffSet;
use crate::coords::ops;
use crate::error::{Error, Result};
use crate::field::{DiskField, ShellField};
use crate::grid::GridSpec;
use crate::supersonic::{SupersonicField, UpstreamTrace};

/// Everything the iteration needs on the shock face, assembled from the
/// current iterate `(W, W6)` and the upstream flow.
pub struct ShockData {
    pub grid: GridSpec,
    pub w6: DiskField,
    /// downstream `W1..W5` on the face `y1 = r_s`
    pub face: [DiskField; 5],
    /// upstream traces at `z1 = r_s + W6`
    pub up: UpstreamTrace,
    /// downstream density and pressure from the closure
    pub rho_t: DiskField,
    pub p_t: DiskField,
    pub j: DiskField,
    pub j2: DiskField,
    pub j3: DiskField,
    pub g2: DiskField,
    pub g3: DiskField,
    pub g4: DiskField,
    pub r01: DiskField,
    pub r02: DiskField,
    pub r03: DiskField,
    pub r1: DiskField,
    pub r2: DiskField,
    pub r3: DiskField,
    pub r6: DiskField,
    pub q1: DiskField,
}

/// Downstream density and pressure on the face from the Bernoulli/entropy
/// closure evaluated at the shifted background radius.
pub fn face_state(
    c: &CoeffSet,
    tab: &crate::background::RadialTable,
    w: &[DiskField; 5],
    w6: &DiskField,
) -> Result<(DiskField, DiskField)> {
    let bg = c.background();
    let g = bg.gas.gamma;
    let grid = w6.grid;
    let mut rho = DiskField::zeros(&grid);
    let mut p = DiskField::zeros(&grid);
    for j in 0..grid.na {
        for k in 0..grid.ntau {
            let xi = bg.r_s + w6.data[[j, k]];
            let (ub, _, _) = tab.eval(xi);
            let u1 = ub + w[0].data[[j, k]];
            let head = bg.bernoulli + w[4].data[[j, k]]
                - 0.5 * (u1 * u1 + w[1].data[[j, k]].powi(2) + w[2].data[[j, k]].powi(2));
            if head <= 0.0 {
                return Err(Error::Vacuum(head));
            }
            let kk = bg.k_plus + w[3].data[[j, k]];
            let r = ((g - 1.0) / (g * kk) * head).powf(1.0 / (g - 1.0));
            rho.data[[j, k]] = r;
            p.data[[j, k]] = kk * r.powf(g);
        }
    }
    Ok((rho, p))
}

/// Jump determinants of the tangential momentum system, in the exact
/// expanded form. Fails when the pressure-jump block degenerates.
pub fn jump_determinants(
    c: &CoeffSet,
    tab: &crate::background::RadialTable,
    w: &[DiskField; 5],
    w6: &DiskField,
    rho_t: &DiskField,
    p_t: &DiskField,
    up: &UpstreamTrace,
) -> Result<(DiskField, DiskField, DiskField)> {
    let bg = c.background();
    let grid = w6.grid;
    let tol_j = 1e-8 * c.p_jump * c.p_jump;
    let mut jf = DiskField::zeros(&grid);
    let mut j2f = DiskField::zeros(&grid);
    let mut j3f = DiskField::zeros(&grid);
    for j in 0..grid.na {
        for k in 0..grid.ntau {
            let xi = bg.r_s + w6.data[[j, k]];
            let (ub, _, _) = tab.eval(xi);
            let u1p = ub + w[0].data[[j, k]];
            let (w2, w3) = (w[1].data[[j, k]], w[2].data[[j, k]]);
            let rt = rho_t.data[[j, k]];
            let pt = p_t.data[[j, k]];
            let rm = up.rho.data[[j, k]];
            let (u1m, u2m, u3m) = (
                up.u1.data[[j, k]],
                up.u2.data[[j, k]],
                up.u3.data[[j, k]],
            );
            let pm = up.p.data[[j, k]];
            // jump brackets of the tangential momentum-flux matrix
            let b22 = rt * w2 * w2 + pt - (rm * u2m * u2m + pm);
            let b33 = rt * w3 * w3 + pt - (rm * u3m * u3m + pm);
            let b23 = rt * w2 * w3 - rm * u2m * u3m;
            let b12 = rt * u1p * w2 - rm * u1m * u2m;
            let b13 = rt * u1p * w3 - rm * u1m * u3m;
            let jv = b22 * b33 - b23 * b23;
            if jv.abs() < tol_j {
                return Err(Error::DegenerateJump { j: jv, tol: tol_j });
            }
            jf.data[[j, k]] = jv;
            j2f.data[[j, k]] = b33 * b12 - b13 * b23;
            j3f.data[[j, k]] = b22 * b13 - b12 * b23;
        }
    }
    Ok((jf, j2f, j3f))
}

/// Shock-gradient sources `g_i = (r_s + W6) J_i / J - b0 r_s W_i`.
pub fn shock_gradient_sources(
    c: &CoeffSet,
    w: &[DiskField; 5],
    w6: &DiskField,
    dets: &(DiskField, DiskField, DiskField),
) -> (DiskField, DiskField) {
    let rs = c.background().r_s;
    let grid = w6.grid;
    let mut g2 = DiskField::zeros(&grid);
    let mut g3 = DiskField::zeros(&grid);
    for j in 0..grid.na {
        for k in 0..grid.ntau {
            let scale = (rs + w6.data[[j, k]]) / dets.0.data[[j, k]];
            g2.data[[j, k]] = scale * dets.1.data[[j, k]] - c.b0 * rs * w[1].data[[j, k]];
            g3.data[[j, k]] = scale * dets.2.data[[j, k]] - c.b0 * rs * w[2].data[[j, k]];
        }
    }
    (g2, g3)
}

/// The coordinate-change part of the vorticity boundary datum: the exact
/// difference between the shifted-chart curl and its fixed-chart principal
/// part on the face.
pub fn vorticity_g4(
    c: &CoeffSet,
    w_shell: &[ShellField; 5],
    w6: &DiskField,
) -> DiskField {
    let bg = c.background();
    let (rs, r2) = (bg.r_s, bg.r2);
    let grid = w6.grid;
    let w2f = w_shell[1].level(0);
    let w3f = w_shell[2].level(0);
    let mut out = DiskField::zeros(&grid);
    for j in 0..grid.na {
        for k in 0..grid.ntau {
            let (y2, y3) = grid.disk_point(j, k);
            let wq = 1.0 + y2 * y2 + y3 * y3;
            let v6 = w6.data[[j, k]];
            let cross = y3 * w2f.data[[j, k]] - y2 * w3f.data[[j, k]];
            let curl = ops::disk_dy2_at(&w3f, j, k) - ops::disk_dy3_at(&w2f, j, k);
            let d6_2 = ops::disk_dy2_at(w6, j, k);
            let d6_3 = ops::disk_dy3_at(w6, j, k);
            let dw2 = ops::dy1_at(&w_shell[1], 0, j, k);
            let dw3 = ops::dy1_at(&w_shell[2], 0, j, k);
            out.data[[j, k]] = -v6 * cross / (rs * (rs + v6))
                - 0.5 * wq * v6 * curl / (rs * (rs + v6))
                - 0.5 * wq * (r2 - rs) * (d6_2 * dw3 - d6_3 * dw2)
                    / ((rs + v6) * (r2 - rs - v6));
        }
    }
    out
}

/// Vorticity boundary datum on the shock face.
pub fn vorticity_shock_data(
    c: &CoeffSet,
    g2: &DiskField,
    g3: &DiskField,
    g4: &DiskField,
) -> DiskField {
    let rs = c.background().r_s;
    let grid = g2.grid;
    let mut s2 = DiskField::zeros(&grid);
    let mut s3 = DiskField::zeros(&grid);
    for j in 0..grid.na {
        let wq = 1.0 + grid.a(j) * grid.a(j);
        for k in 0..grid.ntau {
            s2.data[[j, k]] = g2.data[[j, k]] / wq;
            s3.data[[j, k]] = g3.data[[j, k]] / wq;
        }
    }
    let mut out = DiskField::zeros(&grid);
    for j in 0..grid.na {
        for k in 0..grid.ntau {
            let a = grid.a(j);
            let wq = 1.0 + a * a;
            let curl = ops::disk_dy3_at(&s2, j, k) - ops::disk_dy2_at(&s3, j, k);
            out.data[[j, k]] = wq * wq / (2.0 * c.b0 * rs * rs) * curl + g4.data[[j, k]];
        }
    }
    out
}

/// The three linearized-jump remainders and their combinations. All
/// formulas are exact identities relating the raw jump conditions to the
/// linearized left-hand sides.
#[allow(clippy::too_many_arguments)]
pub fn trace_residuals(
    c: &CoeffSet,
    tab: &crate::background::RadialTable,
    w: &[DiskField; 5],
    w6: &DiskField,
    rho_t: &DiskField,
    p_t: &DiskField,
    up: &UpstreamTrace,
    dets: &(DiskField, DiskField, DiskField),
) -> [DiskField; 5] {
    let bg = c.background();
    let g = bg.gas.gamma;
    let rs = bg.r_s;
    let grid = w6.grid;
    let (u_s, rho_s, _) = bg.plus(rs);
    let c2_s = bg.c2_plus(rs);
    let mut r01 = DiskField::zeros(&grid);
    let mut r02 = DiskField::zeros(&grid);
    let mut r03 = DiskField::zeros(&grid);
    for j in 0..grid.na {
        for k in 0..grid.ntau {
            let v6 = w6.data[[j, k]];
            let xi = rs + v6;
            let (ub_p, rb_p, pb_p) = tab.eval(xi);
            let (ub_m, rb_m, pb_m) = bg.minus(xi);
            let w1 = w[0].data[[j, k]];
            let (w2, w3) = (w[1].data[[j, k]], w[2].data[[j, k]]);
            let w4 = w[3].data[[j, k]];
            let rt = rho_t.data[[j, k]];
            let pt = p_t.data[[j, k]];
            let u1p = ub_p + w1;
            let rm = up.rho.data[[j, k]];
            let (u1m, u2m, u3m) = (
                up.u1.data[[j, k]],
                up.u2.data[[j, k]],
                up.u3.data[[j, k]],
            );
            let pm = up.p.data[[j, k]];
            let jv = dets.0.data[[j, k]];
            let j2v = dets.1.data[[j, k]];
            let j3v = dets.2.data[[j, k]];
            let rho_dot = rt - rb_p;

            // mass
            let jump_bg = rb_p * ub_p - rb_m * ub_m;
            r01.data[[j, k]] = -jump_bg + rm * u1m - rb_m * ub_m
                - (rb_p - rho_s) * w1
                - (w1 + ub_p - u_s) * rho_dot
                + ((rt * w2 - rm * u2m) * j2v + (rt * w3 - rm * u3m) * j3v) / jv;

            // radial momentum
            let mom_bg = (rb_p * ub_p * ub_p + pb_p) - (rb_m * ub_m * ub_m + pb_m);
            r02.data[[j, k]] = -(mom_bg - 2.0 / rs * c.p_jump * v6)
                + (rm * u1m * u1m + pm)
                - (rb_m * ub_m * ub_m + pb_m)
                - (rt * u1p * u1p + pt
                    - (rb_p * ub_p * ub_p + pb_p)
                    - 2.0 * rho_s * u_s * w1
                    - (u_s * u_s + c2_s) * rho_dot
                    - rho_s.powf(g) * w4)
                + ((rt * u1p * w2 - rm * u1m * u2m) * j2v
                    + (rt * u1p * w3 - rm * u1m * u3m) * j3v)
                    / jv;

            // Bernoulli
            let b_up = up.b.data[[j, k]];
            r03.data[[j, k]] = b_up - bg.bernoulli
                - ub_p * w1
                - 0.5 * (w1 * w1 + w2 * w2 + w3 * w3)
                - g / (g - 1.0)
                    * ((bg.k_plus + w4) * rt.powf(g - 1.0)
                        - bg.k_plus * rb_p.powf(g - 1.0))
                + u_s * w1
                + c2_s / rho_s * rho_dot
                + g * rho_s.powf(g - 1.0) / (g - 1.0) * w4;
        }
    }
    let mut r1 = DiskField::zeros(&grid);
    let mut r2 = DiskField::zeros(&grid);
    let mut r3 = DiskField::zeros(&grid);
    for j in 0..grid.na {
        for k in 0..grid.ntau {
            let v = [r01.data[[j, k]], r02.data[[j, k]], r03.data[[j, k]]];
            let a1: f64 = (0..3).map(|i| c.b1w[i] * v[i]).sum();
            let a2: f64 = (0..3).map(|i| c.b2w[i] * v[i]).sum();
            r1.data[[j, k]] = a1;
            r2.data[[j, k]] = a2;
            r3.data[[j, k]] = a2 - c.b2 / c.b1 * a1;
        }
    }
    let _ = r3;
    [r01, r02, r03, r1, r2]
}

/// Assemble everything the fixed-point step needs on the shock face.
pub fn assemble_shock_data(
    c: &CoeffSet,
    tab: &crate::background::RadialTable,
    sup: &SupersonicField,
    w_shell: &[ShellField; 5],
    w6: &DiskField,
) -> Result<ShockData> {
    let bg = c.background();
    let grid = w6.grid;
    let gap = (bg.r_s - bg.r1).min(bg.r2 - bg.r_s);
    if w6.sup() >= gap {
        return Err(Error::Range { xi: bg.r_s + w6.sup(), lo: bg.r1, hi: bg.r2 });
    }
    let face: [DiskField; 5] = std::array::from_fn(|i| w_shell[i].level(0));
    let mut xi = w6.clone();
    for v in xi.data.iter_mut() {
        *v += bg.r_s;
    }
    let up = sup.trace_at_shock(&xi)?;
    let (rho_t, p_t) = face_state(c, tab, &face, w6)?;
    let dets = jump_determinants(c, tab, &face, w6, &rho_t, &p_t, &up)?;
    let (g2, g3) = shock_gradient_sources(c, &face, w6, &dets);
    let g4 = vorticity_g4(c, w_shell, w6);
    let r6 = vorticity_shock_data(c, &g2, &g3, &g4);
    let [r01, r02, r03, r1, r2] =
        trace_residuals(c, tab, &face, w6, &rho_t, &p_t, &up, &dets);
    let mut r3 = DiskField::zeros(&grid);
    for j in 0..grid.na {
        for k in 0..grid.ntau {
            r3.data[[j, k]] = r2.data[[j, k]] - c.b2 / c.b1 * r1.data[[j, k]];
        }
    }
    // q1 = sum_j d/dyj (2 b1 g_j / (1+|y'|^2)) + disk Laplacian of R1, in
    // the conservative flux form shared with the disk Poisson solve
    let mut v2 = DiskField::zeros(&grid);
    let mut v3 = DiskField::zeros(&grid);
    for j in 0..grid.na {
        for k in 0..grid.ntau {
            let a = grid.a(j);
            let wq = 1.0 + a * a;
            v2.data[[j, k]] = 2.0 * c.b1 * g2.data[[j, k]] / wq;
            v3.data[[j, k]] = 2.0 * c.b1 * g3.data[[j, k]] / wq;
        }
    }
    let (va, vt) = ops::disk_to_polar(&v2, &v3);
    let q1 = ops::disk_div_flux(&va, &vt, Some(&r1));
    Ok(ShockData {
        grid,
        w6: w6.clone(),
        face,
        up,
        rho_t,
        p_t,
        j: dets.0,
        j2: dets.1,
        j3: dets.2,
        g2,
        g3,
        g4,
        r01,
        r02,
        r03,
        r1,
        r2,
        r3,
        r6,
        q1,
    })
}

/// Boundary source of the disk Poisson problem once the solenoidal face
/// values are known.
pub fn q5_from(
    c: &CoeffSet,
    q1: &DiskField,
    wdot_face2: &DiskField,
    wdot_face3: &DiskField,
) -> DiskField {
    let grid = q1.grid;
    let rs = c.background().r_s;
    let mut v2 = DiskField::zeros(&grid);
    let mut v3 = DiskField::zeros(&grid);
    for j in 0..grid.na {
        for k in 0..grid.ntau {
            let a = grid.a(j);
            let wq = 1.0 + a * a;
            v2.data[[j, k]] = 2.0 * rs * c.b0 * c.b1 * wdot_face2.data[[j, k]] / wq;
            v3.data[[j, k]] = 2.0 * rs * c.b0 * c.b1 * wdot_face3.data[[j, k]] / wq;
        }
    }
    let (va, vt) = ops::disk_to_polar(&v2, &v3);
    let div = ops::disk_div_flux(&va, &vt, None);
    let mut out = q1.clone();
    ndarray::Zip::from(&mut out.data)
        .and(&div.data)
        .for_each(|a, &b| *a += b);
    out
}

/// Exit boundary source `q4` (also the exit Neumann datum of the potential
/// problem): the exact Bernoulli/exit-pressure relation with the enthalpy
/// remainder folded in.
#[allow(clippy::too_many_arguments)]
pub fn q4_exit(
    c: &CoeffSet,
    w_shell: &[ShellField; 5],
    w6: &DiskField,
    w5_new: &ShellField,
    r4_exit: &DiskField,
    pex: &DiskField,
    epsilon: f64,
) -> DiskField {
    let bg = c.background();
    let g = bg.gas.gamma;
    let grid = w6.grid;
    let n1 = w_shell[0].grid.n1;
    let r2 = bg.r2;
    let (u2b, rho2b, p2b) = bg.plus(r2);
    let h_ref = crate::gas::enthalpy_pk(p2b, bg.k_plus, bg.gas);
    let bcoef = (bg.bernoulli - 0.5 * u2b * u2b) / (g * bg.k_plus);
    let mut out = DiskField::zeros(&grid);
    for j in 0..grid.na {
        for k in 0..grid.ntau {
            let w1 = w_shell[0].data[[n1, j, k]];
            let w2 = w_shell[1].data[[n1, j, k]];
            let w3 = w_shell[2].data[[n1, j, k]];
            let w4 = w_shell[3].data[[n1, j, k]];
            let w5 = w_shell[4].data[[n1, j, k]];
            // exit pressure of the hatted state through the closure
            let head = bg.bernoulli + w5 - 0.5 * ((u2b + w1).powi(2) + w2 * w2 + w3 * w3);
            let kk = bg.k_plus + w4;
            let rho = ((g - 1.0) / (g * kk) * head).powf(1.0 / (g - 1.0));
            let p = kk * rho.powf(g);
            // exact enthalpy remainder
            let e_rem = crate::gas::enthalpy_pk(p, kk, bg.gas)
                - h_ref
                - (p - p2b) / rho2b
                - bcoef * w4;
            out.data[[j, k]] = c.d3(r2) * r4_exit.data[[j, k]]
                + w5_new.data[[n1, j, k]] / u2b
                - epsilon * pex.data[[j, k]] / (rho2b * u2b)
                - 0.5 * (w1 * w1 + w2 * w2 + w3 * w3) / u2b
                - e_rem / u2b;
        }
    }
    out
}

/// Pointwise evaluation of the shock-gradient consistency functions: the
/// finite-difference gradient of `W6` minus the algebraic right-hand side.
pub fn check_f_system(
    c: &CoeffSet,
    w6: &DiskField,
    w_face2: &DiskField,
    w_face3: &DiskField,
    g2: &DiskField,
    g3: &DiskField,
) -> (DiskField, DiskField) {
    let rs = c.background().r_s;
    let grid = w6.grid;
    let mut f2 = DiskField::zeros(&grid);
    let mut f3 = DiskField::zeros(&grid);
    for j in 0..grid.na {
        for k in 0..grid.ntau {
            let a = grid.a(j);
            let wq = 1.0 + a * a;
            f2.data[[j, k]] = ops::disk_dy2_at(w6, j, k)
                - 2.0 * c.b0 * rs * w_face2.data[[j, k]] / wq
                - 2.0 * g2.data[[j, k]] / wq;
            f3.data[[j, k]] = ops::disk_dy3_at(w6, j, k)
                - 2.0 * c.b0 * rs * w_face3.data[[j, k]] / wq
                - 2.0 * g3.data[[j, k]] / wq;
        }
    }
    (f2, f3)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::background::{coefficients, default_background};
    use crate::supersonic::{march_supersonic, InflowPerturbation, InflowSpec};

    /// Wall-compatible test iterate: scalar fields with flat wall envelopes,
    /// tangential velocity from a stream function, all modulated radially.
    fn test_iterate(grid: &GridSpec, amp: f64) -> ([ShellField; 5], DiskField) {
        let (rlo, rhi) = (grid.r_lo, grid.r_hi);
        let rad = |y1: f64, f: f64| (f * (y1 - rlo) / (rhi - rlo) + 0.2).cos();
        let env2 = |a: f64| (1.0 - a * a).powi(2);
        let w1 = ShellField::from_fn(grid, |y1, a, t| {
            amp * rad(y1, 1.0) * env2(a) * (0.8 + a * t.cos())
        });
        // stream function psi = (1-a^2)^3 (0.5 + a cos tau), closed-form
        let mut w2 = ShellField::zeros(grid);
        let mut w3 = ShellField::zeros(grid);
        for i in 0..=grid.n1 {
            let r = rad(grid.y1(i), 1.7);
            for j in 0..grid.na {
                for k in 0..grid.ntau {
                    let a = grid.a(j);
                    let t = grid.tau(k);
                    let e = 1.0 - a * a;
                    let ua = amp * r * e.powi(3) * t.sin();
                    let ut = amp
                        * r
                        * (-6.0 * a * e.powi(2) * 0.5
                            + t.cos() * (e.powi(3) - 6.0 * a * a * e.powi(2)));
                    let (v2, v3) = crate::coords::from_polar_pair(ua, ut, t);
                    w2.data[[i, j, k]] = v2;
                    w3.data[[i, j, k]] = v3;
                }
            }
        }
        let w4 = ShellField::from_fn(grid, |y1, a, t| {
            amp * rad(y1, 0.9) * env2(a) * (0.5 + 0.7 * a * t.sin())
        });
        let w5 = ShellField::from_fn(grid, |y1, a, t| {
            amp * rad(y1, 1.3) * env2(a) * (0.3 + 0.5 * a * t.cos())
        });
        let w6 = DiskField::from_fn(grid, |a, t| amp * env2(a) * (1.0 + 0.6 * a * t.sin()));
        ([w1, w2, w3, w4, w5], w6)
    }

    struct Setup {
        c: CoeffSet,
        sup: SupersonicField,
        grid: GridSpec,
        tab: crate::background::RadialTable,
    }

    fn setup(na: usize, nt: usize, eps: f64) -> Setup {
        let bg = default_background().unwrap();
        let c = coefficients(&bg).unwrap();
        let march_grid = GridSpec::new(8, na, nt, bg.r1, bg.r2).unwrap();
        let p = InflowPerturbation::from_spec(&InflowSpec::default(), &march_grid);
        let sup = march_supersonic(&bg, &p, eps, &march_grid, 0.01).unwrap();
        let grid = GridSpec::new(8, na, nt, bg.r_s, bg.r2).unwrap();
        let tab = bg.table_plus(4096);
        Setup { c, sup, grid, tab }
    }

    #[test]
    fn zero_iterate_and_zero_epsilon_give_zero_sources() {
        let s = setup(12, 16, 0.0);
        let w: [ShellField; 5] = std::array::from_fn(|_| ShellField::zeros(&s.grid));
        let w6 = DiskField::zeros(&s.grid);
        let d = assemble_shock_data(&s.c, &s.tab, &s.sup, &w, &w6).unwrap();
        for f in [&d.g2, &d.g3, &d.g4, &d.r01, &d.r02, &d.r03, &d.r1, &d.r2, &d.r6, &d.q1] {
            assert!(f.sup() < 1e-11, "source not zero: {}", f.sup());
        }
        // J reduces to the squared background pressure jump
        for v in d.j.data.iter() {
            assert!((v - s.c.p_jump * s.c.p_jump).abs() < 1e-11);
        }
        for f in [&d.j2, &d.j3] {
            assert!(f.sup() < 1e-11);
        }
    }

    #[test]
    fn remainder_terms_are_exact_identities() {
        // The linearized jump relations with the assembled remainders must
        // reproduce the raw jump conditions pointwise, for an arbitrary
        // (not small) iterate.
        let s = setup(10, 12, 2e-3);
        let (w, w6) = test_iterate(&s.grid, 0.05);
        let d = assemble_shock_data(&s.c, &s.tab, &s.sup, &w, &w6).unwrap();
        let bg = s.c.background();
        let g = bg.gas.gamma;
        let rs = bg.r_s;
        let (u_s, rho_s, _) = bg.plus(rs);
        let c2_s = bg.c2_plus(rs);
        let mut worst = [0.0f64; 3];
        for j in 0..s.grid.na {
            for k in 0..s.grid.ntau {
                let v6 = d.w6.data[[j, k]];
                let (ub_p, rb_p, _) = bg.plus(rs + v6);
                let w1 = d.face[0].data[[j, k]];
                let (w2v, w3v) = (d.face[1].data[[j, k]], d.face[2].data[[j, k]]);
                let w4 = d.face[3].data[[j, k]];
                let rt = d.rho_t.data[[j, k]];
                let pt = d.p_t.data[[j, k]];
                let u1p = ub_p + w1;
                let rho_dot = rt - rb_p;
                let rm = d.up.rho.data[[j, k]];
                let (u1m, u2m, u3m) = (
                    d.up.u1.data[[j, k]],
                    d.up.u2.data[[j, k]],
                    d.up.u3.data[[j, k]],
                );
                let pm = d.up.p.data[[j, k]];
                let jv = d.j.data[[j, k]];
                let (j2v, j3v) = (d.j2.data[[j, k]], d.j3.data[[j, k]]);

                // raw jump combinations
                let m_jump = rt * u1p - rm * u1m;
                let m_tan = ((rt * w2v - rm * u2m) * j2v + (rt * w3v - rm * u3m) * j3v) / jv;
                let lhs1 = rho_s * w1 + u_s * rho_dot;
                let id1 = (lhs1 - d.r01.data[[j, k]]) - (m_jump - m_tan);
                worst[0] = worst[0].max(id1.abs());

                let p_jump_full = (rt * u1p * u1p + pt) - (rm * u1m * u1m + pm);
                let p_tan = ((rt * u1p * w2v - rm * u1m * u2m) * j2v
                    + (rt * u1p * w3v - rm * u1m * u3m) * j3v)
                    / jv;
                let lhs2 = 2.0 * rho_s * u_s * w1
                    + (u_s * u_s + c2_s) * rho_dot
                    + rho_s.powf(g) * w4
                    + 2.0 / rs * s.c.p_jump * v6;
                let id2 = (lhs2 - d.r02.data[[j, k]]) - (p_jump_full - p_tan);
                worst[1] = worst[1].max(id2.abs());

                let b_plus = 0.5 * (u1p * u1p + w2v * w2v + w3v * w3v)
                    + g / (g - 1.0) * (bg.k_plus + w4) * rt.powf(g - 1.0);
                let lhs3 = u_s * w1
                    + c2_s / rho_s * rho_dot
                    + g * rho_s.powf(g - 1.0) / (g - 1.0) * w4;
                let id3 = (lhs3 - d.r03.data[[j, k]]) - (b_plus - d.up.b.data[[j, k]]);
                worst[2] = worst[2].max(id3.abs());
            }
        }
        for (i, w) in worst.iter().enumerate() {
            assert!(*w < 1e-11, "identity {i} defect {w}");
        }
    }

    #[test]
    fn determinant_matches_generic_bracket_assembly() {
        let s = setup(10, 12, 1e-3);
        let (w, w6) = test_iterate(&s.grid, 0.03);
        let d = assemble_shock_data(&s.c, &s.tab, &s.sup, &w, &w6).unwrap();
        let bg = s.c.background();
        for j in 0..s.grid.na {
            for k in 0..s.grid.ntau {
                let (ub_p, _, _) = bg.plus(bg.r_s + d.w6.data[[j, k]]);
                let up = [
                    d.up.u1.data[[j, k]],
                    d.up.u2.data[[j, k]],
                    d.up.u3.data[[j, k]],
                ];
                let dn = [
                    ub_p + d.face[0].data[[j, k]],
                    d.face[1].data[[j, k]],
                    d.face[2].data[[j, k]],
                ];
                let (rm, pm) = (d.up.rho.data[[j, k]], d.up.p.data[[j, k]]);
                let (rt, pt) = (d.rho_t.data[[j, k]], d.p_t.data[[j, k]]);
                let br = |f: &dyn Fn(&[f64; 3], f64, f64) -> f64| {
                    f(&dn, rt, pt) - f(&up, rm, pm)
                };
                let jj = br(&|u, r, p| r * u[1] * u[1] + p) * br(&|u, r, p| r * u[2] * u[2] + p)
                    - br(&|u, r, _| r * u[1] * u[2]).powi(2);
                assert!((jj - d.j.data[[j, k]]).abs() < 1e-11 * jj.abs().max(1.0));
                let j2 = br(&|u, r, p| r * u[2] * u[2] + p) * br(&|u, r, _| r * u[0] * u[1])
                    - br(&|u, r, _| r * u[0] * u[2]) * br(&|u, r, _| r * u[1] * u[2]);
                assert!((j2 - d.j2.data[[j, k]]).abs() < 1e-11 * j2.abs().max(1.0));
            }
        }
    }

    #[test]
    fn shock_sources_shrink_superlinearly_at_zero_epsilon() {
        let s = setup(12, 16, 0.0);
        let norm_at = |amp: f64| {
            let (w, w6) = test_iterate(&s.grid, amp);
            let d = assemble_shock_data(&s.c, &s.tab, &s.sup, &w, &w6).unwrap();
            (
                d.g2.sup().max(d.g3.sup()),
                d.r01.sup().max(d.r02.sup()).max(d.r03.sup()),
            )
        };
        let (g_hi, r_hi) = norm_at(0.02);
        let (g_lo, r_lo) = norm_at(0.01);
        assert!(g_hi / g_lo > 3.5, "g ratio {}", g_hi / g_lo);
        assert!(r_hi / r_lo > 3.5, "R0 ratio {}", r_hi / r_lo);
    }

    #[test]
    fn wall_compatibility_of_face_sources() {
        // cos t g2 + sin t g3, d/da R0j, and R6 all vanish on the rim for
        // compatible iterates, at the stencil truncation rate
        let mut gmax = Vec::new();
        let mut rmax = Vec::new();
        let mut r6max = Vec::new();
        for (na, nt) in [(12, 16), (24, 32)] {
            let s = setup(na, nt, 1e-3);
            let (w, w6) = test_iterate(&s.grid, 0.01);
            let d = assemble_shock_data(&s.c, &s.tab, &s.sup, &w, &w6).unwrap();
            let (ga, _gt) = ops::disk_to_polar(&d.g2, &d.g3);
            let mut gw = 0.0f64;
            let mut rw = 0.0f64;
            let mut r6w = 0.0f64;
            for k in 0..s.grid.ntau {
                gw = gw.max(ops::disk_wall_value(&ga, k).abs());
                for f in [&d.r01, &d.r02, &d.r03] {
                    rw = rw.max(ops::disk_wall_da(f, k).abs());
                }
                r6w = r6w.max(ops::disk_wall_value(&d.r6, k).abs());
            }
            gmax.push(gw);
            rmax.push(rw);
            r6max.push(r6w);
        }
        assert!(gmax[1] < 0.5 * gmax[0], "ga wall: {gmax:?}");
        assert!(rmax[1] < 0.5 * rmax[0], "R0 wall: {rmax:?}");
        assert!(r6max[1] < 0.6 * r6max[0], "R6 wall: {r6max:?}");
    }

    #[test]
    fn q1_mean_shrinks_under_refinement() {
        // the flux assembly telescopes, so the disk mean of q1 equals the
        // wall-face flux of the compatible data: pure stencil truncation
        let mut means = Vec::new();
        for (na, nt) in [(16, 24), (32, 48)] {
            let s = setup(na, nt, 1e-3);
            let (w, w6) = test_iterate(&s.grid, 0.01);
            let d = assemble_shock_data(&s.c, &s.tab, &s.sup, &w, &w6).unwrap();
            means.push(ops::disk_integral(&d.q1).abs() / d.q1.sup().max(1e-300));
        }
        assert!(
            means[1] < 0.5 * means[0],
            "q1 relative mean did not shrink: {means:?}"
        );
    }

    #[test]
    fn exit_source_reduces_to_pressure_term_for_zero_iterate() {
        let s = setup(12, 16, 1e-3);
        let w: [ShellField; 5] = std::array::from_fn(|_| ShellField::zeros(&s.grid));
        let w6 = DiskField::zeros(&s.grid);
        let w5new = ShellField::zeros(&s.grid);
        let r4 = DiskField::zeros(&s.grid);
        let pex = DiskField::from_fn(&s.grid, |a, t| (1.0 - a * a).powi(2) * (1.0 + t.cos()));
        let eps = 1e-3;
        let q4 = q4_exit(&s.c, &w, &w6, &w5new, &r4, &pex, eps);
        let bg = s.c.background();
        let (u2b, rho2b, _) = bg.plus(bg.r2);
        for j in 0..s.grid.na {
            for k in 0..s.grid.ntau {
                let want = -eps * pex.data[[j, k]] / (rho2b * u2b);
                assert!((q4.data[[j, k]] - want).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn f_system_vanishes_on_background() {
        let s = setup(10, 12, 0.0);
        let z = DiskField::zeros(&s.grid);
        let (f2, f3) = check_f_system(&s.c, &z, &z, &z, &z, &z);
        assert!(f2.sup() < 1e-14 && f3.sup() < 1e-14);
    }
}

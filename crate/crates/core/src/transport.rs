//! Characteristic tracing in the fixed shell and the three hyperbolic
//! solves: the Bernoulli perturbation, the entropy split, and the first
//! vorticity component. Trajectories run backward in the radial coordinate
//! to the shock face with a classical fourth-order Runge-Kutta integrator;
//! the damping integral and the source convolution of the vorticity
//! transport are accumulated along the path with composite Simpson sums.

use crate::background::CoeffSet;
use crate::coords::ops;
use crate::error::{Error, Result};
use crate::field::{DiskField, ShellField};
use crate::grid::GridSpec;
use rayon::prelude::*;

/// Shifted radius `D0 = y1 + (r2 - y1) W6 / (r2 - r_s)` of the shock-fitting
/// coordinate change.
pub fn d0_field(grid: &GridSpec, w6: &DiskField) -> ShellField {
    let (rs, r2) = (grid.r_lo, grid.r_hi);
    let mut out = ShellField::zeros(grid);
    for i in 0..=grid.n1 {
        let y1 = grid.y1(i);
        for j in 0..grid.na {
            for k in 0..grid.ntau {
                out.data[[i, j, k]] = y1 + (r2 - y1) / (r2 - rs) * w6.data[[j, k]];
            }
        }
    }
    out
}

/// The shifted-chart derivative `D1 f = (r2-r_s)/(r2-r_s-W6) d f/d y1`.
pub fn d1_op(f: &ShellField, w6: &DiskField) -> ShellField {
    let grid = f.grid;
    let (rs, r2) = (grid.r_lo, grid.r_hi);
    let mut out = ops::dy1(f);
    for i in 0..=grid.n1 {
        for j in 0..grid.na {
            for k in 0..grid.ntau {
                out.data[[i, j, k]] *= (r2 - rs) / (r2 - rs - w6.data[[j, k]]);
            }
        }
    }
    out
}

/// The shifted-chart tangential derivatives `D2 f`, `D3 f`.
pub fn d23_op(f: &ShellField, w6: &DiskField) -> (ShellField, ShellField) {
    let grid = f.grid;
    let (rs, r2) = (grid.r_lo, grid.r_hi);
    let f1 = ops::dy1(f);
    let mut f2 = ops::dy2(f);
    let mut f3 = ops::dy3(f);
    for i in 0..=grid.n1 {
        let y1 = grid.y1(i);
        for j in 0..grid.na {
            for k in 0..grid.ntau {
                let d62 = ops::disk_dy2_at(w6, j, k);
                let d63 = ops::disk_dy3_at(w6, j, k);
                let fac = (r2 - y1) / (r2 - rs - w6.data[[j, k]]) * f1.data[[i, j, k]];
                f2.data[[i, j, k]] -= fac * d62;
                f3.data[[i, j, k]] -= fac * d63;
            }
        }
    }
    (f2, f3)
}

/// Transport coefficients of the iterate: the characteristic slopes
/// `(K2, K3)`, the vorticity damping `mu` and the vorticity source `H0`.
pub struct TransportCoeffs {
    pub k2: ShellField,
    pub k3: ShellField,
    pub mu: ShellField,
    pub h0: ShellField,
}

pub fn transport_coeffs(
    c: &CoeffSet,
    tab: &crate::background::RadialTable,
    what: &[ShellField; 5],
    w6: &DiskField,
) -> TransportCoeffs {
    let bg = c.background();
    let grid = what[0].grid;
    let (rs, r2) = (grid.r_lo, grid.r_hi);
    let g = bg.gas.gamma;
    let d0 = d0_field(&grid, w6);

    // 1/(U-bar(D0) + W1) and Theta/(U-bar(D0) + W1)
    let mut inv_u = ShellField::zeros(&grid);
    let mut theta_u = ShellField::zeros(&grid);
    let mut w2_u = ShellField::zeros(&grid);
    let mut w3_u = ShellField::zeros(&grid);
    for i in 0..=grid.n1 {
        for j in 0..grid.na {
            for k in 0..grid.ntau {
                let (ub, _, _) = tab.eval(d0.data[[i, j, k]]);
                let ut = ub + what[0].data[[i, j, k]];
                let head = bg.bernoulli + what[4].data[[i, j, k]]
                    - 0.5
                        * (ut * ut
                            + what[1].data[[i, j, k]].powi(2)
                            + what[2].data[[i, j, k]].powi(2));
                let theta = head / (g * (bg.k_plus + what[3].data[[i, j, k]]));
                inv_u.data[[i, j, k]] = 1.0 / ut;
                theta_u.data[[i, j, k]] = theta / ut;
                w2_u.data[[i, j, k]] = what[1].data[[i, j, k]] / ut;
                w3_u.data[[i, j, k]] = what[2].data[[i, j, k]] / ut;
            }
        }
    }
    let (d2_invu, d3_invu) = d23_op(&inv_u, w6);
    let (d2_thu, d3_thu) = d23_op(&theta_u, w6);
    let (d2_w5, d3_w5) = d23_op(&what[4], w6);
    let (d2_w4, d3_w4) = d23_op(&what[3], w6);
    let (d2_w2u, _) = d23_op(&w2_u, w6);
    let (_, d3_w3u) = d23_op(&w3_u, w6);

    let mut k2 = ShellField::zeros(&grid);
    let mut k3 = ShellField::zeros(&grid);
    let mut mu = ShellField::zeros(&grid);
    let mut h0 = ShellField::zeros(&grid);
    for i in 0..=grid.n1 {
        let y1 = grid.y1(i);
        for j in 0..grid.na {
            for k in 0..grid.ntau {
                let (y2, y3) = grid.disk_point(j, k);
                let wq = 1.0 + y2 * y2 + y3 * y3;
                let d0v = d0.data[[i, j, k]];
                let (w2, w3) = (what[1].data[[i, j, k]], what[2].data[[i, j, k]]);
                let iu = inv_u.data[[i, j, k]];
                let den = 2.0 * (r2 - rs) * d0v / iu
                    + wq * (y1 - r2)
                        * (w2 * ops::disk_dy2_at(w6, j, k) + w3 * ops::disk_dy3_at(w6, j, k));
                let num = wq * (r2 - rs - w6.data[[j, k]]);
                k2.data[[i, j, k]] = num * w2 / den;
                k3.data[[i, j, k]] = num * w3 / den;

                mu.data[[i, j, k]] = 2.0 / d0v - (y2 * w2 + y3 * w3) / d0v * iu
                    + wq / (2.0 * d0v)
                        * (d2_w2u.data[[i, j, k]] + d3_w3u.data[[i, j, k]]);

                h0.data[[i, j, k]] = -wq * wq / (4.0 * d0v * d0v)
                    * (d2_invu.data[[i, j, k]] * d3_w5.data[[i, j, k]]
                        - d3_invu.data[[i, j, k]] * d2_w5.data[[i, j, k]]
                        - d2_thu.data[[i, j, k]] * d3_w4.data[[i, j, k]]
                        + d3_thu.data[[i, j, k]] * d2_w4.data[[i, j, k]]);
            }
        }
    }
    TransportCoeffs { k2, k3, mu, h0 }
}

/// Foot map and path integrals of the backward characteristic tracing.
pub struct CharData {
    pub grid: GridSpec,
    pub beta2: ShellField,
    pub beta3: ShellField,
    /// `exp(-int mu)` from the foot to the node
    pub damp: ShellField,
    /// `int H0 exp(-int mu)` accumulated along the path
    pub conv: ShellField,
    /// how many feet needed the rim projection
    pub clamped: usize,
}

/// Backward RK4 tracing from every node to the shock face. `steps_per_cell`
/// subdivides each radial cell (the default scheme uses four).
pub fn build_characteristics(
    co: &TransportCoeffs,
    steps_per_cell: usize,
    tol_char: f64,
) -> Result<CharData> {
    let k2 = &co.k2;
    let k3 = &co.k3;
    build_characteristics_with(
        co,
        move |t, q2, q3| {
            let (a, b) = crate::field::interp_pair(k2, k3, t, q2, q3);
            [a, b]
        },
        steps_per_cell,
        tol_char,
    )
}

/// Tracing against an arbitrary slope provider; the field-interpolating
/// entry point above is the production path, analytic slopes serve the
/// step-refinement diagnostics.
pub fn build_characteristics_with(
    co: &TransportCoeffs,
    slope_at: impl Fn(f64, f64, f64) -> [f64; 2] + Sync,
    steps_per_cell: usize,
    tol_char: f64,
) -> Result<CharData> {
    let grid = co.k2.grid;
    let n1 = grid.n1;
    let d1 = grid.d1();
    let dt = d1 / steps_per_cell as f64;

    let slope = |t: f64, p: [f64; 2]| -> Result<[f64; 2]> {
        let r = (p[0] * p[0] + p[1] * p[1]).sqrt();
        if r > 1.0 + tol_char {
            return Err(Error::Blowup { excess: r - 1.0, tol: tol_char });
        }
        let (q2, q3) = if r > 1.0 {
            (p[0] / r, p[1] / r)
        } else {
            (p[0], p[1])
        };
        Ok(slope_at(t, q2, q3))
    };

    let mut beta2 = ShellField::zeros(&grid);
    let mut beta3 = ShellField::zeros(&grid);
    let mut damp = ShellField::zeros(&grid);
    let mut conv = ShellField::zeros(&grid);
    let clamped = std::sync::atomic::AtomicUsize::new(0);

    // face level: identity foot, no path
    for j in 0..grid.na {
        for k in 0..grid.ntau {
            let (y2, y3) = grid.disk_point(j, k);
            beta2.data[[0, j, k]] = y2;
            beta3.data[[0, j, k]] = y3;
            damp.data[[0, j, k]] = 1.0;
        }
    }

    // the levels are independent; each column of results is written by one
    // worker, keeping the output deterministic
    let results: Result<Vec<_>> = (1..=n1)
        .into_par_iter()
        .map(|i| {
            let y1 = grid.y1(i);
            let nsteps = steps_per_cell * i;
            let mut level = vec![[0.0f64; 4]; grid.na * grid.ntau];
            for j in 0..grid.na {
                for k in 0..grid.ntau {
                    let (y2, y3) = grid.disk_point(j, k);
                    let mut p = [y2, y3];
                    // path samples of mu and H0 at the step endpoints
                    let mut mu_path = Vec::with_capacity(nsteps + 1);
                    let mut h0_path = Vec::with_capacity(nsteps + 1);
                    mu_path.push(co.mu.data[[i, j, k]]);
                    h0_path.push(co.h0.data[[i, j, k]]);
                    for s in 0..nsteps {
                        let t = y1 - s as f64 * dt;
                        let h = -dt;
                        let k1 = slope(t, p)?;
                        let k2 = slope(t + 0.5 * h, [p[0] + 0.5 * h * k1[0], p[1] + 0.5 * h * k1[1]])?;
                        let k3 = slope(t + 0.5 * h, [p[0] + 0.5 * h * k2[0], p[1] + 0.5 * h * k2[1]])?;
                        let k4 = slope(t + h, [p[0] + h * k3[0], p[1] + h * k3[1]])?;
                        p[0] += h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]);
                        p[1] += h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]);
                        let r = (p[0] * p[0] + p[1] * p[1]).sqrt();
                        if r > 1.0 {
                            if r > 1.0 + tol_char {
                                return Err(Error::Blowup { excess: r - 1.0, tol: tol_char });
                            }
                            p[0] /= r;
                            p[1] /= r;
                            clamped.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                        }
                        let tn = t + h;
                        mu_path.push(co.mu.interp(tn, p[0], p[1]));
                        h0_path.push(co.h0.interp(tn, p[0], p[1]));
                    }
                    // cumulative integral of mu from the node down the path
                    let mcum = cumulative_simpson(&mu_path, dt);
                    let total = *mcum.last().unwrap();
                    // convolution int_{rs}^{y1} H0(t) e^{-int_t^{y1} mu}:
                    // walking backward, m_cum[s] is exactly int_{t_s}^{y1}
                    let f: Vec<f64> = h0_path
                        .iter()
                        .zip(mcum.iter())
                        .map(|(h, m)| h * (-m).exp())
                        .collect();
                    let fint = *cumulative_simpson(&f, dt).last().unwrap();
                    level[j * grid.ntau + k] = [p[0], p[1], (-total).exp(), fint];
                }
            }
            Ok((i, level))
        })
        .collect();
    for (i, level) in results? {
        for j in 0..grid.na {
            for k in 0..grid.ntau {
                let v = level[j * grid.ntau + k];
                beta2.data[[i, j, k]] = v[0];
                beta3.data[[i, j, k]] = v[1];
                damp.data[[i, j, k]] = v[2];
                conv.data[[i, j, k]] = v[3];
            }
        }
    }
    Ok(CharData {
        grid,
        beta2,
        beta3,
        damp,
        conv,
        clamped: clamped.load(std::sync::atomic::Ordering::Relaxed),
    })
}

/// Composite Simpson prefix sums over equally spaced samples; odd prefixes
/// use the third-order three-point rule on the trailing interval pair.
fn cumulative_simpson(f: &[f64], dt: f64) -> Vec<f64> {
    let n = f.len();
    let mut out = vec![0.0; n];
    for s in 1..n {
        if s % 2 == 0 {
            out[s] = out[s - 2] + dt / 3.0 * (f[s - 2] + 4.0 * f[s - 1] + f[s]);
        } else {
            out[s] = out[s - 1] + dt / 12.0 * (5.0 * f[s - 1] + 8.0 * f[s] - f.get(s + 1).copied().unwrap_or(2.0 * f[s] - f[s - 1]));
        }
    }
    out
}

/// Interpolate a face field at the characteristic feet.
pub fn at_feet(chars: &CharData, face: &DiskField) -> ShellField {
    let grid = chars.grid;
    let mut out = ShellField::zeros(&grid);
    for i in 0..=grid.n1 {
        for j in 0..grid.na {
            for k in 0..grid.ntau {
                out.data[[i, j, k]] =
                    face.interp(chars.beta2.data[[i, j, k]], chars.beta3.data[[i, j, k]]);
            }
        }
    }
    out
}

/// Bernoulli perturbation: constant along characteristics, with the
/// upstream trace as the face datum.
pub fn solve_bernoulli(chars: &CharData, b_trace: &DiskField) -> ShellField {
    at_feet(chars, b_trace)
}

/// The transported part of the entropy split:
/// `R4(y) = b2 (W6(feet) - W6(y')) + R2(feet) - (b2/b1) R1(y')`.
///
/// Evaluating the `R1` term at the node rather than at the feet makes the
/// split an exact transport of the face datum for a self-consistent
/// iterate; the difference is higher order and immaterial to the
/// contraction.
pub fn entropy_r4(
    c: &CoeffSet,
    chars: &CharData,
    w6: &DiskField,
    r1: &DiskField,
    r2f: &DiskField,
) -> ShellField {
    let grid = chars.grid;
    let w6_feet = at_feet(chars, w6);
    let r2_feet = at_feet(chars, r2f);
    let mut out = ShellField::zeros(&grid);
    for i in 0..=grid.n1 {
        for j in 0..grid.na {
            for k in 0..grid.ntau {
                out.data[[i, j, k]] = c.b2 * (w6_feet.data[[i, j, k]] - w6.data[[j, k]])
                    + r2_feet.data[[i, j, k]]
                    - c.b2 / c.b1 * r1.data[[j, k]];
            }
        }
    }
    out
}

/// First vorticity component from the damped transport:
/// `omega1 = R6(feet) e^{-int mu} + int H0 e^{-int mu}`.
pub fn solve_vorticity(chars: &CharData, r6: &DiskField) -> ShellField {
    let grid = chars.grid;
    let r6_feet = at_feet(chars, r6);
    let mut out = ShellField::zeros(&grid);
    for i in 0..=grid.n1 {
        for j in 0..grid.na {
            for k in 0..grid.ntau {
                out.data[[i, j, k]] = r6_feet.data[[i, j, k]] * chars.damp.data[[i, j, k]]
                    + chars.conv.data[[i, j, k]];
            }
        }
    }
    out
}

/// Wall-invariance diagnostic: trajectories launched exactly on the rim
/// must stay on it. Returns the largest excursion of `|beta| - 1`.
pub fn wall_invariance(co: &TransportCoeffs, steps_per_cell: usize) -> Result<f64> {
    let grid = co.k2.grid;
    let d1 = grid.d1();
    let dt = d1 / steps_per_cell as f64;
    let mut worst = 0.0f64;
    let slope = |t: f64, p: [f64; 2]| -> [f64; 2] {
        let r = (p[0] * p[0] + p[1] * p[1]).sqrt();
        let (q2, q3) = if r > 1.0 { (p[0] / r, p[1] / r) } else { (p[0], p[1]) };
        [co.k2.interp(t, q2, q3), co.k3.interp(t, q2, q3)]
    };
    for i in [grid.n1 / 2, grid.n1] {
        if i == 0 {
            continue;
        }
        let y1 = grid.y1(i);
        let nsteps = steps_per_cell * i;
        for k in 0..grid.ntau {
            let t0 = grid.tau(k);
            let mut p = [t0.cos(), t0.sin()];
            for s in 0..nsteps {
                let t = y1 - s as f64 * dt;
                let h = -dt;
                let k1 = slope(t, p);
                let k2 = slope(t + 0.5 * h, [p[0] + 0.5 * h * k1[0], p[1] + 0.5 * h * k1[1]]);
                let k3 = slope(t + 0.5 * h, [p[0] + 0.5 * h * k2[0], p[1] + 0.5 * h * k2[1]]);
                let k4 = slope(t + h, [p[0] + h * k3[0], p[1] + h * k3[1]]);
                p[0] += h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]);
                p[1] += h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]);
                worst = worst.max(((p[0] * p[0] + p[1] * p[1]).sqrt() - 1.0).abs());
            }
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::background::{coefficients, default_background};

    fn grid() -> GridSpec {
        let bg = default_background().unwrap();
        GridSpec::new(12, 12, 16, bg.r_s, bg.r2).unwrap()
    }

    fn zero_coeffs(g: &GridSpec) -> TransportCoeffs {
        TransportCoeffs {
            k2: ShellField::zeros(g),
            k3: ShellField::zeros(g),
            mu: ShellField::zeros(g),
            h0: ShellField::zeros(g),
        }
    }

    #[test]
    fn zero_velocity_gives_identity_foot_map() {
        let g = grid();
        let co = zero_coeffs(&g);
        let ch = build_characteristics(&co, 4, 1e-6).unwrap();
        for i in 0..=g.n1 {
            for j in 0..g.na {
                for k in 0..g.ntau {
                    let (y2, y3) = g.disk_point(j, k);
                    assert_eq!(ch.beta2.data[[i, j, k]], y2);
                    assert_eq!(ch.beta3.data[[i, j, k]], y3);
                    assert_eq!(ch.damp.data[[i, j, k]], 1.0);
                }
            }
        }
        assert_eq!(ch.clamped, 0);
    }

    #[test]
    fn constant_damping_closed_form() {
        // mu = const, H0 = 0, straight characteristics:
        // omega1 = R6 e^{-mu (y1 - rs)} up to quadrature error
        let g = grid();
        let mut co = zero_coeffs(&g);
        let mu = 0.83;
        for v in co.mu.data.iter_mut() {
            *v = mu;
        }
        let ch = build_characteristics(&co, 4, 1e-6).unwrap();
        let r6 = DiskField::from_fn(&g, |a, t| (1.0 - a * a) * (1.0 + 0.3 * t.cos()));
        let om = solve_vorticity(&ch, &r6);
        let mut worst = 0.0f64;
        for i in 0..=g.n1 {
            let want_factor = (-mu * (g.y1(i) - g.r_lo)).exp();
            for j in 0..g.na {
                for k in 0..g.ntau {
                    let want = r6.data[[j, k]] * want_factor;
                    worst = worst.max((om.data[[i, j, k]] - want).abs());
                }
            }
        }
        assert!(worst < 1e-12, "closed-form defect {worst}");
    }

    #[test]
    fn exponential_source_closed_form() {
        // mu = 0, H0 = c (constant): omega1 = c (y1 - rs)
        let g = grid();
        let mut co = zero_coeffs(&g);
        for v in co.h0.data.iter_mut() {
            *v = 0.37;
        }
        let ch = build_characteristics(&co, 4, 1e-6).unwrap();
        let om = solve_vorticity(&ch, &DiskField::zeros(&g));
        let mut worst = 0.0f64;
        for i in 0..=g.n1 {
            let want = 0.37 * (g.y1(i) - g.r_lo);
            for j in 0..g.na {
                for k in 0..g.ntau {
                    worst = worst.max((om.data[[i, j, k]] - want).abs());
                }
            }
        }
        assert!(worst < 1e-12, "source defect {worst}");
    }

    #[test]
    fn integrator_is_fourth_order_in_the_step() {
        // manufactured rotational velocity; foot maps at step h and h/2
        let g = grid();
        let mut co = zero_coeffs(&g);
        // rotated gradient of chi = 0.4 (1-|y'|^2)(0.7 + y2 m(y1)): rim
        // tangential, so trajectories stay inside the disk
        for i in 0..=g.n1 {
            let m = (1.3 * g.y1(i)).sin();
            for j in 0..g.na {
                for k in 0..g.ntau {
                    let (y2, y3) = g.disk_point(j, k);
                    let e = 1.0 - y2 * y2 - y3 * y3;
                    co.k2.data[[i, j, k]] = 0.4 * (-2.0 * y3) * (0.7 + y2 * m);
                    co.k3.data[[i, j, k]] =
                        -0.4 * ((-2.0 * y2) * (0.7 + y2 * m) + e * m);
                }
            }
        }
        let analytic = |t: f64, y2: f64, y3: f64| -> [f64; 2] {
            let m = (1.3 * t).sin();
            let e = 1.0 - y2 * y2 - y3 * y3;
            [
                0.4 * (-2.0 * y3) * (0.7 + y2 * m),
                -0.4 * ((-2.0 * y2) * (0.7 + y2 * m) + e * m),
            ]
        };
        let feet = |spc: usize| {
            let ch = build_characteristics_with(&co, analytic, spc, 1e-2).unwrap();
            (ch.beta2, ch.beta3)
        };
        let (a2, a3) = feet(1);
        let (b2, b3) = feet(2);
        let (c2, c3) = feet(4);
        let mut d1 = 0.0f64;
        let mut d2 = 0.0f64;
        for i in 0..=g.n1 {
            for j in 0..g.na {
                for k in 0..g.ntau {
                    d1 = d1
                        .max((a2.data[[i, j, k]] - b2.data[[i, j, k]]).abs())
                        .max((a3.data[[i, j, k]] - b3.data[[i, j, k]]).abs());
                    d2 = d2
                        .max((b2.data[[i, j, k]] - c2.data[[i, j, k]]).abs())
                        .max((b3.data[[i, j, k]] - c3.data[[i, j, k]]).abs());
                }
            }
        }
        let order = (d1 / d2).log2();
        assert!(order > 3.5, "integrator order {order} ({d1:.3e} -> {d2:.3e})");
    }

    #[test]
    fn divergence_free_velocity_preserves_area() {
        // K = rotated gradient of a stream function: the foot map preserves
        // the disk area element, so the Jacobian of beta is one
        // rotated gradient of chi = 0.3 (1-|y'|^2)(1 + 0.6 y2): divergence
        // free in the disk and tangential on the rim
        let distortion = |g: &GridSpec| -> f64 {
            let mut co = zero_coeffs(g);
            for i in 0..=g.n1 {
                for j in 0..g.na {
                    for k in 0..g.ntau {
                        let (y2, y3) = g.disk_point(j, k);
                        let e = 1.0 - y2 * y2 - y3 * y3;
                        co.k2.data[[i, j, k]] = 0.3 * (-2.0 * y3) * (1.0 + 0.6 * y2);
                        co.k3.data[[i, j, k]] =
                            -0.3 * ((-2.0 * y2) * (1.0 + 0.6 * y2) + 0.6 * e);
                    }
                }
            }
            let ch = build_characteristics(&co, 4, 1e-2).unwrap();
            let i = g.n1;
            let mut worst = 0.0f64;
            for j in 2..g.na - 2 {
                for k in 0..g.ntau {
                    let da = g.da();
                    let dt = g.dtau();
                    let a = g.a(j);
                    let t = g.tau(k);
                    let b2a = (ch.beta2.at(i, j as isize + 1, k as isize)
                        - ch.beta2.at(i, j as isize - 1, k as isize))
                        / (2.0 * da);
                    let b3a = (ch.beta3.at(i, j as isize + 1, k as isize)
                        - ch.beta3.at(i, j as isize - 1, k as isize))
                        / (2.0 * da);
                    let b2t = (ch.beta2.at(i, j as isize, k as isize + 1)
                        - ch.beta2.at(i, j as isize, k as isize - 1))
                        / (2.0 * dt);
                    let b3t = (ch.beta3.at(i, j as isize, k as isize + 1)
                        - ch.beta3.at(i, j as isize, k as isize - 1))
                        / (2.0 * dt);
                    let (s, c) = t.sin_cos();
                    let j22 = c * b2a - s / a * b2t;
                    let j23 = s * b2a + c / a * b2t;
                    let j32 = c * b3a - s / a * b3t;
                    let j33 = s * b3a + c / a * b3t;
                    let det = j22 * j33 - j23 * j32;
                    worst = worst.max((det - 1.0).abs());
                }
            }
            worst
        };
        let bg = default_background().unwrap();
        let d_coarse = distortion(&GridSpec::new(16, 24, 32, bg.r_s, bg.r2).unwrap());
        let d_fine = distortion(&GridSpec::new(32, 48, 64, bg.r_s, bg.r2).unwrap());
        assert!(
            d_fine < 0.35 * d_coarse,
            "area distortion did not shrink: {d_coarse} -> {d_fine}"
        );
    }

    #[test]
    fn transported_field_is_constant_along_characteristics() {
        // residual of the advection operator applied to the transported
        // Bernoulli field shrinks under refinement
        let bg = default_background().unwrap();
        let c = coefficients(&bg).unwrap();
        let mut errs = Vec::new();
        for (n1, na, nt) in [(8, 8, 12), (16, 16, 24)] {
            let g = GridSpec::new(n1, na, nt, bg.r_s, bg.r2).unwrap();
            // compatible iterate-like fields
            let amp = 0.05;
            let mut what: [ShellField; 5] = std::array::from_fn(|_| ShellField::zeros(&g));
            for i in 0..=g.n1 {
                let r = (1.1 * (g.y1(i) - g.r_lo)).cos();
                for j in 0..g.na {
                    for k in 0..g.ntau {
                        let a = g.a(j);
                        let t = g.tau(k);
                        let e = 1.0 - a * a;
                        let ua = amp * r * e.powi(3) * t.sin();
                        let ut = amp * r * (t.cos() * (e.powi(3) - 6.0 * a * a * e.powi(2)));
                        let (v2, v3) = crate::coords::from_polar_pair(ua, ut, t);
                        what[1].data[[i, j, k]] = v2;
                        what[2].data[[i, j, k]] = v3;
                    }
                }
            }
            let w6 = DiskField::zeros(&g);
            let tab = bg.table_plus(2048);
            let co = transport_coeffs(&c, &tab, &what, &w6);
            let ch = build_characteristics(&co, 4, 1e-6).unwrap();
            let face = DiskField::from_fn(&g, |a, t| (1.0 - a * a).powi(2) * (1.0 + 0.5 * a * t.cos()));
            let w5 = solve_bernoulli(&ch, &face);
            // residual D1 W5 + K . grad W5 (the transport operator in the
            // shifted chart divided by its radial coefficient)
            let w5_1 = ops::dy1(&w5);
            let w5_2 = ops::dy2(&w5);
            let w5_3 = ops::dy3(&w5);
            let mut res = ShellField::zeros(&g);
            for i in 0..=g.n1 {
                for j in 0..g.na {
                    for k in 0..g.ntau {
                        res.data[[i, j, k]] = w5_1.data[[i, j, k]]
                            + co.k2.data[[i, j, k]] * w5_2.data[[i, j, k]]
                            + co.k3.data[[i, j, k]] * w5_3.data[[i, j, k]];
                    }
                }
            }
            errs.push(ops::shell_l2(&res));
        }
        assert!(
            errs[1] < 0.45 * errs[0],
            "transport residual did not shrink: {errs:?}"
        );
    }

    #[test]
    fn symmetric_shock_displacement_leaves_only_transported_remainder() {
        // radially symmetric W6 and no tangential velocity: the feet stay
        // put, so R4 = R2 - (b2/b1) R1 evaluated pointwise
        let bg = default_background().unwrap();
        let c = coefficients(&bg).unwrap();
        let g = grid();
        let what: [ShellField; 5] = std::array::from_fn(|_| ShellField::zeros(&g));
        let w6 = DiskField::from_fn(&g, |a, _| 0.01 * (1.0 - a * a).powi(2));
        let tab = bg.table_plus(2048);
            let co = transport_coeffs(&c, &tab, &what, &w6);
        let ch = build_characteristics(&co, 4, 1e-6).unwrap();
        let r1 = DiskField::from_fn(&g, |a, t| 0.3 * a * t.cos());
        let r2f = DiskField::from_fn(&g, |a, t| 0.2 * a * t.sin());
        let r4 = entropy_r4(&c, &ch, &w6, &r1, &r2f);
        for i in 0..=g.n1 {
            for j in 0..g.na {
                for k in 0..g.ntau {
                    let want = r2f.data[[j, k]] - c.b2 / c.b1 * r1.data[[j, k]];
                    assert!((r4.data[[i, j, k]] - want).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn wall_trajectories_stay_on_the_rim() {
        let bg = default_background().unwrap();
        let c = coefficients(&bg).unwrap();
        let mut drifts = Vec::new();
        for (na, nt) in [(12, 16), (24, 32)] {
            let g = GridSpec::new(12, na, nt, bg.r_s, bg.r2).unwrap();
            let mut what: [ShellField; 5] = std::array::from_fn(|_| ShellField::zeros(&g));
            for i in 0..=g.n1 {
                let r = (1.3 * (g.y1(i) - g.r_lo)).cos();
                for j in 0..g.na {
                    for k in 0..g.ntau {
                        let a = g.a(j);
                        let t = g.tau(k);
                        let e = 1.0 - a * a;
                        let ua = 0.05 * r * e.powi(3) * t.sin();
                        let ut = 0.05 * r * t.cos() * (e.powi(3) - 6.0 * a * a * e.powi(2));
                        let (v2, v3) = crate::coords::from_polar_pair(ua, ut, t);
                        what[1].data[[i, j, k]] = v2;
                        what[2].data[[i, j, k]] = v3;
                    }
                }
            }
            let w6 = DiskField::zeros(&g);
            let tab = bg.table_plus(2048);
            let co = transport_coeffs(&c, &tab, &what, &w6);
            drifts.push(wall_invariance(&co, 4).unwrap());
        }
        // the slip structure keeps K_a(rim) = 0 up to interpolation error
        assert!(drifts[0] < 1e-3, "coarse drift {}", drifts[0]);
        assert!(drifts[1] < 0.3 * drifts[0], "drift did not shrink: {drifts:?}");
    }
}

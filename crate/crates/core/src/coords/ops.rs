//! Second-order discrete differential operators on the cylinder chart.
//!
//! All stencils are centered where possible. Crossing the disk center uses
//! the pole-parity closure (the neighbor of `a_0` across `a = 0` at azimuth
//! `tau` is the node at `(a_0, tau + pi)`); the wall `a = 1` and the radial
//! ends use one-sided second-order stencils.

use crate::error::Result;
use crate::field::{DiskField, ShellField};

// ---------------------------------------------------------------------------
// disk-plane stencils
// ---------------------------------------------------------------------------

/// d/da on a disk level; pole-parity below `a_0`, one-sided at the wall node.
#[inline]
pub(crate) fn disk_da_at(f: &DiskField, j: usize, k: usize) -> f64 {
    let g = &f.grid;
    let da = g.da();
    let j = j as isize;
    let k = k as isize;
    if j == g.na as isize - 1 {
        (3.0 * f.at(j, k) - 4.0 * f.at(j - 1, k) + f.at(j - 2, k)) / (2.0 * da)
    } else {
        (f.at(j + 1, k) - f.at(j - 1, k)) / (2.0 * da)
    }
}

/// d/dtau on a disk level (periodic centered).
#[inline]
pub(crate) fn disk_dtau_at(f: &DiskField, j: usize, k: usize) -> f64 {
    let g = &f.grid;
    let k = k as isize;
    (f.at(j as isize, k + 1) - f.at(j as isize, k - 1)) / (2.0 * g.dtau())
}

macro_rules! disk_map {
    ($f:expr, $g:expr, $body:expr) => {{
        let mut out = DiskField::zeros($g);
        for j in 0..$g.na {
            for k in 0..$g.ntau {
                out.data[[j, k]] = $body($f, j, k);
            }
        }
        out
    }};
}

pub fn disk_da(f: &DiskField) -> DiskField {
    disk_map!(f, &f.grid, disk_da_at)
}

pub fn disk_dtau(f: &DiskField) -> DiskField {
    disk_map!(f, &f.grid, disk_dtau_at)
}

/// Cartesian-disk derivative d/dy2 via the chain rule from `(a, tau)`.
pub fn disk_dy2(f: &DiskField) -> DiskField {
    let g = f.grid;
    disk_map!(f, &g, |f: &DiskField, j: usize, k: usize| {
        let (s, c) = g.tau(k).sin_cos();
        c * disk_da_at(f, j, k) - s / g.a(j) * disk_dtau_at(f, j, k)
    })
}

/// Cartesian-disk derivative d/dy3 via the chain rule from `(a, tau)`.
pub fn disk_dy3(f: &DiskField) -> DiskField {
    let g = f.grid;
    disk_map!(f, &g, |f: &DiskField, j: usize, k: usize| {
        let (s, c) = g.tau(k).sin_cos();
        s * disk_da_at(f, j, k) + c / g.a(j) * disk_dtau_at(f, j, k)
    })
}


/// Point value of d/dy2 on a disk field (chain rule, pole parity, one-sided
/// at the wall row).
#[inline]
pub fn disk_dy2_at(f: &DiskField, j: usize, k: usize) -> f64 {
    let g = &f.grid;
    let (s, c) = g.tau(k).sin_cos();
    c * disk_da_at(f, j, k) - s / g.a(j) * disk_dtau_at(f, j, k)
}

/// Point value of d/dy3 on a disk field.
#[inline]
pub fn disk_dy3_at(f: &DiskField, j: usize, k: usize) -> f64 {
    let g = &f.grid;
    let (s, c) = g.tau(k).sin_cos();
    s * disk_da_at(f, j, k) + c / g.a(j) * disk_dtau_at(f, j, k)
}

/// Quadratic one-sided extrapolation of a disk field to the wall `a = 1`.
pub fn disk_wall_value(f: &DiskField, k: usize) -> f64 {
    let g = &f.grid;
    let n = g.na;
    // nodes at 1 - da/2, 1 - 3da/2, 1 - 5da/2
    let (f0, f1, f2) = (f.data[[n - 1, k]], f.data[[n - 2, k]], f.data[[n - 3, k]]);
    1.875 * f0 - 1.25 * f1 + 0.375 * f2
}

/// One-sided second-order d/da of a disk field evaluated at the wall `a = 1`
/// (nodes sit at distances da/2, 3da/2, 5da/2 inside the wall).
pub fn disk_wall_da(f: &DiskField, k: usize) -> f64 {
    let g = &f.grid;
    let n = g.na;
    let da = g.da();
    let (f0, f1, f2) = (f.data[[n - 1, k]], f.data[[n - 2, k]], f.data[[n - 3, k]]);
    (2.0 * f0 - 3.0 * f1 + f2) / da
}

/// One-sided second-order (d/da)^2 of a disk field at the wall `a = 1`.
pub fn disk_wall_daa(f: &DiskField, k: usize) -> f64 {
    let g = &f.grid;
    let n = g.na;
    let da = g.da();
    let (f0, f1, f2, f3) = (
        f.data[[n - 1, k]],
        f.data[[n - 2, k]],
        f.data[[n - 3, k]],
        f.data[[n - 4, k]],
    );
    (2.5 * f0 - 6.5 * f1 + 5.5 * f2 - 1.5 * f3) / (da * da)
}

/// Area integral over the unit disk (midpoint rule in the cell-centered `a`).
pub fn disk_integral(f: &DiskField) -> f64 {
    let g = &f.grid;
    let w = g.da() * g.dtau();
    let mut acc = 0.0;
    for j in 0..g.na {
        let aj = g.a(j);
        for k in 0..g.ntau {
            acc += f.data[[j, k]] * aj * w;
        }
    }
    acc
}

/// Plain Cartesian divergence `d/dy2 V2 + d/dy3 V3` of a disk vector in
/// conservative polar flux form
/// `(1/a) d/da (a Va) + (1/a) d/dtau Vtau`,
/// with face values taken as two-point averages. The flux through the pole
/// face vanishes identically; the wall-face value is one-sided quadratic.
/// `extra_grad` adds the gradient of a scalar (for assembling `div grad`
/// compositions with the exact discrete duality of the disk Poisson solve).
pub fn disk_div_flux(
    va: &DiskField,
    vt: &DiskField,
    extra_grad: Option<&DiskField>,
) -> DiskField {
    let g = va.grid;
    let da = g.da();
    let dt = g.dtau();
    let na = g.na;
    let mut out = DiskField::zeros(&g);
    for k in 0..g.ntau {
        let ki = k as isize;
        // radial face fluxes a_face * Va_face, faces at a = j * da, j = 0..=na
        let mut flux = vec![0.0; na + 1];
        for jf in 1..na {
            let aface = jf as f64 * da;
            let mut v = 0.5 * (va.data[[jf - 1, k]] + va.data[[jf, k]]);
            if let Some(s) = extra_grad {
                v += (s.data[[jf, k]] - s.data[[jf - 1, k]]) / da;
            }
            flux[jf] = aface * v;
        }
        // pole face: zero radius kills the flux
        flux[0] = 0.0;
        // wall face at a = 1
        {
            let mut v = disk_wall_value(va, k);
            if let Some(s) = extra_grad {
                v += disk_wall_da(s, k);
            }
            flux[na] = v;
        }
        for j in 0..na {
            let aj = g.a(j);
            let radial = (flux[j + 1] - flux[j]) / (aj * da);
            // azimuthal face fluxes, face value = average; composed with the
            // optional gradient this is the compact 3-point stencil
            let mut azim = (vt.at(j as isize, ki + 1) - vt.at(j as isize, ki - 1)) / (2.0 * dt);
            if let Some(s) = extra_grad {
                azim += (s.at(j as isize, ki + 1) - 2.0 * s.data[[j, k]]
                    + s.at(j as isize, ki - 1))
                    / (aj * dt * dt);
            }
            out.data[[j, k]] = radial + azim / aj;
        }
    }
    out
}

// ---------------------------------------------------------------------------
// shell stencils
// ---------------------------------------------------------------------------

#[inline]
pub(crate) fn dy1_at(f: &ShellField, i: usize, j: usize, k: usize) -> f64 {
    let g = &f.grid;
    let d = g.d1();
    let (j, k) = (j as isize, k as isize);
    if i == 0 {
        (-3.0 * f.at(0, j, k) + 4.0 * f.at(1, j, k) - f.at(2, j, k)) / (2.0 * d)
    } else if i == g.n1 {
        (3.0 * f.at(i, j, k) - 4.0 * f.at(i - 1, j, k) + f.at(i - 2, j, k)) / (2.0 * d)
    } else {
        (f.at(i + 1, j, k) - f.at(i - 1, j, k)) / (2.0 * d)
    }
}

#[inline]
pub(crate) fn dy1y1_at(f: &ShellField, i: usize, j: usize, k: usize) -> f64 {
    let g = &f.grid;
    let d2 = g.d1() * g.d1();
    let (j, k) = (j as isize, k as isize);
    if i == 0 {
        (2.0 * f.at(0, j, k) - 5.0 * f.at(1, j, k) + 4.0 * f.at(2, j, k) - f.at(3, j, k)) / d2
    } else if i == g.n1 {
        (2.0 * f.at(i, j, k) - 5.0 * f.at(i - 1, j, k) + 4.0 * f.at(i - 2, j, k)
            - f.at(i - 3, j, k))
            / d2
    } else {
        (f.at(i + 1, j, k) - 2.0 * f.at(i, j, k) + f.at(i - 1, j, k)) / d2
    }
}

#[inline]
pub(crate) fn da_at(f: &ShellField, i: usize, j: usize, k: usize) -> f64 {
    let g = &f.grid;
    let da = g.da();
    let (j, k) = (j as isize, k as isize);
    if j == g.na as isize - 1 {
        (3.0 * f.at(i, j, k) - 4.0 * f.at(i, j - 1, k) + f.at(i, j - 2, k)) / (2.0 * da)
    } else {
        (f.at(i, j + 1, k) - f.at(i, j - 1, k)) / (2.0 * da)
    }
}

#[inline]
pub(crate) fn daa_at(f: &ShellField, i: usize, j: usize, k: usize) -> f64 {
    let g = &f.grid;
    let da2 = g.da() * g.da();
    let (j, k) = (j as isize, k as isize);
    if j == g.na as isize - 1 {
        (2.0 * f.at(i, j, k) - 5.0 * f.at(i, j - 1, k) + 4.0 * f.at(i, j - 2, k)
            - f.at(i, j - 3, k))
            / da2
    } else {
        (f.at(i, j + 1, k) - 2.0 * f.at(i, j, k) + f.at(i, j - 1, k)) / da2
    }
}

#[inline]
pub(crate) fn dtau_at(f: &ShellField, i: usize, j: usize, k: usize) -> f64 {
    let g = &f.grid;
    let (j, k) = (j as isize, k as isize);
    (f.at(i, j, k + 1) - f.at(i, j, k - 1)) / (2.0 * g.dtau())
}

#[inline]
pub(crate) fn dtautau_at(f: &ShellField, i: usize, j: usize, k: usize) -> f64 {
    let g = &f.grid;
    let dt2 = g.dtau() * g.dtau();
    let (j, k) = (j as isize, k as isize);
    (f.at(i, j, k + 1) - 2.0 * f.at(i, j, k) + f.at(i, j, k - 1)) / dt2
}

#[inline]
pub(crate) fn dy2_at(f: &ShellField, i: usize, j: usize, k: usize) -> f64 {
    let g = &f.grid;
    let (s, c) = g.tau(k).sin_cos();
    c * da_at(f, i, j, k) - s / g.a(j) * dtau_at(f, i, j, k)
}

#[inline]
pub(crate) fn dy3_at(f: &ShellField, i: usize, j: usize, k: usize) -> f64 {
    let g = &f.grid;
    let (s, c) = g.tau(k).sin_cos();
    s * da_at(f, i, j, k) + c / g.a(j) * dtau_at(f, i, j, k)
}

macro_rules! shell_map {
    ($g:expr, $body:expr) => {{
        let mut out = ShellField::zeros($g);
        for i in 0..=$g.n1 {
            for j in 0..$g.na {
                for k in 0..$g.ntau {
                    out.data[[i, j, k]] = $body(i, j, k);
                }
            }
        }
        out
    }};
}

pub fn dy1(f: &ShellField) -> ShellField {
    shell_map!(&f.grid, |i, j, k| dy1_at(f, i, j, k))
}

pub fn da(f: &ShellField) -> ShellField {
    shell_map!(&f.grid, |i, j, k| da_at(f, i, j, k))
}

pub fn dtau(f: &ShellField) -> ShellField {
    shell_map!(&f.grid, |i, j, k| dtau_at(f, i, j, k))
}

pub fn dy2(f: &ShellField) -> ShellField {
    shell_map!(&f.grid, |i, j, k| dy2_at(f, i, j, k))
}

pub fn dy3(f: &ShellField) -> ShellField {
    shell_map!(&f.grid, |i, j, k| dy3_at(f, i, j, k))
}


/// Volume-weighted L2 norm of a shell field; the volume element of the chart
/// is `sigma^2 a` with `sigma = 2 y1 / (1 + a^2)`.
pub fn shell_l2(f: &ShellField) -> f64 {
    let g = &f.grid;
    let w0 = g.d1() * g.da() * g.dtau();
    let mut acc = 0.0;
    for i in 0..=g.n1 {
        let scale = if i == 0 || i == g.n1 { 0.5 } else { 1.0 };
        for j in 0..g.na {
            let a = g.a(j);
            let sigma = 2.0 * g.y1(i) / (1.0 + a * a);
            let w = scale * sigma * sigma * a * w0;
            for k in 0..g.ntau {
                acc += w * f.data[[i, j, k]] * f.data[[i, j, k]];
            }
        }
    }
    acc.sqrt()
}

/// Divergence of a frame vector field `(U1, U2, U3)`:
/// `d/dz1 U1 + (1+|z'|^2)/(2 z1) (d/dz2 U2 + d/dz3 U3) + 2 U1/z1 - (z.U')/z1`.
pub fn divergence(u1: &ShellField, u2: &ShellField, u3: &ShellField) -> Result<ShellField> {
    let g = u1.grid;
    u2.check_grid(&g)?;
    u3.check_grid(&g)?;
    Ok(shell_map!(&g, |i, j, k| {
        let y1 = g.y1(i);
        let (y2, y3) = g.disk_point(j, k);
        let w = 1.0 + y2 * y2 + y3 * y3;
        dy1_at(u1, i, j, k)
            + w / (2.0 * y1) * (dy2_at(u2, i, j, k) + dy3_at(u3, i, j, k))
            + 2.0 * u1.data[[i, j, k]] / y1
            - (y2 * u2.data[[i, j, k]] + y3 * u3.data[[i, j, k]]) / y1
    }))
}

/// Curl of a frame vector field, returned in frame components.
pub fn curl(
    u1: &ShellField,
    u2: &ShellField,
    u3: &ShellField,
) -> Result<[ShellField; 3]> {
    let g = u1.grid;
    u2.check_grid(&g)?;
    u3.check_grid(&g)?;
    let w1 = shell_map!(&g, |i, j, k| {
        let y1 = g.y1(i);
        let (y2, y3) = g.disk_point(j, k);
        let w = 1.0 + y2 * y2 + y3 * y3;
        w / (2.0 * y1) * (dy2_at(u3, i, j, k) - dy3_at(u2, i, j, k))
            + (y3 * u2.data[[i, j, k]] - y2 * u3.data[[i, j, k]]) / y1
    });
    let w2 = shell_map!(&g, |i, j, k| {
        let y1 = g.y1(i);
        let (y2, y3) = g.disk_point(j, k);
        let w = 1.0 + y2 * y2 + y3 * y3;
        w / (2.0 * y1) * dy3_at(u1, i, j, k) - dy1_at(u3, i, j, k) - u3.data[[i, j, k]] / y1
    });
    let w3 = shell_map!(&g, |i, j, k| {
        let y1 = g.y1(i);
        let (y2, y3) = g.disk_point(j, k);
        let w = 1.0 + y2 * y2 + y3 * y3;
        dy1_at(u2, i, j, k) + u2.data[[i, j, k]] / y1 - w / (2.0 * y1) * dy2_at(u1, i, j, k)
    });
    Ok([w1, w2, w3])
}

/// Laplace operator `d2/dz1^2 + (2/z1) d/dz1 + (1+|z'|^2)^2/(4 z1^2) Dd`,
/// with `Dd` the flat disk Laplacian in polar form.
pub fn laplacian(f: &ShellField) -> ShellField {
    let g = f.grid;
    shell_map!(&g, |i, j, k| {
        let y1 = g.y1(i);
        let a = g.a(j);
        let w = 1.0 + a * a;
        let disk = daa_at(f, i, j, k) + da_at(f, i, j, k) / a + dtautau_at(f, i, j, k) / (a * a);
        dy1y1_at(f, i, j, k) + 2.0 / y1 * dy1_at(f, i, j, k) + w * w / (4.0 * y1 * y1) * disk
    })
}

/// Advection `u . grad = U1 d/dz1 + (1+|z'|^2)/(2 z1)(U2 d/dz2 + U3 d/dz3)`
/// applied to a scalar.
pub fn advect(
    u1: &ShellField,
    u2: &ShellField,
    u3: &ShellField,
    f: &ShellField,
) -> Result<ShellField> {
    let g = f.grid;
    u1.check_grid(&g)?;
    u2.check_grid(&g)?;
    u3.check_grid(&g)?;
    Ok(shell_map!(&g, |i, j, k| {
        let y1 = g.y1(i);
        let (y2, y3) = g.disk_point(j, k);
        let w = 1.0 + y2 * y2 + y3 * y3;
        u1.data[[i, j, k]] * dy1_at(f, i, j, k)
            + w / (2.0 * y1)
                * (u2.data[[i, j, k]] * dy2_at(f, i, j, k)
                    + u3.data[[i, j, k]] * dy3_at(f, i, j, k))
    }))
}

/// Shell gradient in frame components:
/// `(d/dz1 f, (1+|z'|^2)/(2 z1) d/dz2 f, (1+|z'|^2)/(2 z1) d/dz3 f)`.
pub fn grad_shell(f: &ShellField) -> [ShellField; 3] {
    let g = f.grid;
    let g1 = dy1(f);
    let g2 = shell_map!(&g, |i, j, k| {
        let (y2, y3) = g.disk_point(j, k);
        (1.0 + y2 * y2 + y3 * y3) / (2.0 * g.y1(i)) * dy2_at(f, i, j, k)
    });
    let g3 = shell_map!(&g, |i, j, k| {
        let (y2, y3) = g.disk_point(j, k);
        (1.0 + y2 * y2 + y3 * y3) / (2.0 * g.y1(i)) * dy3_at(f, i, j, k)
    });
    [g1, g2, g3]
}

/// Convert Cartesian-disk components of a shell vector to polar components.
pub fn to_polar_components(u2: &ShellField, u3: &ShellField) -> (ShellField, ShellField) {
    let g = u2.grid;
    let mut ua = ShellField::zeros(&g);
    let mut ut = ShellField::zeros(&g);
    for i in 0..=g.n1 {
        for j in 0..g.na {
            for k in 0..g.ntau {
                let (pa, pt) =
                    super::to_polar_pair(u2.data[[i, j, k]], u3.data[[i, j, k]], g.tau(k));
                ua.data[[i, j, k]] = pa;
                ut.data[[i, j, k]] = pt;
            }
        }
    }
    (ua, ut)
}

/// Convert a disk vector given in Cartesian components to polar components.
pub fn disk_to_polar(v2: &DiskField, v3: &DiskField) -> (DiskField, DiskField) {
    let g = v2.grid;
    let mut va = DiskField::zeros(&g);
    let mut vt = DiskField::zeros(&g);
    for j in 0..g.na {
        for k in 0..g.ntau {
            let (pa, pt) = super::to_polar_pair(v2.data[[j, k]], v3.data[[j, k]], g.tau(k));
            va.data[[j, k]] = pa;
            vt.data[[j, k]] = pt;
        }
    }
    (va, vt)
}

/// Operator selector mirroring the module contract.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OperatorKind {
    Div,
    Curl,
    Laplacian,
    Advect,
}

/// Uniform entry point over the four chart operators. `fields` supplies, in
/// order: the vector components for `Div`/`Curl`, the velocity triple plus
/// the advected scalar for `Advect`, or the single scalar for `Laplacian`.
pub fn apply_operator(kind: OperatorKind, fields: &[&ShellField]) -> Result<Vec<ShellField>> {
    match kind {
        OperatorKind::Div => {
            let [u1, u2, u3] = take3(fields)?;
            Ok(vec![divergence(u1, u2, u3)?])
        }
        OperatorKind::Curl => {
            let [u1, u2, u3] = take3(fields)?;
            Ok(curl(u1, u2, u3)?.into())
        }
        OperatorKind::Laplacian => match fields {
            [f] => Ok(vec![laplacian(f)]),
            _ => Err(crate::error::Error::Grid(
                "laplacian expects one scalar field".into(),
            )),
        },
        OperatorKind::Advect => match fields {
            [u1, u2, u3, f] => Ok(vec![advect(u1, u2, u3, f)?]),
            _ => Err(crate::error::Error::Grid(
                "advect expects a velocity triple and a scalar".into(),
            )),
        },
    }
}

fn take3<'a>(fields: &[&'a ShellField]) -> Result<[&'a ShellField; 3]> {
    match fields {
        [a, b, c] => Ok([a, b, c]),
        _ => Err(crate::error::Error::Grid(
            "operator expects exactly three components".into(),
        )),
    }
}

/// Evaluate a shell field and its polar partner fields at the wall by
/// one-sided quadratic extrapolation; used by the compatibility reports.
pub fn shell_wall_value(f: &ShellField, i: usize, k: usize) -> f64 {
    let n = f.grid.na;
    let (f0, f1, f2) = (
        f.data[[i, n - 1, k]],
        f.data[[i, n - 2, k]],
        f.data[[i, n - 3, k]],
    );
    1.875 * f0 - 1.25 * f1 + 0.375 * f2
}

/// One-sided second-order d/da of a shell field at the wall.
pub fn shell_wall_da(f: &ShellField, i: usize, k: usize) -> f64 {
    let g = &f.grid;
    let n = g.na;
    let da = g.da();
    let (f0, f1, f2) = (
        f.data[[i, n - 1, k]],
        f.data[[i, n - 2, k]],
        f.data[[i, n - 3, k]],
    );
    (2.0 * f0 - 3.0 * f1 + f2) / da
}

/// One-sided second-order (d/da)^2 of a shell field at the wall.
pub fn shell_wall_daa(f: &ShellField, i: usize, k: usize) -> f64 {
    let g = &f.grid;
    let n = g.na;
    let da = g.da();
    let (f0, f1, f2, f3) = (
        f.data[[i, n - 1, k]],
        f.data[[i, n - 2, k]],
        f.data[[i, n - 3, k]],
        f.data[[i, n - 4, k]],
    );
    (3.0 * f0 - 7.0 * f1 + 5.0 * f2 - f3) / (da * da)
}

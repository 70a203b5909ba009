//! File exports: RFC-4180-style CSV with a header row, legacy VTK ASCII for
//! external viewers, and a plain-CSV solution checkpoint that reloads
//! bit-exactly (floats are printed with Rust's shortest round-trip
//! formatting).

use crate::background::RadialBackground;
use crate::coords::{from_projection, ProjPoint};
use crate::driver::{FlowIterate, Problem, SolveReport};
use crate::error::{Error, Result};
use crate::field::{DiskField, ShellField};
use crate::grid::GridSpec;
use crate::transport::d0_field;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

fn write_file(path: &Path, content: &str) -> Result<()> {
    let mut f = std::fs::File::create(path)
        .map_err(|e| Error::Config(format!("cannot create {}: {e}", path.display())))?;
    f.write_all(content.as_bytes())
        .map_err(|e| Error::Config(format!("write {}: {e}", path.display())))?;
    Ok(())
}

fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))
}

/// Radial background tables plus the shock/interval line.
pub fn background_csv(bg: &RadialBackground, samples: usize) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# r_s,{},P1,{},P2,{}", bg.r_s, bg.p_endpoints.0, bg.p_endpoints.1);
    let _ = writeln!(s, "branch,r,U,rho,P,Ma");
    let gamma = bg.gas.gamma;
    for i in 0..=samples {
        let r = bg.r1 + (bg.r2 - bg.r1) * i as f64 / samples as f64;
        let (u, rho, p) = bg.minus(r);
        let ma = u / (gamma * p / rho).sqrt();
        let _ = writeln!(s, "supersonic,{r},{u},{rho},{p},{ma}");
    }
    for i in 0..=samples {
        let r = bg.r_s + (bg.r2 - bg.r_s) * i as f64 / samples as f64;
        let (u, rho, p) = bg.plus(r);
        let ma = u / (gamma * p / rho).sqrt();
        let _ = writeln!(s, "subsonic,{r},{u},{rho},{p},{ma}");
    }
    s
}

/// Physical downstream fields of a solution on the computational grid.
pub struct PhysicalFields {
    pub u1: ShellField,
    pub u2: ShellField,
    pub u3: ShellField,
    pub p: ShellField,
    pub k: ShellField,
    pub rho: ShellField,
    pub ma: ShellField,
    pub b: ShellField,
    /// physical radius of each node
    pub z1: ShellField,
}

pub fn physical_fields(prob: &Problem, sol: &FlowIterate) -> PhysicalFields {
    let grid = &prob.grid;
    let bg = &prob.bg;
    let gamma = bg.gas.gamma;
    let d0 = d0_field(grid, &sol.w6);
    let mut out = PhysicalFields {
        u1: ShellField::zeros(grid),
        u2: sol.w[1].clone(),
        u3: sol.w[2].clone(),
        p: ShellField::zeros(grid),
        k: ShellField::zeros(grid),
        rho: ShellField::zeros(grid),
        ma: ShellField::zeros(grid),
        b: ShellField::zeros(grid),
        z1: d0.clone(),
    };
    for i in 0..=grid.n1 {
        for j in 0..grid.na {
            for k in 0..grid.ntau {
                let (ub, _, _) = prob.tab.eval(d0.data[[i, j, k]]);
                let v1 = ub + sol.w[0].data[[i, j, k]];
                let (v2, v3) = (sol.w[1].data[[i, j, k]], sol.w[2].data[[i, j, k]]);
                let kk = bg.k_plus + sol.w[3].data[[i, j, k]];
                let bb = bg.bernoulli + sol.w[4].data[[i, j, k]];
                let head = bb - 0.5 * (v1 * v1 + v2 * v2 + v3 * v3);
                let rr = ((gamma - 1.0) / (gamma * kk) * head).powf(1.0 / (gamma - 1.0));
                let pp = kk * rr.powf(gamma);
                let c = (gamma * pp / rr).sqrt();
                out.u1.data[[i, j, k]] = v1;
                out.p.data[[i, j, k]] = pp;
                out.k.data[[i, j, k]] = kk;
                out.rho.data[[i, j, k]] = rr;
                out.ma.data[[i, j, k]] = (v1 * v1 + v2 * v2 + v3 * v3).sqrt() / c;
                out.b.data[[i, j, k]] = bb;
            }
        }
    }
    out
}

/// CSV of the downstream fields on the computational grid.
pub fn fields_csv(grid: &GridSpec, ph: &PhysicalFields) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "i1,ja,kt,y1,a,tau,z1,U1,U2,U3,P,K,rho,Ma,B");
    for i in 0..=grid.n1 {
        for j in 0..grid.na {
            for k in 0..grid.ntau {
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                    i,
                    j,
                    k,
                    grid.y1(i),
                    grid.a(j),
                    grid.tau(k),
                    ph.z1.data[[i, j, k]],
                    ph.u1.data[[i, j, k]],
                    ph.u2.data[[i, j, k]],
                    ph.u3.data[[i, j, k]],
                    ph.p.data[[i, j, k]],
                    ph.k.data[[i, j, k]],
                    ph.rho.data[[i, j, k]],
                    ph.ma.data[[i, j, k]],
                    ph.b.data[[i, j, k]],
                );
            }
        }
    }
    s
}

/// Shock surface as CSV.
pub fn shock_csv(bg: &RadialBackground, w6: &DiskField) -> String {
    let g = &w6.grid;
    let mut s = String::new();
    let _ = writeln!(s, "ja,kt,a,tau,xi,w6");
    for j in 0..g.na {
        for k in 0..g.ntau {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                j,
                k,
                g.a(j),
                g.tau(k),
                bg.r_s + w6.data[[j, k]],
                w6.data[[j, k]],
            );
        }
    }
    s
}

/// Legacy-VTK ASCII structured grid of the downstream region in physical
/// Cartesian coordinates, azimuthally closed by repeating the seam line.
pub fn fields_vtk(grid: &GridSpec, ph: &PhysicalFields) -> String {
    let (n1, na, nt) = (grid.n1 + 1, grid.na, grid.ntau + 1);
    let mut s = String::new();
    let _ = writeln!(s, "# vtk DataFile Version 3.0");
    let _ = writeln!(s, "downstream flow");
    let _ = writeln!(s, "ASCII");
    let _ = writeln!(s, "DATASET STRUCTURED_GRID");
    let _ = writeln!(s, "DIMENSIONS {nt} {na} {n1}");
    let _ = writeln!(s, "POINTS {} double", n1 * na * nt);
    for i in 0..n1 {
        for j in 0..na {
            for k in 0..nt {
                let kk = k % grid.ntau;
                let (y2, y3) = grid.disk_point(j, kk);
                let p = ProjPoint { z1: ph.z1.data[[i, j, kk]], z2: y2, z3: y3 };
                let x = from_projection(&p).unwrap_or([0.0; 3]);
                let _ = writeln!(s, "{} {} {}", x[0], x[1], x[2]);
            }
        }
    }
    let _ = writeln!(s, "POINT_DATA {}", n1 * na * nt);
    let scalars: [(&str, &ShellField); 5] = [
        ("P", &ph.p),
        ("rho", &ph.rho),
        ("Ma", &ph.ma),
        ("K", &ph.k),
        ("B", &ph.b),
    ];
    for (name, f) in scalars {
        let _ = writeln!(s, "SCALARS {name} double 1");
        let _ = writeln!(s, "LOOKUP_TABLE default");
        for i in 0..n1 {
            for j in 0..na {
                for k in 0..nt {
                    let _ = writeln!(s, "{}", f.data[[i, j, k % grid.ntau]]);
                }
            }
        }
    }
    // velocity pushed to Cartesian components through the frame
    let _ = writeln!(s, "VECTORS velocity double");
    for i in 0..n1 {
        for j in 0..na {
            for k in 0..nt {
                let kk = k % grid.ntau;
                let (y2, y3) = grid.disk_point(j, kk);
                let fr = crate::coords::frame(&ProjPoint {
                    z1: ph.z1.data[[i, j, kk]],
                    z2: y2,
                    z3: y3,
                });
                let (v1, v2, v3) = (
                    ph.u1.data[[i, j, kk]],
                    ph.u2.data[[i, j, kk]],
                    ph.u3.data[[i, j, kk]],
                );
                let x = [
                    v1 * fr.e1[0] + v2 * fr.e2[0] + v3 * fr.e3[0],
                    v1 * fr.e1[1] + v2 * fr.e2[1] + v3 * fr.e3[1],
                    v1 * fr.e1[2] + v2 * fr.e2[2] + v3 * fr.e3[2],
                ];
                let _ = writeln!(s, "{} {} {}", x[0], x[1], x[2]);
            }
        }
    }
    s
}

/// Shock surface as triangulated legacy-VTK polydata with a pole fan.
pub fn shock_vtk(bg: &RadialBackground, w6: &DiskField) -> String {
    let g = &w6.grid;
    let (na, nt) = (g.na, g.ntau);
    let n_pts = na * nt + 1; // plus the pole point
    let mut s = String::new();
    let _ = writeln!(s, "# vtk DataFile Version 3.0");
    let _ = writeln!(s, "shock surface");
    let _ = writeln!(s, "ASCII");
    let _ = writeln!(s, "DATASET POLYDATA");
    let _ = writeln!(s, "POINTS {n_pts} double");
    for j in 0..na {
        for k in 0..nt {
            let (y2, y3) = g.disk_point(j, k);
            let p = ProjPoint { z1: bg.r_s + w6.data[[j, k]], z2: y2, z3: y3 };
            let x = from_projection(&p).unwrap_or([0.0; 3]);
            let _ = writeln!(s, "{} {} {}", x[0], x[1], x[2]);
        }
    }
    // pole point: average of the innermost ring
    let mut xi0 = 0.0;
    for k in 0..nt {
        xi0 += bg.r_s + w6.data[[0, k]];
    }
    xi0 /= nt as f64;
    let _ = writeln!(s, "{xi0} 0 0");
    let idx = |j: usize, k: usize| j * nt + (k % nt);
    let n_tris = nt + 2 * (na - 1) * nt;
    let _ = writeln!(s, "POLYGONS {n_tris} {}", 4 * n_tris);
    for k in 0..nt {
        let _ = writeln!(s, "3 {} {} {}", na * nt, idx(0, k), idx(0, k + 1));
    }
    for j in 0..na - 1 {
        for k in 0..nt {
            let _ = writeln!(s, "3 {} {} {}", idx(j, k), idx(j + 1, k), idx(j + 1, k + 1));
            let _ = writeln!(s, "3 {} {} {}", idx(j, k), idx(j + 1, k + 1), idx(j, k + 1));
        }
    }
    let _ = writeln!(s, "POINT_DATA {n_pts}");
    let _ = writeln!(s, "SCALARS displacement double 1");
    let _ = writeln!(s, "LOOKUP_TABLE default");
    for j in 0..na {
        for k in 0..nt {
            let _ = writeln!(s, "{}", w6.data[[j, k]]);
        }
    }
    let _ = writeln!(s, "{}", xi0 - bg.r_s);
    s
}

/// Machine-readable residual report.
pub fn report_csv(rep: &SolveReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "name,value");
    let _ = writeln!(s, "iterations,{}", rep.iterations);
    for (i, d) in rep.deltas.iter().enumerate() {
        let _ = writeln!(s, "delta_{i},{d}");
    }
    for (i, r) in rep.ratios.iter().enumerate() {
        let _ = writeln!(s, "ratio_{i},{r}");
    }
    let _ = writeln!(s, "xi_norm,{}", rep.xi_norm);
    let _ = writeln!(s, "w_sup,{}", rep.w_sup);
    let _ = writeln!(s, "w6_sup,{}", rep.w6_sup);
    let _ = writeln!(s, "upsilon_sup,{}", rep.upsilon_sup);
    let _ = writeln!(s, "fixed_point_drift,{}", rep.fixed_point_drift);
    for (i, v) in rep.euler_residual.iter().enumerate() {
        let _ = writeln!(s, "euler_{i},{v}");
    }
    for (i, v) in rep.rh_residual.iter().enumerate() {
        let _ = writeln!(s, "rh_{i},{v}");
    }
    let _ = writeln!(s, "f2_sup,{}", rep.f_system.0);
    let _ = writeln!(s, "f3_sup,{}", rep.f_system.1);
    let _ = writeln!(s, "entropy_margin,{}", rep.entropy_margin);
    let _ = writeln!(s, "entropy_margin_bg,{}", rep.entropy_margin_bg);
    for (name, v) in &rep.wall {
        let _ = writeln!(s, "wall_{name},{v}");
    }
    for (i, v) in rep.dc_residual.iter().enumerate() {
        let _ = writeln!(s, "dc_{i},{v}");
    }
    let _ = writeln!(s, "div_in,{}", rep.div_drop.0);
    let _ = writeln!(s, "div_out,{}", rep.div_drop.1);
    let _ = writeln!(s, "lsq_residual,{}", rep.lsq_residual);
    let _ = writeln!(s, "ms_defect,{}", rep.ms_defect);
    s
}

/// Save a solution checkpoint: fields, shock displacement, and grid header.
pub fn save_checkpoint(dir: &Path, prob: &Problem, sol: &FlowIterate) -> Result<()> {
    let grid = &prob.grid;
    let mut s = String::new();
    let _ = writeln!(s, "i1,ja,kt,W1,W2,W3,W4,W5");
    for i in 0..=grid.n1 {
        for j in 0..grid.na {
            for k in 0..grid.ntau {
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{},{},{}",
                    i,
                    j,
                    k,
                    sol.w[0].data[[i, j, k]],
                    sol.w[1].data[[i, j, k]],
                    sol.w[2].data[[i, j, k]],
                    sol.w[3].data[[i, j, k]],
                    sol.w[4].data[[i, j, k]],
                );
            }
        }
    }
    write_file(&dir.join("solution.csv"), &s)?;
    let mut s = String::new();
    let _ = writeln!(s, "ja,kt,W6");
    for j in 0..grid.na {
        for k in 0..grid.ntau {
            let _ = writeln!(s, "{},{},{}", j, k, sol.w6.data[[j, k]]);
        }
    }
    write_file(&dir.join("shock_w6.csv"), &s)?;
    Ok(())
}

/// Load a checkpoint back onto the problem's grid.
pub fn load_checkpoint(dir: &Path, grid: &GridSpec) -> Result<FlowIterate> {
    let mut sol = FlowIterate::zeros(grid);
    let body = read_file(&dir.join("solution.csv"))?;
    for (ln, line) in body.lines().enumerate().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 8 {
            return Err(Error::Config(format!("solution.csv line {ln}: bad column count")));
        }
        let i: usize = cols[0].parse().map_err(|_| bad(ln))?;
        let j: usize = cols[1].parse().map_err(|_| bad(ln))?;
        let k: usize = cols[2].parse().map_err(|_| bad(ln))?;
        if i > grid.n1 || j >= grid.na || k >= grid.ntau {
            return Err(Error::Config(format!("solution.csv line {ln}: index off-grid")));
        }
        for q in 0..5 {
            sol.w[q].data[[i, j, k]] = cols[3 + q].parse().map_err(|_| bad(ln))?;
        }
    }
    let body = read_file(&dir.join("shock_w6.csv"))?;
    for (ln, line) in body.lines().enumerate().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 3 {
            return Err(Error::Config(format!("shock_w6.csv line {ln}: bad column count")));
        }
        let j: usize = cols[0].parse().map_err(|_| bad(ln))?;
        let k: usize = cols[1].parse().map_err(|_| bad(ln))?;
        sol.w6.data[[j, k]] = cols[2].parse().map_err(|_| bad(ln))?;
    }
    Ok(sol)
}

fn bad(ln: usize) -> Error {
    Error::Config(format!("checkpoint parse error at line {ln}"))
}

pub fn write_named(dir: &Path, name: &str, content: &str) -> Result<()> {
    std::fs::create_dir_all(dir)
        .map_err(|e| Error::Config(format!("mkdir {}: {e}", dir.display())))?;
    write_file(&dir.join(name), content)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::driver::{setup_problem, FlowIterate, SolverParams};

    #[test]
    fn checkpoint_round_trips_bit_exact() {
        let params = SolverParams { epsilon: 1e-3, n1: 8, na: 6, ntau: 8, ..Default::default() };
        let prob = setup_problem(params).unwrap();
        let mut sol = FlowIterate::zeros(&prob.grid);
        // irrational-ish values exercise the shortest round-trip printing
        let g = prob.grid;
        for i in 0..=g.n1 {
            for j in 0..g.na {
                for k in 0..g.ntau {
                    for q in 0..5 {
                        sol.w[q].data[[i, j, k]] =
                            ((i * 31 + j * 7 + k * 3 + q) as f64).sin() * 1e-3;
                    }
                }
            }
        }
        for j in 0..g.na {
            for k in 0..g.ntau {
                sol.w6.data[[j, k]] = ((j * 13 + k) as f64).cos() * 1e-4;
            }
        }
        let dir = std::env::temp_dir().join("hemishock_ckpt_test");
        std::fs::create_dir_all(&dir).unwrap();
        save_checkpoint(&dir, &prob, &sol).unwrap();
        let back = load_checkpoint(&dir, &prob.grid).unwrap();
        for q in 0..5 {
            assert_eq!(sol.w[q].data, back.w[q].data);
        }
        assert_eq!(sol.w6.data, back.w6.data);
    }

    #[test]
    fn vtk_and_csv_exports_have_expected_shape() {
        let params = SolverParams { epsilon: 0.0, n1: 8, na: 6, ntau: 8, ..Default::default() };
        let prob = setup_problem(params).unwrap();
        let sol = FlowIterate::zeros(&prob.grid);
        let ph = physical_fields(&prob, &sol);
        let csv = fields_csv(&prob.grid, &ph);
        assert_eq!(csv.lines().count(), 1 + 9 * 6 * 8);
        assert!(csv.starts_with("i1,ja,kt,"));
        let vtk = fields_vtk(&prob.grid, &ph);
        assert!(vtk.contains("DATASET STRUCTURED_GRID"));
        assert!(vtk.contains("VECTORS velocity double"));
        let sv = shock_vtk(&prob.bg, &sol.w6);
        assert!(sv.contains("DATASET POLYDATA"));
        let bgc = background_csv(&prob.bg, 16);
        assert!(bgc.lines().count() > 30);
    }
}

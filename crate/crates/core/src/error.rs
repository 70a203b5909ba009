use thiserror::Error;

/// Errors produced by the solver pipeline.
#[derive(Error, Debug, Clone)]
pub enum Error {
    #[error("point outside the coordinate chart: {0}")]
    Domain(String),

    #[error("field shape does not match grid: {0}")]
    Grid(String),

    #[error("vacuum state: B - |U|^2/2 = {0} is not positive")]
    Vacuum(f64),

    #[error("flow choked at r = {r}: no real density root (defect {defect:.3e})")]
    Choked { r: f64, defect: f64 },

    #[error("requested {branch} branch root does not exist at r = {r}")]
    Branch { branch: &'static str, r: f64 },

    #[error("upstream state is not supersonic (Ma = {0})")]
    NotSupersonic(f64),

    #[error("exit pressure {pe} outside admissible interval ({p1}, {p2})")]
    PressureOutOfRange { pe: f64, p1: f64, p2: f64 },

    #[error("radial Mach number dropped to {ma} at station z1 = {z1} during the march")]
    Sonic { z1: f64, ma: f64 },

    #[error("marching step {dz} exceeds the characteristic bound {bound} at z1 = {z1}")]
    Cfl { z1: f64, dz: f64, bound: f64 },

    #[error("shock position {xi} leaves the shell [{lo}, {hi}]")]
    Range { xi: f64, lo: f64, hi: f64 },

    #[error("degenerate pressure jump: |J| = {j:.3e} below tolerance {tol:.3e}")]
    DegenerateJump { j: f64, tol: f64 },

    #[error("characteristic left the unit disk by {excess:.3e} (tolerance {tol:.3e})")]
    Blowup { excess: f64, tol: f64 },

    #[error("linear solve failed: {0}")]
    Solver(String),

    #[error("input divergence {div:.3e} exceeds consistency tolerance {tol:.3e}")]
    Consistency { div: f64, tol: f64 },

    #[error("solvability defect {mean:.3e} of the disk Poisson source exceeds {tol:.3e}")]
    Solvability { mean: f64, tol: f64 },

    #[error("per-mode matrix numerically singular for azimuthal mode {mode}")]
    SingularMode { mode: usize },

    #[error("iterate left the solution class: |W|_Xi = {norm:.3e} > {gate:.3e}")]
    ClassExit { norm: f64, gate: f64 },

    #[error("fixed point not reached in {iters} iterations; last delta {last:.3e}, ratios {ratios:?}")]
    NoConvergence {
        iters: usize,
        last: f64,
        ratios: Vec<f64>,
    },

    #[error("configuration error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

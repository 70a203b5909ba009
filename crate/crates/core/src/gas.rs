//! Polytropic gas relations. The entropy enters every equation only through
//! the coefficient `K = P / rho^gamma`, so no separate additive entropy is
//! carried.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GasParams {
    pub gamma: f64,
}

impl GasParams {
    pub fn new(gamma: f64) -> Result<Self> {
        if !(gamma > 1.0) {
            return Err(Error::Config(format!("gamma = {gamma} must exceed 1")));
        }
        Ok(Self { gamma })
    }
}

/// Full thermodynamic state with velocity in frame components.
#[derive(Debug, Clone, Copy)]
pub struct ThermoState {
    pub rho: f64,
    pub pressure: f64,
    pub entropy_k: f64,
    pub bernoulli: f64,
    pub velocity: [f64; 3],
}

impl ThermoState {
    /// Build a consistent state from density, pressure and velocity.
    pub fn from_rho_p(rho: f64, pressure: f64, velocity: [f64; 3], gas: GasParams) -> Self {
        let g = gas.gamma;
        let entropy_k = pressure / rho.powf(g);
        let q2 = velocity.iter().map(|v| v * v).sum::<f64>();
        let bernoulli = 0.5 * q2 + g * pressure / ((g - 1.0) * rho);
        Self { rho, pressure, entropy_k, bernoulli, velocity }
    }

    #[inline]
    pub fn speed_sq(&self) -> f64 {
        self.velocity.iter().map(|v| v * v).sum()
    }
}

/// Density from Bernoulli quantity, entropy coefficient and speed squared:
/// `rho = ((gamma-1)/(gamma K))^(1/(gamma-1)) (B - |U|^2/2)^(1/(gamma-1))`.
pub fn density_from_bku(b: f64, k: f64, usq: f64, gas: GasParams) -> Result<f64> {
    let g = gas.gamma;
    let head = b - 0.5 * usq;
    if head <= 0.0 {
        return Err(Error::Vacuum(head));
    }
    Ok(((g - 1.0) / (g * k) * head).powf(1.0 / (g - 1.0)))
}

/// Pressure from the same closure, `P = K rho^gamma`.
pub fn pressure_from_bku(b: f64, k: f64, usq: f64, gas: GasParams) -> Result<f64> {
    let rho = density_from_bku(b, k, usq, gas)?;
    Ok(k * rho.powf(gas.gamma))
}

/// Squared sound speed `c^2 = gamma K rho^(gamma-1)` and Mach number.
pub fn sonic_diagnostics(state: &ThermoState, gas: GasParams) -> (f64, f64) {
    let c2 = gas.gamma * state.entropy_k * state.rho.powf(gas.gamma - 1.0);
    let ma = state.speed_sq().sqrt() / c2.sqrt();
    (c2, ma)
}

/// Specific enthalpy as a function of pressure and entropy coefficient,
/// `h = gamma/(gamma-1) K^(1/gamma) P^((gamma-1)/gamma)`.
pub fn enthalpy_pk(pressure: f64, k: f64, gas: GasParams) -> f64 {
    let g = gas.gamma;
    g / (g - 1.0) * k.powf(1.0 / g) * pressure.powf((g - 1.0) / g)
}

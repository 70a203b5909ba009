//! Steady transonic shock solver in a hemispherical shell.
//!
//! A supersonic radial inflow enters the shell at the inner sphere; a
//! prescribed exit pressure at the outer sphere forces a shock across which
//! the flow becomes subsonic. The solver computes the free shock surface and
//! the downstream flow by a fixed-point iteration over a deformation-curl
//! decomposition of the steady Euler system, formulated in stereographic
//! shell coordinates that keep every equation free of pole singularities.

pub mod background;
pub mod coords;
pub mod driver;
pub mod elliptic;
pub mod error;
pub mod field;
pub mod gas;
pub mod grid;
pub mod io;
pub mod linalg;
pub mod shock_algebra;
pub mod supersonic;
pub mod transport;

pub use error::{Error, Result};
pub use grid::GridSpec;

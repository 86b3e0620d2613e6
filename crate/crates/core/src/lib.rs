//! Diffusion-coupled networks of sender and receiver cells in a spherical
//! domain: the full PDE–ODE model, its reduced gain-matrix form, and the
//! analysis used to compare the two.

pub mod analysis;
pub mod cells;
pub mod error;
pub mod field;
pub mod greens;
pub mod io;
pub mod linalg;
pub mod ode;
pub mod reduced;
pub mod scenario;
pub mod types;

pub use error::{Error, Result};

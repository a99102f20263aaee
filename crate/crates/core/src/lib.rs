//! Isotropic 4-wave kinetic wave equation: collision operator, fluxes,
//! linearization around the KZ spectrum and a forced stationary solver.

pub mod collision;
pub mod error;
pub mod evolution;
pub mod fluxes;
pub mod grid_spectra;
pub mod io;
pub mod linearized;
pub mod quadrature;
pub mod stationary_solver;

pub use error::{KweError, Result};
pub use grid_spectra::{LogGrid, Spectrum, TailFit, TailModel, WeightedNormSpec, KZ_EXPONENT};
pub use quadrature::QuadratureConfig;

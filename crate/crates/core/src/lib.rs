//! Fourier phase retrieval from oversampled magnitudes.
//!
//! - [`grid`]: real/complex 2D grids, zero padding and the 2D DFT
//! - [`objective`]: smoothed amplitude loss, gradient, Lipschitz bound
//! - [`decoder`]: the untrained decoder prior, backprop and Adam
//! - [`solvers`]: ADMM, Net-ADM, Net-GD and Net-PGD

pub mod decoder;
pub mod error;
pub mod grid;
pub mod objective;
pub mod solvers;

pub use error::{Error, Result};
pub use grid::{ComplexGrid, PadSpec, RealGrid};
pub use objective::MeasurementSet;

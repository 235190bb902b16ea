//! Experiment harness for Fourier phase retrieval with untrained decoder priors:
//! image I/O, noisy measurements, PSNR/SSIM and benchmark sweeps.

pub mod check;
pub mod experiment;
pub mod image_io;
pub mod measure;
pub mod metrics;
pub mod plan;
pub mod sweep;
pub mod synthetic;

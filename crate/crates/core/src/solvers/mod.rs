//! Reconstruction algorithms: plain ADMM, Net-ADM, Net-GD and Net-PGD.

mod admm;
mod net_gd;
mod net_pgd;
mod trace;

pub use admm::{admm_solve, net_adm_solve, net_adm_solve_with_net, AdmmState};
pub use net_gd::{net_gd_objective, net_gd_solve, net_gd_solve_with_net};
pub use net_pgd::{net_pgd_solve, net_pgd_solve_with_net};
pub use trace::{CsvTraceSink, SolverTrace, TraceRow, TRACE_CSV_HEADER};

use std::borrow::Cow;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::decoder::{DecoderConfig, DecoderNet};
use crate::error::Error;
use crate::grid::RealGrid;
use crate::objective::{MeasurementSet, DEFAULT_EPSILON};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Algorithm {
    Admm,
    NetAdm,
    NetGd,
    NetPgd,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [
        Algorithm::Admm,
        Algorithm::NetGd,
        Algorithm::NetPgd,
        Algorithm::NetAdm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Admm => "admm",
            Algorithm::NetAdm => "net_adm",
            Algorithm::NetGd => "net_gd",
            Algorithm::NetPgd => "net_pgd",
        }
    }

    pub fn uses_decoder(self) -> bool {
        self != Algorithm::Admm
    }

    pub fn index(self) -> u64 {
        match self {
            Algorithm::Admm => 0,
            Algorithm::NetAdm => 1,
            Algorithm::NetGd => 2,
            Algorithm::NetPgd => 3,
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        let key = s.to_ascii_lowercase().replace('-', "_");
        Self::ALL
            .into_iter()
            .find(|a| a.name() == key)
            .ok_or_else(|| Error::Config(format!("unknown algorithm {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    pub algorithm: Algorithm,
    /// Outer iterations `K` (Adam steps for Net-GD).
    pub outer_iters: usize,
    /// Adam steps per projection; 0 disables the decoder projection.
    pub inner_steps: usize,
    /// Adam learning rate of the decoder fit.
    pub lr: f64,
    /// Gradient step of the Net-PGD outer loop.
    pub outer_lr: f64,
    /// Learning rates decay every this many outer iterations; 0 disables decay.
    pub decay_every: usize,
    pub decay_factor: f64,
    pub rho: f64,
    pub epsilon: f64,
    /// Seeds the decoder latent and weights.
    pub seed: u64,
    /// Record a trace row every this many iterations; 0 records nothing.
    pub trace_every: usize,
    /// Compute the cross-path and fill-rule diagnostics on recorded rows.
    pub diagnostics: bool,
    /// Stop when the relative change of the recorded loss drops below this value.
    pub early_stop: Option<f64>,
    pub weight_decay: f64,
}

impl SolverConfig {
    /// Iteration budgets and rates used in the reference experiments.
    pub fn defaults(algorithm: Algorithm) -> Self {
        let base = Self {
            algorithm,
            outer_iters: 1000,
            inner_steps: 5,
            lr: 0.005,
            outer_lr: 0.5,
            decay_every: 500,
            decay_factor: 0.5,
            rho: 1.0,
            epsilon: DEFAULT_EPSILON,
            seed: 0,
            trace_every: 0,
            diagnostics: false,
            early_stop: None,
            weight_decay: 0.0,
        };
        match algorithm {
            Algorithm::Admm => Self {
                outer_iters: 5000,
                inner_steps: 0,
                decay_every: 0,
                ..base
            },
            Algorithm::NetAdm => base,
            Algorithm::NetGd => Self {
                outer_iters: 5000,
                inner_steps: 0,
                decay_every: 2500,
                ..base
            },
            Algorithm::NetPgd => Self { lr: 0.0005, ..base },
        }
    }

    pub fn validate(&self) -> Result<(), Error> {
        if self.outer_iters == 0 {
            return Err(Error::Config("outer_iters must be >= 1".into()));
        }
        if !(self.rho > 0.0) || !self.rho.is_finite() {
            return Err(Error::Config(format!(
                "rho must be positive, got {}",
                self.rho
            )));
        }
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return Err(Error::Config(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        if !(self.lr >= 0.0) || !(self.outer_lr >= 0.0) {
            return Err(Error::Config("learning rates must be non-negative".into()));
        }
        Ok(())
    }

    pub(crate) fn records(&self, iter: usize) -> bool {
        self.trace_every > 0 && (iter % self.trace_every == 0 || iter + 1 == self.outer_iters)
    }

    pub(crate) fn needs_loss(&self, iter: usize) -> bool {
        self.records(iter) || self.early_stop.is_some()
    }

    // decay factor applied at 0-based outer iteration `iter`
    pub(crate) fn decay_at(&self, iter: usize) -> f64 {
        if self.decay_every == 0 {
            1.0
        } else {
            self.decay_factor.powi((iter / self.decay_every) as i32)
        }
    }
}

#[derive(Clone, Debug)]
pub struct SolverOutput {
    /// Reconstructed image channels, `n₁ × n₂` each.
    pub reconstruction: Vec<RealGrid>,
    pub trace: SolverTrace,
    /// `Σ_c f(P x̂_c)` for the returned reconstruction.
    pub final_loss: f64,
    pub iterations: usize,
    /// Final ADMM iterates, for the ADMM family.
    pub admm_state: Option<AdmmState>,
    /// Final decoder, for decoder-based algorithms.
    pub decoder: Option<DecoderNet>,
}

/// A solver run that stopped early, with the trace recorded so far.
#[derive(Debug, Error)]
#[error("{algorithm} failed after {} recorded rows: {source}", trace.rows.len())]
pub struct SolverFailure {
    pub algorithm: Algorithm,
    #[source]
    pub source: Error,
    pub trace: SolverTrace,
}

pub type SolveResult = Result<SolverOutput, SolverFailure>;

pub(crate) fn fail(algorithm: Algorithm, trace: &SolverTrace, source: Error) -> SolverFailure {
    SolverFailure {
        algorithm,
        source,
        trace: trace.clone(),
    }
}

/// Runs `cfg.algorithm`; decoder-based algorithms require `decoder_cfg`.
pub fn solve(
    meas: &MeasurementSet,
    decoder_cfg: Option<&DecoderConfig>,
    cfg: &SolverConfig,
    sink: Option<&mut dyn FnMut(&TraceRow)>,
) -> SolveResult {
    let need = |alg| {
        decoder_cfg.ok_or_else(|| SolverFailure {
            algorithm: alg,
            source: Error::Config(format!("{alg} needs a decoder configuration")),
            trace: SolverTrace::default(),
        })
    };
    match cfg.algorithm {
        Algorithm::Admm => admm_solve(meas, cfg, sink),
        Algorithm::NetAdm => net_adm_solve(meas, need(Algorithm::NetAdm)?, cfg, sink),
        Algorithm::NetGd => net_gd_solve(meas, need(Algorithm::NetGd)?, cfg, sink),
        Algorithm::NetPgd => net_pgd_solve(meas, need(Algorithm::NetPgd)?, cfg, sink),
    }
}

pub(crate) fn build_decoder(
    algorithm: Algorithm,
    meas: &MeasurementSet,
    decoder_cfg: &DecoderConfig,
    seed: u64,
) -> Result<DecoderNet, SolverFailure> {
    let cfg = DecoderConfig {
        seed,
        ..decoder_cfg.clone()
    };
    let net = DecoderNet::init(cfg).map_err(|e| fail(algorithm, &SolverTrace::default(), e))?;
    check_decoder(algorithm, meas, &net)?;
    Ok(net)
}

pub(crate) fn check_decoder(
    algorithm: Algorithm,
    meas: &MeasurementSet,
    net: &DecoderNet,
) -> Result<(), SolverFailure> {
    let cfg = net.config();
    let err = if cfg.output_dims() != meas.spec().inner() {
        Some(Error::Shape {
            context: "decoder output vs image",
            expected: meas.spec().inner(),
            actual: cfg.output_dims(),
        })
    } else if cfg.out_channels != meas.num_channels() {
        Some(Error::Config(format!(
            "decoder has {} output channels, measurement has {}",
            cfg.out_channels,
            meas.num_channels()
        )))
    } else {
        None
    };
    match err {
        Some(e) => Err(fail(algorithm, &SolverTrace::default(), e)),
        None => Ok(()),
    }
}

/// Validates `cfg` and rebuilds the measurement if its smoothing differs from `cfg.epsilon`.
pub(crate) fn prepare_meas<'a>(
    algorithm: Algorithm,
    meas: &'a MeasurementSet,
    cfg: &SolverConfig,
) -> Result<Cow<'a, MeasurementSet>, SolverFailure> {
    cfg.validate()
        .map_err(|e| fail(algorithm, &SolverTrace::default(), e))?;
    if meas.epsilon() == cfg.epsilon {
        Ok(Cow::Borrowed(meas))
    } else {
        meas.with_epsilon(cfg.epsilon)
            .map(Cow::Owned)
            .map_err(|e| fail(algorithm, &SolverTrace::default(), e))
    }
}

pub(crate) fn norm_all(grids: &[RealGrid]) -> f64 {
    grids.iter().map(|g| g.norm_sq()).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_defaults() {
        let adm = SolverConfig::defaults(Algorithm::NetAdm);
        assert_eq!(
            (adm.outer_iters, adm.inner_steps, adm.lr, adm.decay_every),
            (1000, 5, 0.005, 500)
        );
        assert_eq!((adm.rho, adm.epsilon), (1.0, 0.001));
        let pgd = SolverConfig::defaults(Algorithm::NetPgd);
        assert_eq!((pgd.outer_lr, pgd.lr, pgd.decay_every), (0.5, 0.0005, 500));
        let gd = SolverConfig::defaults(Algorithm::NetGd);
        assert_eq!((gd.outer_iters, gd.lr, gd.decay_every), (5000, 0.005, 2500));
        assert_eq!(SolverConfig::defaults(Algorithm::Admm).outer_iters, 5000);
    }

    #[test]
    fn algorithm_names() {
        for a in Algorithm::ALL {
            assert_eq!(a.name().parse::<Algorithm>().unwrap(), a);
        }
        assert_eq!("Net-ADM".parse::<Algorithm>().unwrap(), Algorithm::NetAdm);
        assert!("hio".parse::<Algorithm>().is_err());
    }

    #[test]
    fn config_validation() {
        let mut cfg = SolverConfig::defaults(Algorithm::Admm);
        assert!(cfg.validate().is_ok());
        cfg.rho = 0.0;
        assert!(cfg.validate().is_err());
        cfg.rho = 1.0;
        cfg.outer_iters = 0;
        assert!(cfg.validate().is_err());
    }
}

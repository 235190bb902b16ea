//! Net-PGD: a gradient step on `f ∘ P` followed by a decoder projection.

use std::time::Instant;

use super::{
    build_decoder, check_decoder, fail, norm_all, prepare_meas, Algorithm, SolveResult,
    SolverConfig, SolverOutput, SolverTrace, TraceRow,
};
use crate::decoder::{fit_to_target, AdamConfig, AdamState, DecoderConfig, DecoderNet};
use crate::error::{Error, Result};
use crate::grid::{crop, zero_pad, RealGrid};
use crate::objective::{smoothed_loss, smoothed_loss_grad, MeasurementSet};

// v = x − α Pᵀ∇f(P x); also returns f(P x)
fn gradient_step(
    x: &RealGrid,
    meas: &MeasurementSet,
    channel: usize,
    alpha: f64,
) -> Result<(RealGrid, f64)> {
    let spec = meas.spec();
    let u = zero_pad(x, spec)?;
    let loss = smoothed_loss(&u, meas, channel)?;
    let grad = crop(&smoothed_loss_grad(&u, meas, channel)?, spec)?;
    Ok((x.zip_map(&grad, |a, g| a - alpha * g)?, loss))
}

pub fn net_pgd_solve(
    meas: &MeasurementSet,
    decoder_cfg: &DecoderConfig,
    cfg: &SolverConfig,
    sink: Option<&mut dyn FnMut(&TraceRow)>,
) -> SolveResult {
    let net = build_decoder(Algorithm::NetPgd, meas, decoder_cfg, cfg.seed)?;
    net_pgd_solve_with_net(meas, net, cfg, sink)
}

/// Starts from `x⁰ = G(w⁰; z)`. With `inner_steps = 0` this is plain gradient descent on `f ∘ P`.
pub fn net_pgd_solve_with_net(
    meas: &MeasurementSet,
    mut net: DecoderNet,
    cfg: &SolverConfig,
    mut sink: Option<&mut dyn FnMut(&TraceRow)>,
) -> SolveResult {
    let alg = Algorithm::NetPgd;
    let meas = prepare_meas(alg, meas, cfg)?;
    check_decoder(alg, &meas, &net)?;
    let start = Instant::now();
    let adam_cfg = AdamConfig {
        weight_decay: cfg.weight_decay,
        ..AdamConfig::new(cfg.lr)
            .with_decay((cfg.decay_every * cfg.inner_steps) as u64, cfg.decay_factor)
    };
    let mut adam = AdamState::new(adam_cfg, net.weights());
    let mut x = net.forward();
    let mut trace = SolverTrace::default();
    let mut prev_loss: Option<f64> = None;
    let mut iterations = 0;
    for k in 0..cfg.outer_iters {
        let alpha = cfg.outer_lr * cfg.decay_at(k);
        let mut row = TraceRow::new(k);
        let step = (|| -> Result<Vec<RealGrid>> {
            let mut v = Vec::with_capacity(x.len());
            let mut loss = 0.0;
            for (c, xc) in x.iter().enumerate() {
                let (vc, l) = gradient_step(xc, &meas, c, alpha)?;
                loss += l;
                v.push(vc);
            }
            row.f_utilde = loss;
            if v.iter().any(|g| !g.is_finite()) {
                return Err(Error::Diverged {
                    iteration: k,
                    what: "non-finite gradient step".into(),
                });
            }
            let next = if cfg.inner_steps > 0 {
                let fit = fit_to_target(&mut net, &v, cfg.inner_steps, &mut adam)?;
                let diff: Vec<RealGrid> = v
                    .iter()
                    .zip(&fit.output)
                    .map(|(a, b)| a.sub(b))
                    .collect::<Result<_>>()?;
                row.fit_residual = norm_all(&diff);
                fit.output
            } else {
                v
            };
            if cfg.needs_loss(k) {
                let mut f = 0.0;
                for (c, xc) in next.iter().enumerate() {
                    f += smoothed_loss(&zero_pad(xc, meas.spec())?, &meas, c)?;
                }
                row.f_u = f;
            }
            Ok(next)
        })();
        match step {
            Ok(next) => x = next,
            Err(e) => return Err(fail(alg, &trace, e)),
        }
        iterations = k + 1;
        row.elapsed_ms = start.elapsed().as_secs_f64() * 1e3;
        if cfg.records(k) {
            if let Some(s) = sink.as_mut() {
                s(&row);
            }
            trace.rows.push(row.clone());
        }
        if let Some(tol) = cfg.early_stop {
            if let Some(prev) = prev_loss {
                if (prev - row.f_u).abs() <= tol * prev.abs().max(f64::MIN_POSITIVE) {
                    break;
                }
            }
            prev_loss = Some(row.f_u);
        }
    }
    let mut final_loss = 0.0;
    for (c, xc) in x.iter().enumerate() {
        final_loss += zero_pad(xc, meas.spec())
            .and_then(|u| smoothed_loss(&u, &meas, c))
            .map_err(|e| fail(alg, &trace, e))?;
    }
    Ok(SolverOutput {
        reconstruction: x,
        trace,
        final_loss,
        iterations,
        admm_state: None,
        decoder: Some(net),
    })
}

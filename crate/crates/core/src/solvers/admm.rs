//! ADMM on the padded splitting `P x = u`, optionally with a decoder projection
//! of the signal block after every multiplier update (Net-ADM).

use std::time::Instant;

use super::{
    build_decoder, check_decoder, fail, norm_all, prepare_meas, Algorithm, SolveResult,
    SolverConfig, SolverFailure, SolverOutput, SolverTrace, TraceRow,
};
use crate::decoder::{fit_to_target, AdamConfig, AdamState, DecoderConfig, DecoderNet};
use crate::error::{Error, Result};
use crate::grid::{crop, zero_pad, ComplexGrid, PadSpec, RealGrid};
use crate::objective::{descent_step, smoothed_loss, total_loss, MeasurementSet};

/// Per-channel ADMM iterates.
#[derive(Clone, Debug, PartialEq)]
pub struct AdmmState {
    pub x: Vec<RealGrid>,
    pub u: Vec<RealGrid>,
    pub u_tilde: Vec<RealGrid>,
    pub lambda: Vec<RealGrid>,
    pub rho: f64,
    pub iteration: usize,
}

impl AdmmState {
    /// `ũ⁰ = Re F⁻¹(b)` with its padded tail set to `λ⁰/ρ = 0`, `λ⁰ = 0`.
    /// Also returns the norm of the discarded imaginary part.
    pub fn initial(meas: &MeasurementSet, rho: f64) -> Result<(Self, f64)> {
        let spec = *meas.spec();
        let mut imag = 0.0;
        let mut u_tilde = Vec::with_capacity(meas.num_channels());
        for b in meas.channels() {
            let inv = meas.plan().inverse(&ComplexGrid::from_real(b))?;
            imag += inv.im().norm_sq();
            let lambda = RealGrid::zeros(spec.outer_h, spec.outer_w);
            u_tilde.push(fill_tail(&crop(&inv.re(), &spec)?, &lambda, rho, &spec)?);
        }
        let zeros_outer = || RealGrid::zeros(spec.outer_h, spec.outer_w);
        let channels = meas.num_channels();
        Ok((
            Self {
                x: vec![RealGrid::zeros(spec.inner_h, spec.inner_w); channels],
                u: u_tilde.clone(),
                u_tilde,
                lambda: (0..channels).map(|_| zeros_outer()).collect(),
                rho,
                iteration: 0,
            },
            imag.sqrt(),
        ))
    }
}

/// `ũ` with `inner` in the signal block and `λ/ρ` everywhere else.
fn fill_tail(inner: &RealGrid, lambda: &RealGrid, rho: f64, spec: &PadSpec) -> Result<RealGrid> {
    let mut out = lambda.map(|l| l / rho);
    let ow = spec.outer_w;
    let iw = spec.inner_w;
    let data = out.as_mut_slice();
    for r in 0..spec.inner_h {
        data[r * ow..r * ow + iw].copy_from_slice(&inner.as_slice()[r * iw..(r + 1) * iw]);
    }
    Ok(out)
}

fn fill_rule_deviation(u_tilde: &RealGrid, lambda: &RealGrid, rho: f64, spec: &PadSpec) -> f64 {
    let mut dev = 0.0f64;
    for r in 0..spec.outer_h {
        for c in 0..spec.outer_w {
            if !spec.is_inside(r, c) {
                dev = dev.max((u_tilde[(r, c)] - lambda[(r, c)] / rho).abs());
            }
        }
    }
    dev
}

/// Closed-form u-update: `F⁻¹(√(b²+ε)/√(|F v|²+ε) ⊙ F v)` with `v = P x + λ/ρ`.
/// Also returns `f(v)`.
fn magnitude_update(
    meas: &MeasurementSet,
    channel: usize,
    v: &RealGrid,
) -> Result<(RealGrid, f64)> {
    let eps = meas.epsilon();
    let target = meas.smoothed_magnitude(channel).as_slice();
    let mut spectrum = meas.plan().forward_real(v)?;
    let mut loss = 0.0;
    for (z, &a) in spectrum.as_mut_slice().iter_mut().zip(target) {
        let s = (z.norm_sqr() + eps).sqrt();
        loss += (a - s) * (a - s);
        *z *= a / s;
    }
    meas.plan().inverse_in_place(&mut spectrum)?;
    Ok((spectrum.re(), loss / (2.0 * meas.m() as f64)))
}

struct Projector<'a> {
    net: &'a mut DecoderNet,
    adam: AdamState,
    inner_steps: usize,
}

struct FamilyRun {
    state: AdmmState,
    trace: SolverTrace,
    iterations: usize,
}

fn run_family(
    algorithm: Algorithm,
    meas: &MeasurementSet,
    cfg: &SolverConfig,
    mut projector: Option<Projector<'_>>,
    mut sink: Option<&mut dyn FnMut(&TraceRow)>,
) -> std::result::Result<FamilyRun, SolverFailure> {
    let start = Instant::now();
    let spec = *meas.spec();
    let rho = cfg.rho;
    let channels = meas.num_channels();
    let (mut state, imag) =
        AdmmState::initial(meas, rho).map_err(|e| fail(algorithm, &SolverTrace::default(), e))?;
    let mut trace = SolverTrace {
        rows: Vec::new(),
        initial_imag_norm: imag,
    };
    let mut prev_loss: Option<f64> = None;
    let mut iterations = 0;

    for k in 0..cfg.outer_iters {
        let record = cfg.records(k);
        let mut row = TraceRow::new(k);
        let step = (|| -> Result<()> {
            let mut f_arg = 0.0;
            let mut opt_res = 0.0;
            let mut constraint = 0.0;
            let mut cross = 0.0f64;
            for c in 0..channels {
                let lam_scaled = state.lambda[c].map(|l| l / rho);
                // x-update: Pᵀ(ũ − λ/ρ)
                let x = crop(&state.u_tilde[c], &spec)?.sub(&crop(&lam_scaled, &spec)?)?;
                let padded_x = zero_pad(&x, &spec)?;
                let v = padded_x.add(&lam_scaled)?;
                let (u_next, f_v) = magnitude_update(meas, c, &v)?;
                f_arg += f_v;
                if record {
                    let lam_in = crop(&state.lambda[c], &spec)?;
                    let ut_in = crop(&state.u_tilde[c], &spec)?;
                    let r = lam_in.zip_map(&x.sub(&ut_in)?, |l, d| l + rho * d)?;
                    opt_res += r.norm_sq();
                    if cfg.diagnostics {
                        let g = descent_step(&state.u_tilde[c], meas, c)?;
                        cross = cross.max(u_next.max_abs_diff(&g)?);
                    }
                }
                let gap = padded_x.sub(&u_next)?;
                constraint += gap.norm_sq();
                state.lambda[c] = state.lambda[c].zip_map(&gap, |l, d| l + rho * d)?;
                if !u_next.is_finite() || !state.lambda[c].is_finite() {
                    return Err(Error::Diverged {
                        iteration: k,
                        what: format!("non-finite u or λ in channel {c}"),
                    });
                }
                state.x[c] = x;
                state.u[c] = u_next;
            }
            row.f_utilde = f_arg;
            row.constraint_residual = constraint.sqrt();
            if record {
                row.optimality_residual = Some(opt_res.sqrt());
                if cfg.diagnostics {
                    row.cross_path_diff = Some(cross);
                }
            }

            let cropped = state
                .u
                .iter()
                .map(|u| crop(u, &spec))
                .collect::<Result<Vec<_>>>()?;
            let inner = match projector.as_mut() {
                Some(p) if p.inner_steps > 0 => {
                    let fit = fit_to_target(p.net, &cropped, p.inner_steps, &mut p.adam)?;
                    let diff: Vec<RealGrid> = cropped
                        .iter()
                        .zip(&fit.output)
                        .map(|(a, b)| a.sub(b))
                        .collect::<Result<_>>()?;
                    row.fit_residual = norm_all(&diff);
                    fit.output
                }
                _ => cropped,
            };
            let mut fill_dev = 0.0f64;
            for c in 0..channels {
                state.u_tilde[c] = fill_tail(&inner[c], &state.lambda[c], rho, &spec)?;
                if record && cfg.diagnostics {
                    fill_dev = fill_dev.max(fill_rule_deviation(
                        &state.u_tilde[c],
                        &state.lambda[c],
                        rho,
                        &spec,
                    ));
                }
            }
            if record && cfg.diagnostics {
                row.fill_rule_dev = Some(fill_dev);
            }
            if cfg.needs_loss(k) {
                row.f_u = total_loss(&state.u, meas)?;
            }
            Ok(())
        })();
        if let Err(e) = step {
            return Err(fail(algorithm, &trace, e));
        }
        state.iteration = k + 1;
        iterations = k + 1;
        row.elapsed_ms = start.elapsed().as_secs_f64() * 1e3;
        if record {
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
    Ok(FamilyRun {
        state,
        trace,
        iterations,
    })
}

fn cropped_u(state: &AdmmState, spec: &PadSpec) -> Result<Vec<RealGrid>> {
    state.u.iter().map(|u| crop(u, spec)).collect()
}

fn padded_loss(x: &[RealGrid], meas: &MeasurementSet) -> Result<f64> {
    let mut total = 0.0;
    for (c, xc) in x.iter().enumerate() {
        total += smoothed_loss(&zero_pad(xc, meas.spec())?, meas, c)?;
    }
    Ok(total)
}

/// Plain ADMM. Returns `Pᵀ u^K` per channel, unclamped.
pub fn admm_solve(
    meas: &MeasurementSet,
    cfg: &SolverConfig,
    sink: Option<&mut dyn FnMut(&TraceRow)>,
) -> SolveResult {
    let alg = Algorithm::Admm;
    let meas = prepare_meas(alg, meas, cfg)?;
    let run = run_family(alg, &meas, cfg, None, sink)?;
    let reconstruction =
        cropped_u(&run.state, meas.spec()).map_err(|e| fail(alg, &run.trace, e))?;
    let final_loss = padded_loss(&reconstruction, &meas).map_err(|e| fail(alg, &run.trace, e))?;
    Ok(SolverOutput {
        reconstruction,
        trace: run.trace,
        final_loss,
        iterations: run.iterations,
        admm_state: Some(run.state),
        decoder: None,
    })
}

/// Net-ADM with a decoder initialized from `decoder_cfg` and `cfg.seed`.
pub fn net_adm_solve(
    meas: &MeasurementSet,
    decoder_cfg: &DecoderConfig,
    cfg: &SolverConfig,
    sink: Option<&mut dyn FnMut(&TraceRow)>,
) -> SolveResult {
    let net = build_decoder(Algorithm::NetAdm, meas, decoder_cfg, cfg.seed)?;
    net_adm_solve_with_net(meas, net, cfg, sink)
}

/// Net-ADM starting from a given decoder. With `inner_steps = 0` the projection
/// is skipped and the iterates coincide with [`admm_solve`].
pub fn net_adm_solve_with_net(
    meas: &MeasurementSet,
    mut net: DecoderNet,
    cfg: &SolverConfig,
    sink: Option<&mut dyn FnMut(&TraceRow)>,
) -> SolveResult {
    let alg = Algorithm::NetAdm;
    let meas = prepare_meas(alg, meas, cfg)?;
    check_decoder(alg, &meas, &net)?;
    let adam_cfg = AdamConfig {
        weight_decay: cfg.weight_decay,
        ..AdamConfig::new(cfg.lr)
            .with_decay((cfg.decay_every * cfg.inner_steps) as u64, cfg.decay_factor)
    };
    let adam = AdamState::new(adam_cfg, net.weights());
    let projector = Projector {
        net: &mut net,
        adam,
        inner_steps: cfg.inner_steps,
    };
    let run = run_family(alg, &meas, cfg, Some(projector), sink)?;
    let reconstruction = if cfg.inner_steps > 0 {
        net.forward()
    } else {
        cropped_u(&run.state, meas.spec()).map_err(|e| fail(alg, &run.trace, e))?
    };
    let final_loss = padded_loss(&reconstruction, &meas).map_err(|e| fail(alg, &run.trace, e))?;
    Ok(SolverOutput {
        reconstruction,
        trace: run.trace,
        final_loss,
        iterations: run.iterations,
        admm_state: Some(run.state),
        decoder: Some(net),
    })
}

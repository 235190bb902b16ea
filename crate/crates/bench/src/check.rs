//! Numerical self-checks and reconstruction trend checks.
//!
//! The gradient and DFT checks take the routine under test as a closure so a
//! deliberately broken variant can be shown to fail.

use std::f64::consts::PI;
use std::fmt;
use std::path::PathBuf;
use std::time::Instant;

use anyhow::{anyhow, Result};
use netadm_core::decoder::{DecoderConfig, DecoderNet, Matrix};
use netadm_core::grid::{dft2, fourier_magnitude, Complex64};
use netadm_core::objective::{lipschitz_bound, smoothed_loss, smoothed_loss_grad};
use netadm_core::solvers::{solve, Algorithm, SolverConfig};
use netadm_core::{ComplexGrid, MeasurementSet, PadSpec, RealGrid};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::experiment::{execute, RunReport};
use crate::measure::{empirical_snr, make_measurement};
use crate::metrics::Score;
use crate::plan::ExperimentPlan;
use crate::synthetic;

pub type GradFn<'a> =
    &'a dyn Fn(&RealGrid, &MeasurementSet, usize) -> netadm_core::Result<RealGrid>;
pub type DftFn<'a> = &'a dyn Fn(&ComplexGrid) -> ComplexGrid;

/// Environment variable naming a 28×28 grayscale digit for the sampling-rate trend.
pub const DIGIT_ENV: &str = "NETADM_MNIST_DIGIT";
/// Environment variable naming a 64×64 RGB image for the noise trend.
pub const RGB_ENV: &str = "NETADM_RGB_IMAGE";

#[derive(Clone, Debug)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl CheckOutcome {
    fn new(name: &'static str, passed: bool, detail: String) -> Self {
        Self {
            name,
            passed,
            detail,
        }
    }

    fn error(name: &'static str, err: anyhow::Error) -> Self {
        Self::new(name, false, format!("error: {err:#}"))
    }
}

impl fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{tag} {}: {}", self.name, self.detail)
    }
}

fn catch(name: &'static str, body: impl FnOnce() -> Result<CheckOutcome>) -> CheckOutcome {
    body().unwrap_or_else(|e| CheckOutcome::error(name, e))
}

fn uniform_grid(h: usize, w: usize, lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> RealGrid {
    RealGrid::from_fn(h, w, |_, _| rng.random_range(lo..hi))
}

/// Measurements of a random 4×4 image padded to 8×8, with a little noise so
/// the data is not exactly attainable.
fn random_instance(eps: f64, rng: &mut ChaCha8Rng) -> Result<MeasurementSet> {
    let spec = PadSpec::new(4, 4, 8, 8)?;
    let x = uniform_grid(4, 4, 0.0, 1.0, rng);
    let mut b = fourier_magnitude(&x, &spec)?;
    for v in b.as_mut_slice() {
        *v = (*v + rng.random_range(0.0..0.05)).abs();
    }
    Ok(MeasurementSet::new(vec![b], spec, eps)?)
}

const EPSILONS: [f64; 3] = [1e-3, 1e-1, 1.0];

/// Central differences of the loss against `grad` on 100 random 8×8 instances.
pub fn check_gradient(grad: GradFn) -> CheckOutcome {
    const NAME: &str = "gradient";
    catch(NAME, || {
        let start = Instant::now();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let h = 1e-5;
        let mut worst = 0.0f64;
        for trial in 0..100 {
            let meas = random_instance(EPSILONS[trial % 3], &mut rng)?;
            let u = uniform_grid(8, 8, -1.0, 1.0, &mut rng);
            let g = grad(&u, &meas, 0)?;
            let mut fd = RealGrid::zeros(8, 8);
            for i in 0..u.len() {
                let mut up = u.clone();
                let mut dn = u.clone();
                up.as_mut_slice()[i] += h;
                dn.as_mut_slice()[i] -= h;
                fd.as_mut_slice()[i] =
                    (smoothed_loss(&up, &meas, 0)? - smoothed_loss(&dn, &meas, 0)?) / (2.0 * h);
            }
            worst = worst.max(fd.sub(&g)?.norm() / g.norm().max(f64::MIN_POSITIVE));
        }
        let secs = start.elapsed().as_secs_f64();
        Ok(CheckOutcome::new(
            NAME,
            worst <= 1e-6 && secs < 10.0,
            format!("max relative error {worst:.2e} (limit 1e-6) over 100 instances in {secs:.2}s"),
        ))
    })
}

/// Gradient difference quotients on 1000 random pairs never exceed the bound `L`.
pub fn check_lipschitz(grad: GradFn) -> CheckOutcome {
    const NAME: &str = "lipschitz";
    catch(NAME, || {
        let start = Instant::now();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut worst = 0.0f64;
        let mut violations = 0;
        for trial in 0..1000 {
            let meas = random_instance(EPSILONS[trial % 3], &mut rng)?;
            let bound = lipschitz_bound(&meas);
            let u1 = uniform_grid(8, 8, -1.0, 1.0, &mut rng);
            let scale = [1.0, 1e-2, 1e-4][(trial / 3) % 3];
            let du = uniform_grid(8, 8, -scale, scale, &mut rng);
            let u2 = u1.add(&du)?;
            let ratio = grad(&u2, &meas, 0)?.sub(&grad(&u1, &meas, 0)?)?.norm() / du.norm();
            if ratio > bound {
                violations += 1;
            }
            worst = worst.max(ratio / bound);
        }
        let secs = start.elapsed().as_secs_f64();
        Ok(CheckOutcome::new(
            NAME,
            violations == 0 && secs < 10.0,
            format!("{violations} violations in 1000 pairs, max ratio/L {worst:.3e}, {secs:.2}s"),
        ))
    })
}

/// `Σ u[r,c] e^{−2πi(pr/h + qc/w)}` with the phase reduced modulo the grid
/// before the trigonometric call.
pub fn naive_dft(u: &ComplexGrid) -> ComplexGrid {
    let (h, w) = u.shape();
    let mut out = Vec::with_capacity(h * w);
    for p in 0..h {
        for q in 0..w {
            let mut acc = Complex64::new(0.0, 0.0);
            for r in 0..h {
                for c in 0..w {
                    let phase = ((p * r) % h) as f64 / h as f64 + ((q * c) % w) as f64 / w as f64;
                    acc += u.as_slice()[r * w + c] * Complex64::from_polar(1.0, -2.0 * PI * phase);
                }
            }
            out.push(acc);
        }
    }
    ComplexGrid::new(h, w, out).expect("shape matches")
}

fn random_complex(h: usize, w: usize, rng: &mut ChaCha8Rng) -> ComplexGrid {
    let data = (0..h * w)
        .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect();
    ComplexGrid::new(h, w, data).expect("shape matches")
}

fn dft_shapes() -> impl Iterator<Item = (usize, usize)> {
    (1..=8).flat_map(|h| (1..=6).map(move |w| (h, w)))
}

/// `dft` against direct summation on every grid up to 8×6.
pub fn check_dft_oracle(dft: DftFn) -> CheckOutcome {
    const NAME: &str = "dft oracle";
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut worst = 0.0f64;
    for (h, w) in dft_shapes() {
        let u = random_complex(h, w, &mut rng);
        let (fast, slow) = (dft(&u), naive_dft(&u));
        if fast.shape() != slow.shape() {
            return CheckOutcome::new(
                NAME,
                false,
                format!("shape {:?} for input {h}x{w}", fast.shape()),
            );
        }
        let diff = fast
            .as_slice()
            .iter()
            .zip(slow.as_slice())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        worst = worst.max(diff);
    }
    CheckOutcome::new(
        NAME,
        worst <= 1e-12,
        format!("max abs difference {worst:.2e} (limit 1e-12)"),
    )
}

/// `‖F u‖² = m‖u‖²` on every grid up to 8×6.
pub fn check_parseval(dft: DftFn) -> CheckOutcome {
    const NAME: &str = "parseval";
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let mut worst = 0.0f64;
    for (h, w) in dft_shapes() {
        let u = random_complex(h, w, &mut rng);
        let ratio = dft(&u).norm_sq() / ((h * w) as f64 * u.norm_sq());
        worst = worst.max((ratio - 1.0).abs());
    }
    CheckOutcome::new(
        NAME,
        worst <= 1e-12,
        format!("max |ratio - 1| {worst:.2e} (limit 1e-12)"),
    )
}

fn digit_measurement(rate: f64) -> Result<(Vec<RealGrid>, MeasurementSet)> {
    let x = vec![synthetic::digit()];
    let meas = make_measurement(&x, rate, None, netadm_core::objective::DEFAULT_EPSILON, 0)?;
    Ok((x, meas))
}

fn digit_decoder(seed: u64) -> Result<DecoderConfig> {
    Ok(DecoderConfig::for_output(
        vec![25, 15, 10],
        1,
        28,
        28,
        seed,
    )?)
}

/// In a 100-iteration ADMM run, the magnitude update equals a unit gradient
/// step from `ũ`, the padded tail of `ũ` equals `λ/ρ`, and `x` is optimal
/// for its subproblem.
pub fn check_cross_path() -> CheckOutcome {
    const NAME: &str = "cross-path";
    catch(NAME, || {
        let (_, meas) = digit_measurement(1.5)?;
        let mut cfg = SolverConfig::defaults(Algorithm::Admm);
        cfg.outer_iters = 100;
        cfg.trace_every = 1;
        cfg.diagnostics = true;
        let out = solve(&meas, None, &cfg, None)?;
        let rows = &out.trace.rows;
        let max_of = |f: &dyn Fn(&netadm_core::solvers::TraceRow) -> Option<f64>| -> Result<f64> {
            rows.iter().try_fold(0.0f64, |acc, r| {
                f(r).map(|v| acc.max(v))
                    .ok_or_else(|| anyhow!("diagnostic missing at iteration {}", r.iter))
            })
        };
        let cross = max_of(&|r| r.cross_path_diff)?;
        let fill = max_of(&|r| r.fill_rule_dev)?;
        let opt = max_of(&|r| r.optimality_residual)?;
        Ok(CheckOutcome::new(
            NAME,
            rows.len() == 100 && cross <= 1e-10 && fill == 0.0 && opt <= 1e-12,
            format!(
                "{} iterations: max cross-path difference {cross:.2e} (limit 1e-10), tail deviation {fill:.1e}, optimality residual {opt:.2e}",
                rows.len()
            ),
        ))
    })
}

/// `f(u^{k+1}) ≤ f(ũ^k) + 1e-12` on every iteration of 10 seeded Net-ADM runs.
pub fn check_descent() -> CheckOutcome {
    const NAME: &str = "net-adm descent";
    catch(NAME, || {
        let (_, meas) = digit_measurement(1.5)?;
        let mut worst = f64::NEG_INFINITY;
        let mut violations = 0;
        let mut rows = 0;
        for seed in 0..10 {
            let mut cfg = SolverConfig::defaults(Algorithm::NetAdm);
            cfg.outer_iters = 300;
            cfg.trace_every = 1;
            cfg.seed = seed;
            let out = solve(&meas, Some(&digit_decoder(seed)?), &cfg, None)?;
            for r in &out.trace.rows {
                let gap = r.f_u - r.f_utilde;
                if !(gap <= 1e-12) {
                    violations += 1;
                }
                worst = worst.max(gap);
                rows += 1;
            }
        }
        Ok(CheckOutcome::new(
            NAME,
            violations == 0 && rows == 3000,
            format!("{violations} violations over {rows} iterations, max f(u)-f(u~) {worst:.2e}"),
        ))
    })
}

/// Backpropagated weight gradients against central differences on `{4,3}`
/// decoders, plus the exact 0.5 output of an all-zero network.
pub fn check_decoder_backprop() -> CheckOutcome {
    const NAME: &str = "decoder backprop";
    catch(NAME, || {
        let h = 1e-6;
        let mut worst = 0.0f64;
        let mut coords = 0;
        for seed in 0..4u64 {
            let cfg = DecoderConfig::for_output(vec![4, 3], 1, 16, 16, seed)?;
            let net = DecoderNet::init(cfg.clone())?;
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let probe = vec![uniform_grid(16, 16, -1.0, 1.0, &mut rng)];
            let objective = |n: &DecoderNet| -> Result<f64> { Ok(n.forward()[0].dot(&probe[0])?) };
            let analytic = net.backward(&net.forward_cached(), &probe)?;
            let (mut num, mut den) = (0.0, 0.0);
            for (layer, w) in analytic.iter().enumerate() {
                for i in 0..w.len() {
                    let mut up = net.clone();
                    let mut dn = net.clone();
                    up.weights_mut()[layer].data[i] += h;
                    dn.weights_mut()[layer].data[i] -= h;
                    let fd = (objective(&up)? - objective(&dn)?) / (2.0 * h);
                    num += (fd - w.data[i]).powi(2);
                    den += w.data[i].powi(2);
                    coords += 1;
                }
            }
            worst = worst.max((num / den).sqrt());
        }
        let cfg = DecoderConfig::for_output(vec![4, 3], 2, 16, 16, 0)?;
        let zeros = cfg
            .weight_shapes()
            .into_iter()
            .map(|(r, c)| Matrix::zeros(r, c))
            .collect();
        let latent = DecoderNet::init(cfg.clone())?.latent().clone();
        let flat = DecoderNet::from_parts(cfg, latent, zeros)?.forward();
        let exact_half = flat.iter().all(|g| g.as_slice().iter().all(|&v| v == 0.5));
        Ok(CheckOutcome::new(
            NAME,
            worst <= 1e-5 && coords >= 50 && exact_half,
            format!(
                "max relative error {worst:.2e} (limit 1e-5) over {coords} coordinates; zero weights give 0.5: {exact_half}"
            ),
        ))
    })
}

/// Net-ADM with the decoder projection switched off matches ADMM bit for bit.
pub fn check_degenerate_identity() -> CheckOutcome {
    const NAME: &str = "degenerate identity";
    catch(NAME, || {
        let (_, meas) = digit_measurement(1.5)?;
        let mut admm = SolverConfig::defaults(Algorithm::Admm);
        admm.outer_iters = 50;
        admm.trace_every = 1;
        let mut net = SolverConfig::defaults(Algorithm::NetAdm);
        net.outer_iters = 50;
        net.inner_steps = 0;
        net.trace_every = 1;
        let a = solve(&meas, None, &admm, None)?;
        let b = solve(&meas, Some(&digit_decoder(0)?), &net, None)?;
        let bits = |gs: &[RealGrid]| -> Vec<u64> {
            gs.iter()
                .flat_map(|g| g.as_slice().iter().map(|v| v.to_bits()))
                .collect()
        };
        let same_recon = bits(&a.reconstruction) == bits(&b.reconstruction);
        let same_state = match (&a.admm_state, &b.admm_state) {
            (Some(x), Some(y)) => {
                bits(&x.u) == bits(&y.u)
                    && bits(&x.lambda) == bits(&y.lambda)
                    && bits(&x.u_tilde) == bits(&y.u_tilde)
            }
            _ => false,
        };
        let same_trace = a.trace.rows.len() == b.trace.rows.len()
            && a.trace.rows.iter().zip(&b.trace.rows).all(|(r, s)| {
                r.f_u.to_bits() == s.f_u.to_bits() && r.f_utilde.to_bits() == s.f_utilde.to_bits()
            });
        Ok(CheckOutcome::new(
            NAME,
            same_recon && same_state && same_trace,
            format!("50 iterations: reconstruction {same_recon}, iterates {same_state}, losses {same_trace}"),
        ))
    })
}

/// Empirical SNR of the generated noise on 10 draws per level.
pub fn check_snr_calibration() -> CheckOutcome {
    const NAME: &str = "snr calibration";
    catch(NAME, || {
        let x = vec![synthetic::portrait().remove(0)];
        let clean = make_measurement(&x, 2.0, None, 1e-3, 0)?;
        let mut worst = 0.0f64;
        for snr in [70.0, 40.0, 20.0] {
            for draw in 0..10 {
                let noisy = make_measurement(&x, 2.0, Some(snr), 1e-3, 1000 + draw)?;
                let noise = noisy.channel(0).sub(clean.channel(0))?;
                worst = worst.max((empirical_snr(clean.channel(0), noise.as_slice()) - snr).abs());
            }
        }
        Ok(CheckOutcome::new(
            NAME,
            worst <= 0.5,
            format!("max deviation {worst:.3} dB (limit 0.5) over 30 draws at 70/40/20 dB"),
        ))
    })
}

/// Net-ADM recovers images that its own decoder can produce.
///
/// The truth keeps the latent of the solver seed and draws fresh weights.
/// Scores use the better of the estimate and its 180° rotation, which has the
/// same Fourier magnitude.
pub fn check_in_range_recovery() -> CheckOutcome {
    const NAME: &str = "in-range recovery";
    catch(NAME, || {
        let start = Instant::now();
        let mut scores = Vec::new();
        for seed in 0..10u64 {
            let cfg = digit_decoder(seed)?;
            let mut truth_net = DecoderNet::init(cfg.clone())?;
            truth_net.resample_weights(seed + 1000);
            let truth = truth_net.forward();
            let meas = make_measurement(&truth, 2.0, None, 1e-3, 0)?;
            let mut sc = SolverConfig::defaults(Algorithm::NetAdm);
            sc.outer_iters = 300;
            sc.seed = seed;
            let out = solve(&meas, Some(&cfg), &sc, None)?;
            scores.push(Score::compute(&out.reconstruction, &truth, true).psnr);
        }
        let hits = scores.iter().filter(|&&p| p >= 35.0).count();
        let secs = start.elapsed().as_secs_f64();
        let list: Vec<String> = scores.iter().map(|p| format!("{p:.1}")).collect();
        Ok(CheckOutcome::new(
            NAME,
            hits >= 8 && secs <= 600.0,
            format!(
                "{hits}/10 seeds at >= 35 dB [{}] in {secs:.1}s",
                list.join(", ")
            ),
        ))
    })
}

fn mean_psnr(report: &RunReport, alg: Algorithm, rate: f64, snr: Option<f64>) -> Result<f64> {
    let row = report
        .aggregate(alg, rate, snr)
        .ok_or_else(|| anyhow!("no {alg} runs at rate {rate}"))?;
    if row.failures > 0 {
        return Err(anyhow!(
            "{} of {} {alg} runs failed",
            row.failures,
            row.runs
        ));
    }
    row.psnr_mean
        .ok_or_else(|| anyhow!("no {alg} scores at rate {rate}"))
}

fn base_plan(image: &str, height: usize, width: usize, channels: usize) -> ExperimentPlan {
    ExperimentPlan {
        images: vec![image.to_string()],
        algorithms: vec![Algorithm::NetAdm],
        sampling_rates: vec![2.0],
        snr_levels_db: Vec::new(),
        repeats: 5,
        seed: 0,
        output_dir: PathBuf::from("."),
        height,
        width,
        channels,
        preprocess_mnist: false,
        resolve_flip: false,
        variants: Vec::new(),
        solver: Default::default(),
        overrides: Default::default(),
        threads: 0,
        trace_every: 0,
        save_reconstructions: false,
    }
}

/// Image for the sampling-rate trend: `$NETADM_MNIST_DIGIT` or the synthetic digit.
pub fn digit_source() -> String {
    std::env::var(DIGIT_ENV).unwrap_or_else(|_| "synthetic:digit".into())
}

/// Image for the noise trend: `$NETADM_RGB_IMAGE` or the bundled 64×64 photograph.
pub fn rgb_source() -> String {
    std::env::var(RGB_ENV).unwrap_or_else(|_| {
        PathBuf::from(env!("CARGO_MANIFEST_DIR"))
            .join("assets/astronaut64.png")
            .to_string_lossy()
            .into_owned()
    })
}

/// On a preprocessed digit, averaged over `repeats` seeds: Net-ADM does not
/// lose more than 1 dB going from r = 1.2 to r = 2.0, and beats ADMM at r = 1.2
/// by at least 2 dB.
pub fn check_rate_trend(image: &str, repeats: usize) -> CheckOutcome {
    const NAME: &str = "sampling-rate trend";
    catch(NAME, || {
        let start = Instant::now();
        let mut plan = base_plan(image, 28, 28, 1);
        plan.algorithms = vec![Algorithm::Admm, Algorithm::NetAdm];
        plan.sampling_rates = vec![1.2, 2.0];
        plan.preprocess_mnist = true;
        plan.repeats = repeats;
        let report = execute(&plan)?;
        let net_lo = mean_psnr(&report, Algorithm::NetAdm, 1.2, None)?;
        let net_hi = mean_psnr(&report, Algorithm::NetAdm, 2.0, None)?;
        let admm_lo = mean_psnr(&report, Algorithm::Admm, 1.2, None)?;
        let a = net_hi >= net_lo - 1.0;
        let b = net_lo >= admm_lo + 2.0;
        Ok(CheckOutcome::new(
            NAME,
            a && b,
            format!(
                "net_adm r=2.0 {net_hi:.2} vs r=1.2 {net_lo:.2} dB ({}); net_adm {net_lo:.2} vs admm {admm_lo:.2} dB at r=1.2 ({}); {repeats} seeds, {:.0}s",
                if a { "ok" } else { "fails" },
                if b { "ok" } else { "fails" },
                start.elapsed().as_secs_f64()
            ),
        ))
    })
}

/// On a 64×64 RGB image at r = 2, averaged over `repeats` noise and decoder
/// seeds: Net-ADM PSNR does not rise by more than 1.5 dB per step as the SNR
/// drops 70 → 40 → 20 dB, and Net-ADM matches or beats ADMM at 20 dB.
pub fn check_noise_trend(image: &str, repeats: usize) -> CheckOutcome {
    const NAME: &str = "noise trend";
    catch(NAME, || {
        let start = Instant::now();
        let mut plan = base_plan(image, 64, 64, 3);
        plan.snr_levels_db = vec![70.0, 40.0, 20.0];
        plan.resolve_flip = true;
        plan.repeats = repeats;
        let net = execute(&plan)?;
        plan.algorithms = vec![Algorithm::Admm];
        plan.snr_levels_db = vec![20.0];
        let admm = execute(&plan)?;
        let p: Vec<f64> = [70.0, 40.0, 20.0]
            .into_iter()
            .map(|s| mean_psnr(&net, Algorithm::NetAdm, 2.0, Some(s)))
            .collect::<Result<_>>()?;
        let admm20 = mean_psnr(&admm, Algorithm::Admm, 2.0, Some(20.0))?;
        let monotone = p[1] <= p[0] + 1.5 && p[2] <= p[1] + 1.5;
        let beats = p[2] >= admm20;
        Ok(CheckOutcome::new(
            NAME,
            monotone && beats,
            format!(
                "net_adm {:.2} / {:.2} / {:.2} dB at 70/40/20 dB ({}); admm {admm20:.2} dB at 20 dB ({}); {repeats} seeds, {:.0}s",
                p[0],
                p[1],
                p[2],
                if monotone { "ok" } else { "fails" },
                if beats { "ok" } else { "fails" },
                start.elapsed().as_secs_f64()
            ),
        ))
    })
}

/// Checks that finish in seconds.
pub fn run_quick() -> Vec<CheckOutcome> {
    let dft = |u: &ComplexGrid| dft2(u);
    vec![
        check_gradient(&smoothed_loss_grad),
        check_lipschitz(&smoothed_loss_grad),
        check_cross_path(),
        check_descent(),
        check_decoder_backprop(),
        check_degenerate_identity(),
        check_snr_calibration(),
        check_dft_oracle(&dft),
        check_parseval(&dft),
    ]
}

/// Quick checks, in-range recovery and both trend checks.
pub fn run_full(repeats: usize) -> Vec<CheckOutcome> {
    let mut out = run_quick();
    out.push(check_in_range_recovery());
    out.push(check_rate_trend(&digit_source(), repeats));
    out.push(check_noise_trend(&rgb_source(), repeats));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    // gradient that uses the raw magnitude where the smoothed one belongs
    fn unsmoothed_grad(
        u: &RealGrid,
        meas: &MeasurementSet,
        c: usize,
    ) -> netadm_core::Result<RealGrid> {
        let mut spec = meas.plan().forward_real(u)?;
        let eps = meas.epsilon();
        for (z, b) in spec
            .as_mut_slice()
            .iter_mut()
            .zip(meas.channel(c).as_slice())
        {
            *z *= b / (z.norm_sqr() + eps).sqrt();
        }
        meas.plan().inverse_in_place(&mut spec)?;
        u.sub(&spec.re())
    }

    #[test]
    fn gradient_check_passes_and_catches_unsmoothed_ratio() {
        assert!(check_gradient(&smoothed_loss_grad).passed);
        let bad = check_gradient(&unsmoothed_grad);
        assert!(!bad.passed, "{bad}");
    }

    #[test]
    fn lipschitz_check_catches_scaled_gradient() {
        assert!(check_lipschitz(&smoothed_loss_grad).passed);
        let big = |u: &RealGrid, m: &MeasurementSet, c: usize| {
            Ok(smoothed_loss_grad(u, m, c)?.scale(1e4))
        };
        assert!(!check_lipschitz(&big).passed);
    }

    #[test]
    fn naive_dft_known_values() {
        let u = ComplexGrid::from_real(&RealGrid::new(1, 4, vec![1.0, 0.0, 0.0, 0.0]).unwrap());
        assert!(naive_dft(&u)
            .as_slice()
            .iter()
            .all(|z| (z - Complex64::new(1.0, 0.0)).norm() < 1e-15));
        let ones = ComplexGrid::from_real(&RealGrid::filled(3, 2, 1.0));
        let f = naive_dft(&ones);
        assert!((f.as_slice()[0].re - 6.0).abs() < 1e-15);
        assert!(f.as_slice()[1..].iter().all(|z| z.norm() < 1e-14));
    }

    #[test]
    fn dft_checks_catch_scaling_and_conjugation() {
        let good = |u: &ComplexGrid| dft2(u);
        assert!(check_dft_oracle(&good).passed);
        assert!(check_parseval(&good).passed);
        let scaled = |u: &ComplexGrid| {
            let f = dft2(u);
            let s = 1.0 / ((f.height() * f.width()) as f64).sqrt();
            ComplexGrid::new(
                f.height(),
                f.width(),
                f.as_slice().iter().map(|z| z * s).collect(),
            )
            .unwrap()
        };
        assert!(!check_parseval(&scaled).passed);
        let conj = |u: &ComplexGrid| {
            let f = dft2(u);
            ComplexGrid::new(
                f.height(),
                f.width(),
                f.as_slice().iter().map(|z| z.conj()).collect(),
            )
            .unwrap()
        };
        assert!(check_parseval(&conj).passed);
        assert!(!check_dft_oracle(&conj).passed);
    }

    #[test]
    fn outcome_line() {
        let o = CheckOutcome::new("x", false, "detail".into());
        assert_eq!(o.to_string(), "FAIL x: detail");
    }
}

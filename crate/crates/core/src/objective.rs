//! The smoothed amplitude loss
//!
//! `f(u) = 1/(2m) ‖√(b² + ε) − √(|F u|² + ε)‖²`
//!
//! its gradient `∇f(u) = u − Re F⁻¹( √(b²+ε)/√(|Fu|²+ε) ⊙ F u )`, the Lipschitz
//! bound of that gradient and the unit-step descent map `g(u) = u − ∇f(u)`.

use crate::error::{check_shape, Error, Result};
use crate::grid::{FourierPlan, PadSpec, RealGrid};

pub const DEFAULT_EPSILON: f64 = 1e-3;

/// Per-channel Fourier magnitudes on the padded grid.
#[derive(Clone, Debug)]
pub struct MeasurementSet {
    channels: Vec<RealGrid>,
    // √(b² + ε), cached per channel
    smoothed: Vec<RealGrid>,
    symmetric: Vec<bool>,
    spec: PadSpec,
    epsilon: f64,
    plan: FourierPlan,
}

impl MeasurementSet {
    pub fn new(channels: Vec<RealGrid>, spec: PadSpec, epsilon: f64) -> Result<Self> {
        if channels.is_empty() {
            return Err(Error::Config(
                "measurement needs at least one channel".into(),
            ));
        }
        if !(epsilon > 0.0) || !epsilon.is_finite() {
            return Err(Error::Config(format!(
                "epsilon must be positive, got {epsilon}"
            )));
        }
        for b in &channels {
            check_shape("MeasurementSet", spec.outer(), b.shape())?;
        }
        let smoothed = channels
            .iter()
            .map(|b| b.map(|v| (v * v + epsilon).sqrt()))
            .collect();
        let symmetric = channels.iter().map(is_conjugate_symmetric).collect();
        Ok(Self {
            plan: FourierPlan::new(spec.outer_h, spec.outer_w),
            channels,
            smoothed,
            symmetric,
            spec,
            epsilon,
        })
    }

    pub fn channels(&self) -> &[RealGrid] {
        &self.channels
    }

    pub fn channel(&self, index: usize) -> &RealGrid {
        &self.channels[index]
    }

    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    /// `√(b² + ε)` for one channel.
    pub fn smoothed_magnitude(&self, index: usize) -> &RealGrid {
        &self.smoothed[index]
    }

    pub fn spec(&self) -> &PadSpec {
        &self.spec
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn m(&self) -> usize {
        self.spec.m()
    }

    pub fn plan(&self) -> &FourierPlan {
        &self.plan
    }

    /// Same magnitudes with a different smoothing constant.
    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        Self::new(self.channels.clone(), self.spec, epsilon)
    }

    fn check_channel(&self, u: &RealGrid, channel: usize, context: &'static str) -> Result<()> {
        if channel >= self.channels.len() {
            return Err(Error::Config(format!(
                "channel {channel} out of range ({} channels)",
                self.channels.len()
            )));
        }
        check_shape(context, self.spec.outer(), u.shape())
    }
}

// |b| symmetric under (p, q) -> (-p, -q), as it is for noiseless data from a real signal.
fn is_conjugate_symmetric(b: &RealGrid) -> bool {
    let (h, w) = b.shape();
    let tol = 1e-9 * b.max_abs().max(1.0);
    (0..h).all(|p| (0..w).all(|q| (b[(p, q)] - b[((h - p) % h, (w - q) % w)]).abs() <= tol))
}

pub fn smoothed_loss(u: &RealGrid, meas: &MeasurementSet, channel: usize) -> Result<f64> {
    meas.check_channel(u, channel, "smoothed_loss")?;
    let spectrum = meas.plan.forward_real(u)?;
    let eps = meas.epsilon;
    let sum: f64 = spectrum
        .as_slice()
        .iter()
        .zip(meas.smoothed[channel].as_slice())
        .map(|(z, a)| {
            let d = a - (z.norm_sqr() + eps).sqrt();
            d * d
        })
        .sum();
    Ok(sum / (2.0 * meas.m() as f64))
}

/// Sum of [`smoothed_loss`] over all channels.
pub fn total_loss(us: &[RealGrid], meas: &MeasurementSet) -> Result<f64> {
    if us.len() != meas.num_channels() {
        return Err(Error::Config(format!(
            "expected {} channels, got {}",
            meas.num_channels(),
            us.len()
        )));
    }
    us.iter()
        .enumerate()
        .map(|(c, u)| smoothed_loss(u, meas, c))
        .sum()
}

/// Mean squared difference between `|F u|` and `b`, without smoothing.
pub fn magnitude_mse(u: &RealGrid, meas: &MeasurementSet, channel: usize) -> Result<f64> {
    meas.check_channel(u, channel, "magnitude_mse")?;
    let spectrum = meas.plan.forward_real(u)?;
    let sum: f64 = spectrum
        .as_slice()
        .iter()
        .zip(meas.channels[channel].as_slice())
        .map(|(z, b)| (z.norm() - b).powi(2))
        .sum();
    Ok(sum / meas.m() as f64)
}

pub fn smoothed_loss_grad(u: &RealGrid, meas: &MeasurementSet, channel: usize) -> Result<RealGrid> {
    meas.check_channel(u, channel, "smoothed_loss_grad")?;
    let mut spectrum = meas.plan.forward_real(u)?;
    let eps = meas.epsilon;
    for (z, a) in spectrum
        .as_mut_slice()
        .iter_mut()
        .zip(meas.smoothed[channel].as_slice())
    {
        *z *= a / (z.norm_sqr() + eps).sqrt();
    }
    meas.plan.inverse_in_place(&mut spectrum)?;
    if meas.symmetric[channel] {
        let scale = spectrum.re().max_abs().max(1.0);
        debug_assert!(
            spectrum.max_abs_im() <= 1e-10 * scale,
            "imaginary residue {} in gradient",
            spectrum.max_abs_im()
        );
    }
    u.sub(&spectrum.re())
}

/// `L = 1 + (2/√ε) max_c ‖√(b_c² + ε)‖_∞`.
pub fn lipschitz_bound(meas: &MeasurementSet) -> f64 {
    let sup = meas
        .smoothed
        .iter()
        .map(|a| a.max_abs())
        .fold(0.0, f64::max);
    1.0 + 2.0 / meas.epsilon.sqrt() * sup
}

/// `g(ũ) = ũ − ∇f(ũ)`.
pub fn descent_step(u_tilde: &RealGrid, meas: &MeasurementSet, channel: usize) -> Result<RealGrid> {
    let grad = smoothed_loss_grad(u_tilde, meas, channel)?;
    u_tilde.sub(&grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{fourier_magnitude, zero_pad};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_grid(h: usize, w: usize, rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> RealGrid {
        RealGrid::from_fn(h, w, |_, _| rng.random_range(lo..hi))
    }

    fn single(b: RealGrid, eps: f64) -> MeasurementSet {
        let (h, w) = b.shape();
        MeasurementSet::new(vec![b], PadSpec::new(h, w, h, w).unwrap(), eps).unwrap()
    }

    // Elementwise re-evaluation using the direct DFT definition.
    fn loss_oracle(u: &RealGrid, b: &RealGrid, eps: f64) -> f64 {
        let (h, w) = u.shape();
        let mut sum = 0.0;
        for p in 0..h {
            for q in 0..w {
                let (mut re, mut im) = (0.0, 0.0);
                for s in 0..h {
                    for t in 0..w {
                        let ang = -2.0
                            * std::f64::consts::PI
                            * ((p * s) as f64 / h as f64 + (q * t) as f64 / w as f64);
                        re += u[(s, t)] * ang.cos();
                        im += u[(s, t)] * ang.sin();
                    }
                }
                let d = (b[(p, q)].powi(2) + eps).sqrt() - (re * re + im * im + eps).sqrt();
                sum += d * d;
            }
        }
        sum / (2.0 * (h * w) as f64)
    }

    #[test]
    fn loss_vanishes_at_truth() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random_grid(4, 4, &mut rng, 0.0, 1.0);
        let spec = PadSpec::new(4, 4, 8, 8).unwrap();
        let b = fourier_magnitude(&x, &spec).unwrap();
        for eps in [1e-3, 0.5, 10.0] {
            let meas = MeasurementSet::new(vec![b.clone()], spec, eps).unwrap();
            let u = zero_pad(&x, &spec).unwrap();
            assert!(smoothed_loss(&u, &meas, 0).unwrap() <= 1e-24);
            assert!(smoothed_loss_grad(&u, &meas, 0).unwrap().max_abs() <= 1e-12);
        }
    }

    #[test]
    fn loss_at_zero_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let b = random_grid(4, 4, &mut rng, 0.0, 3.0);
        let eps = 0.01;
        let meas = single(b.clone(), eps);
        let expected: f64 = b
            .as_slice()
            .iter()
            .map(|v| ((v * v + eps).sqrt() - eps.sqrt()).powi(2))
            .sum::<f64>()
            / 32.0;
        let got = smoothed_loss(&RealGrid::zeros(4, 4), &meas, 0).unwrap();
        assert!((got - expected).abs() <= 1e-14 * expected);
    }

    #[test]
    fn loss_matches_direct_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u = random_grid(4, 4, &mut rng, -1.0, 1.0);
        let b = random_grid(4, 4, &mut rng, 0.0, 4.0);
        let meas = single(b.clone(), 1e-3);
        let got = smoothed_loss(&u, &meas, 0).unwrap();
        let want = loss_oracle(&u, &b, 1e-3);
        assert!((got - want).abs() <= 1e-12 * want, "{got} vs {want}");
    }

    #[test]
    fn gradient_with_zero_magnitudes() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let u = random_grid(4, 4, &mut rng, -1.0, 1.0);
        let eps = 0.3;
        let meas = single(RealGrid::zeros(4, 4), eps);
        let grad = smoothed_loss_grad(&u, &meas, 0).unwrap();
        let mut spec = crate::grid::dft2_real(&u);
        for z in spec.as_mut_slice() {
            *z *= eps.sqrt() / (z.norm_sqr() + eps).sqrt();
        }
        let expected = u.sub(&crate::grid::idft2(&spec).re()).unwrap();
        assert!(grad.max_abs_diff(&expected).unwrap() <= 1e-14);
        assert!(grad.max_abs() > 1e-3);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let u = random_grid(4, 4, &mut rng, -1.0, 1.0);
        let b = random_grid(4, 4, &mut rng, 0.0, 4.0);
        let meas = single(b, 1e-3);
        let grad = smoothed_loss_grad(&u, &meas, 0).unwrap();
        let h = 1e-6;
        let fd = RealGrid::from_fn(4, 4, |r, c| {
            let mut up = u.clone();
            let mut dn = u.clone();
            up[(r, c)] += h;
            dn[(r, c)] -= h;
            (smoothed_loss(&up, &meas, 0).unwrap() - smoothed_loss(&dn, &meas, 0).unwrap())
                / (2.0 * h)
        });
        let rel = grad.sub(&fd).unwrap().norm() / fd.norm();
        assert!(rel <= 1e-6, "relative error {rel}");
    }

    #[test]
    fn lipschitz_closed_forms() {
        for eps in [1e-3, 0.1, 1.0, 7.0] {
            let meas = single(RealGrid::zeros(3, 3), eps);
            assert!((lipschitz_bound(&meas) - 3.0).abs() <= 1e-12);
        }
        let meas = single(RealGrid::filled(3, 3, 1.0), 1.0);
        assert!((lipschitz_bound(&meas) - (1.0 + 2.0 * 2f64.sqrt())).abs() <= 1e-12);
    }

    #[test]
    fn descent_step_fixed_point_and_large_epsilon_limit() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = random_grid(3, 3, &mut rng, 0.0, 1.0);
        let spec = PadSpec::new(3, 3, 6, 6).unwrap();
        let b = fourier_magnitude(&x, &spec).unwrap();
        let meas = MeasurementSet::new(vec![b], spec, 1e-3).unwrap();
        let u = zero_pad(&x, &spec).unwrap();
        assert!(
            descent_step(&u, &meas, 0)
                .unwrap()
                .max_abs_diff(&u)
                .unwrap()
                <= 1e-12
        );

        let v = random_grid(6, 6, &mut rng, -0.1, 0.1);
        let meas = MeasurementSet::new(vec![RealGrid::zeros(6, 6)], spec, 1e12).unwrap();
        assert!(
            descent_step(&v, &meas, 0)
                .unwrap()
                .max_abs_diff(&v)
                .unwrap()
                <= 1e-9
        );
    }

    #[test]
    fn noisy_magnitudes_keep_real_gradient() {
        // Asymmetric b: the inverse transform is genuinely complex and only its real part is the gradient.
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let u = random_grid(5, 6, &mut rng, -1.0, 1.0);
        let b = random_grid(5, 6, &mut rng, -0.5, 3.0);
        let meas = single(b, 1e-3);
        let grad = smoothed_loss_grad(&u, &meas, 0).unwrap();
        let (r, c) = (2, 3);
        let h = 1e-6;
        let mut up = u.clone();
        let mut dn = u.clone();
        up[(r, c)] += h;
        dn[(r, c)] -= h;
        let fd = (smoothed_loss(&up, &meas, 0).unwrap() - smoothed_loss(&dn, &meas, 0).unwrap())
            / (2.0 * h);
        assert!((fd - grad[(r, c)]).abs() <= 1e-6 * fd.abs().max(1e-3));
    }

    #[test]
    fn rejects_bad_inputs() {
        let spec = PadSpec::new(2, 2, 4, 4).unwrap();
        assert!(MeasurementSet::new(vec![RealGrid::zeros(4, 4)], spec, 0.0).is_err());
        assert!(MeasurementSet::new(vec![RealGrid::zeros(3, 4)], spec, 1e-3).is_err());
        assert!(MeasurementSet::new(vec![], spec, 1e-3).is_err());
        let meas = MeasurementSet::new(vec![RealGrid::zeros(4, 4)], spec, 1e-3).unwrap();
        assert!(smoothed_loss(&RealGrid::zeros(2, 2), &meas, 0).is_err());
        assert!(smoothed_loss(&RealGrid::zeros(4, 4), &meas, 1).is_err());
    }
}

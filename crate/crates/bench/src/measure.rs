//! Oversampled magnitude measurements with optional additive Gaussian noise.

use anyhow::{bail, ensure, Result};
use netadm_core::grid::fourier_magnitude;
use netadm_core::{MeasurementSet, PadSpec, RealGrid};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Population variance of all entries.
pub fn variance(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n
}

/// Noise variance for a requested SNR: `σ² = Var(|ℱ𝒫x|) · 10^(−snr/20)`.
pub fn noise_variance(magnitude: &RealGrid, snr_db: f64) -> f64 {
    variance(magnitude.as_slice()) * 10f64.powf(-snr_db / 20.0)
}

/// `20·log₁₀(Var(|ℱ𝒫x|) / Var(η))`, the SNR convention used throughout the harness.
pub fn empirical_snr(magnitude: &RealGrid, noise: &[f64]) -> f64 {
    20.0 * (variance(magnitude.as_slice()) / variance(noise)).log10()
}

/// Draws the noise field for one channel.
pub fn draw_noise(len: usize, variance: f64, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    let normal = Normal::new(0.0, variance.sqrt())?;
    Ok((0..len).map(|_| normal.sample(rng)).collect())
}

/// Builds `b = |ℱ𝒫x| + η` for every channel of `x`, with `m_i = round(r·n_i)`.
/// Noise is independent per channel and scaled by that channel's spectrum variance.
pub fn make_measurement(
    x: &[RealGrid],
    rate: f64,
    snr_db: Option<f64>,
    epsilon: f64,
    noise_seed: u64,
) -> Result<MeasurementSet> {
    if !(rate > 1.0) {
        bail!("sampling rate must exceed 1, got {rate}");
    }
    ensure!(!x.is_empty(), "image has no channels");
    let (h, w) = x[0].shape();
    let spec = PadSpec::from_rate(h, w, rate)?;
    let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
    let mut channels = Vec::with_capacity(x.len());
    for xc in x {
        ensure!(
            xc.shape() == (h, w),
            "channel shapes differ: {:?} vs {:?}",
            xc.shape(),
            (h, w)
        );
        let mut b = fourier_magnitude(xc, &spec)?;
        if let Some(snr) = snr_db {
            let noise = draw_noise(b.len(), noise_variance(&b, snr), &mut rng)?;
            for (bv, n) in b.as_mut_slice().iter_mut().zip(noise) {
                *bv += n;
            }
        }
        channels.push(b);
    }
    Ok(MeasurementSet::new(channels, spec, epsilon)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn image() -> RealGrid {
        RealGrid::from_fn(16, 16, |r, c| ((r * 3 + c * 5) % 7) as f64 / 7.0)
    }

    #[test]
    fn noiseless_is_exact_magnitude() {
        let x = image();
        let meas = make_measurement(&[x.clone()], 1.5, None, 1e-3, 0).unwrap();
        assert_eq!(meas.spec().outer(), (24, 24));
        assert_eq!(
            meas.channel(0),
            &fourier_magnitude(&x, meas.spec()).unwrap()
        );
    }

    #[test]
    fn zero_db_noise_matches_spectrum_variance() {
        let b = fourier_magnitude(&image(), &PadSpec::from_rate(16, 16, 2.0).unwrap()).unwrap();
        assert_eq!(noise_variance(&b, 0.0), variance(b.as_slice()));
    }

    #[test]
    fn rejects_low_rate() {
        assert!(make_measurement(&[image()], 1.0, None, 1e-3, 0).is_err());
        assert!(make_measurement(&[image()], 0.5, None, 1e-3, 0).is_err());
    }

    #[test]
    fn noise_is_seeded() {
        let a = make_measurement(&[image()], 1.5, Some(30.0), 1e-3, 7).unwrap();
        let b = make_measurement(&[image()], 1.5, Some(30.0), 1e-3, 7).unwrap();
        let c = make_measurement(&[image()], 1.5, Some(30.0), 1e-3, 8).unwrap();
        assert_eq!(a.channel(0), b.channel(0));
        assert_ne!(a.channel(0), c.channel(0));
    }

    #[test]
    fn rounds_fractional_rates() {
        let x = RealGrid::zeros(28, 28);
        let meas = make_measurement(&[x], 1.1, None, 1e-3, 0).unwrap();
        assert_eq!(meas.spec().outer(), (31, 31));
    }
}

//! PSNR and SSIM over image stacks with dynamic range 1.

use netadm_core::RealGrid;

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

fn check_stacks(a: &[RealGrid], b: &[RealGrid]) {
    assert_eq!(a.len(), b.len(), "channel count mismatch");
    for (x, y) in a.iter().zip(b) {
        assert_eq!(x.shape(), y.shape(), "channel shape mismatch");
    }
}

/// Mean squared error over all pixels and channels, after clamping `estimate` to [0, 1].
pub fn mse(estimate: &[RealGrid], truth: &[RealGrid]) -> f64 {
    check_stacks(estimate, truth);
    let mut sum = 0.0;
    let mut count = 0usize;
    for (e, t) in estimate.iter().zip(truth) {
        for (a, b) in e.as_slice().iter().zip(t.as_slice()) {
            sum += (a.clamp(0.0, 1.0) - b).powi(2);
        }
        count += t.len();
    }
    sum / count as f64
}

/// `20·log₁₀(1/√MSE)`; an exact match gives `f64::INFINITY`.
pub fn psnr(estimate: &[RealGrid], truth: &[RealGrid]) -> f64 {
    let e = mse(estimate, truth);
    if e == 0.0 {
        f64::INFINITY
    } else {
        -10.0 * e.log10()
    }
}

fn gaussian_window() -> Vec<f64> {
    let half = (SSIM_WINDOW / 2) as f64;
    let g: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| (-((i as f64 - half).powi(2)) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp())
        .collect();
    let total: f64 = g.iter().sum();
    g.into_iter().map(|v| v / total).collect()
}

/// Mean SSIM of one channel over all valid window positions.
/// Channels smaller than the window use a single window covering the overlap.
fn ssim_channel(x: &RealGrid, y: &RealGrid, window: &[f64]) -> f64 {
    let (h, w) = x.shape();
    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;
    let (wh, ww) = (SSIM_WINDOW.min(h), SSIM_WINDOW.min(w));
    let trim = |n: usize| -> Vec<f64> {
        let off = (SSIM_WINDOW - n) / 2;
        let part = &window[off..off + n];
        let s: f64 = part.iter().sum();
        part.iter().map(|v| v / s).collect()
    };
    let (gr, gc) = (trim(wh), trim(ww));
    let xs = x.as_slice();
    let ys = y.as_slice();
    let mut total = 0.0;
    let mut count = 0usize;
    for r0 in 0..=h - wh {
        for c0 in 0..=w - ww {
            let (mut mx, mut my, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for (i, &wr) in gr.iter().enumerate() {
                for (j, &wc) in gc.iter().enumerate() {
                    let k = (r0 + i) * w + c0 + j;
                    let wt = wr * wc;
                    let (a, b) = (xs[k], ys[k]);
                    mx += wt * a;
                    my += wt * b;
                    sxx += wt * a * a;
                    syy += wt * b * b;
                    sxy += wt * a * b;
                }
            }
            let vx = sxx - mx * mx;
            let vy = syy - my * my;
            let cov = sxy - mx * my;
            total += ((2.0 * mx * my + c1) * (2.0 * cov + c2))
                / ((mx * mx + my * my + c1) * (vx + vy + c2));
            count += 1;
        }
    }
    total / count as f64
}

/// Single-scale SSIM (11×11 Gaussian window, σ = 1.5), averaged over channels.
/// `estimate` is clamped to [0, 1] first.
pub fn ssim(estimate: &[RealGrid], truth: &[RealGrid]) -> f64 {
    check_stacks(estimate, truth);
    let window = gaussian_window();
    let sum: f64 = estimate
        .iter()
        .zip(truth)
        .map(|(e, t)| ssim_channel(&e.clamp(0.0, 1.0), t, &window))
        .sum();
    (sum / truth.len() as f64).clamp(-1.0, 1.0)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Score {
    pub psnr: f64,
    pub ssim: f64,
    /// The 180°-rotated estimate scored better than the direct one.
    pub flipped: bool,
}

impl Score {
    /// Scores `estimate` against `truth`. With `resolve_flip`, the conjugate-flip
    /// (180°-rotated) candidate is scored as well and the higher PSNR is kept.
    pub fn compute(estimate: &[RealGrid], truth: &[RealGrid], resolve_flip: bool) -> Self {
        let direct = Score {
            psnr: psnr(estimate, truth),
            ssim: ssim(estimate, truth),
            flipped: false,
        };
        if !resolve_flip {
            return direct;
        }
        let rotated: Vec<RealGrid> = estimate.iter().map(RealGrid::rotate_180).collect();
        let flip_psnr = psnr(&rotated, truth);
        if flip_psnr > direct.psnr {
            Score {
                psnr: flip_psnr,
                ssim: ssim(&rotated, truth),
                flipped: true,
            }
        } else {
            direct
        }
    }
}

/// Formats a PSNR/SSIM pair as `27.79/0.90`.
pub fn format_pair(psnr: f64, ssim: f64) -> String {
    if psnr.is_infinite() {
        format!("inf/{ssim:.2}")
    } else {
        format!("{psnr:.2}/{ssim:.2}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn ramp(h: usize, w: usize) -> RealGrid {
        RealGrid::from_fn(h, w, |r, c| {
            ((r * w + c) as f64 / (h * w) as f64).sin().abs()
        })
    }

    #[test]
    fn psnr_sentinel_and_closed_form() {
        let x = ramp(12, 12);
        assert_eq!(psnr(&[x.clone()], &[x.clone()]), f64::INFINITY);
        let truth = RealGrid::filled(4, 4, 0.5);
        let est = RealGrid::filled(4, 4, 0.6);
        assert_abs_diff_eq!(psnr(&[est], &[truth]), 20.0, epsilon = 1e-9);
    }

    #[test]
    fn psnr_clamps_estimate() {
        let truth = RealGrid::filled(4, 4, 1.0);
        assert_eq!(
            psnr(&[RealGrid::filled(4, 4, 3.0)], &[truth]),
            f64::INFINITY
        );
    }

    #[test]
    fn ssim_identical_is_one() {
        let x = ramp(20, 17);
        assert_abs_diff_eq!(ssim(&[x.clone()], &[x]), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn ssim_constant_images_match_closed_form() {
        let (a, b) = (0.3, 0.8);
        let x = RealGrid::filled(16, 16, a);
        let y = RealGrid::filled(16, 16, b);
        let c1 = 0.01f64.powi(2);
        let expected = (2.0 * a * b + c1) / (a * a + b * b + c1);
        assert_abs_diff_eq!(ssim(&[y], &[x]), expected, epsilon = 1e-12);
    }

    #[test]
    fn ssim_constant_shift_clamped() {
        let a: f64 = 0.7;
        let x = RealGrid::filled(16, 16, a);
        let shifted = x.map(|v| v + 0.5);
        let c1 = 0.01f64.powi(2);
        let expected = (2.0 * a + c1) / (a * a + 1.0 + c1);
        let got = ssim(&[shifted], &[x]);
        assert!(got < 1.0);
        assert_abs_diff_eq!(got, expected, epsilon = 1e-12);
    }

    #[test]
    fn ssim_symmetric() {
        let x = ramp(16, 16);
        let y = x.rotate_180();
        assert_abs_diff_eq!(
            ssim(&[x.clone()], &[y.clone()]),
            ssim(&[y], &[x]),
            epsilon = 1e-12
        );
    }

    #[test]
    fn flip_resolution_recovers_twin() {
        let x = ramp(12, 12);
        let twin = x.rotate_180();
        let direct = Score::compute(&[twin.clone()], &[x.clone()], false);
        let resolved = Score::compute(&[twin], &[x], true);
        assert!(direct.psnr.is_finite());
        assert_eq!(resolved.psnr, f64::INFINITY);
        assert!(resolved.flipped);
    }

    #[test]
    fn pair_format() {
        assert_eq!(format_pair(27.7912, 0.8999), "27.79/0.90");
        assert_eq!(format_pair(f64::INFINITY, 1.0), "inf/1.00");
    }
}

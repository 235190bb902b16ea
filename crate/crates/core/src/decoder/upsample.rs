//! Bilinear ×2 upsampling (half-pixel centers, edge clamped) and its adjoint.

#[derive(Clone, Copy, Debug)]
struct Tap {
    lo: usize,
    hi: usize,
    w_lo: f64,
    w_hi: f64,
}

fn taps(n: usize) -> Vec<Tap> {
    let mut out = Vec::with_capacity(2 * n);
    for k in 0..n {
        // even output sample sits a quarter pixel before source k
        out.push(if k == 0 {
            Tap {
                lo: 0,
                hi: 0,
                w_lo: 1.0,
                w_hi: 0.0,
            }
        } else {
            Tap {
                lo: k - 1,
                hi: k,
                w_lo: 0.25,
                w_hi: 0.75,
            }
        });
        out.push(Tap {
            lo: k,
            hi: (k + 1).min(n - 1),
            w_lo: 0.75,
            w_hi: 0.25,
        });
    }
    out
}

/// Upsamples an `h × w` image (row-major) into `dst` of size `2h × 2w`.
pub fn upsample2(src: &[f64], h: usize, w: usize, dst: &mut [f64]) {
    debug_assert_eq!(src.len(), h * w);
    debug_assert_eq!(dst.len(), 4 * h * w);
    let (tr, tc) = (taps(h), taps(w));
    let w2 = 2 * w;
    // rows first: h × 2w
    let mut wide = vec![0.0; h * w2];
    for r in 0..h {
        let row = &src[r * w..(r + 1) * w];
        for (o, t) in tc.iter().enumerate() {
            wide[r * w2 + o] = t.w_lo * row[t.lo] + t.w_hi * row[t.hi];
        }
    }
    for (o, t) in tr.iter().enumerate() {
        for c in 0..w2 {
            dst[o * w2 + c] = t.w_lo * wide[t.lo * w2 + c] + t.w_hi * wide[t.hi * w2 + c];
        }
    }
}

/// Adjoint of [`upsample2`]: maps a `2h × 2w` gradient back onto `h × w`.
pub fn upsample2_adjoint(grad: &[f64], h: usize, w: usize, dst: &mut [f64]) {
    debug_assert_eq!(grad.len(), 4 * h * w);
    debug_assert_eq!(dst.len(), h * w);
    let (tr, tc) = (taps(h), taps(w));
    let w2 = 2 * w;
    let mut wide = vec![0.0; h * w2];
    for (o, t) in tr.iter().enumerate() {
        for c in 0..w2 {
            let g = grad[o * w2 + c];
            wide[t.lo * w2 + c] += t.w_lo * g;
            wide[t.hi * w2 + c] += t.w_hi * g;
        }
    }
    dst.iter_mut().for_each(|v| *v = 0.0);
    for r in 0..h {
        for (o, t) in tc.iter().enumerate() {
            let g = wide[r * w2 + o];
            dst[r * w + t.lo] += t.w_lo * g;
            dst[r * w + t.hi] += t.w_hi * g;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn matches_reference_half_pixel_bilinear() {
        // torch.nn.functional.interpolate(scale_factor=2, mode="bilinear", align_corners=False)
        let src = [1.0, 2.0, 3.0, 4.0, 5.0, 7.0];
        let expected = [
            1.0, 1.25, 1.75, 2.25, 2.75, 3.0, //
            1.75, 2.0, 2.5, 3.0625, 3.6875, 4.0, //
            3.25, 3.5, 4.0, 4.6875, 5.5625, 6.0, //
            4.0, 4.25, 4.75, 5.5, 6.5, 7.0,
        ];
        let mut dst = [0.0; 24];
        upsample2(&src, 2, 3, &mut dst);
        assert_eq!(dst, expected);
    }

    #[test]
    fn single_pixel_and_constants() {
        let mut dst = [0.0; 4];
        upsample2(&[3.5], 1, 1, &mut dst);
        assert_eq!(dst, [3.5; 4]);
        let mut dst = vec![0.0; 4 * 12];
        upsample2(&[0.7; 12], 3, 4, &mut dst);
        assert!(dst.iter().all(|&v| (v - 0.7).abs() < 1e-15));
    }

    #[test]
    fn adjoint_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for (h, w) in [(1, 1), (2, 3), (5, 4), (7, 7)] {
            let x: Vec<f64> = (0..h * w).map(|_| rng.random_range(-1.0..1.0)).collect();
            let y: Vec<f64> = (0..4 * h * w)
                .map(|_| rng.random_range(-1.0..1.0))
                .collect();
            let mut ux = vec![0.0; 4 * h * w];
            upsample2(&x, h, w, &mut ux);
            let mut aty = vec![0.0; h * w];
            upsample2_adjoint(&y, h, w, &mut aty);
            let lhs: f64 = ux.iter().zip(&y).map(|(a, b)| a * b).sum();
            let rhs: f64 = x.iter().zip(&aty).map(|(a, b)| a * b).sum();
            assert!((lhs - rhs).abs() <= 1e-12, "{h}x{w}: {lhs} vs {rhs}");
        }
    }
}

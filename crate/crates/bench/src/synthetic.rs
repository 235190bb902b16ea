//! Procedural stand-ins for the benchmark images, used when no image files are supplied.

use netadm_core::RealGrid;

/// Distance from `p` to the segment `a`–`b`.
fn segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len_sq = dx * dx + dy * dy;
    let t = if len_sq == 0.0 {
        0.0
    } else {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len_sq).clamp(0.0, 1.0)
    };
    let (qx, qy) = (a.0 + t * dx, a.1 + t * dy);
    ((p.0 - qx).powi(2) + (p.1 - qy).powi(2)).sqrt()
}

fn stroke(h: usize, w: usize, points: &[(f64, f64)], half_width: f64, soft: f64) -> RealGrid {
    RealGrid::from_fn(h, w, |r, c| {
        let p = (r as f64, c as f64);
        let d = points
            .windows(2)
            .map(|s| segment_distance(p, s[0], s[1]))
            .fold(f64::INFINITY, f64::min);
        (1.0 - (d - half_width) / soft).clamp(0.0, 1.0)
    })
}

/// A 28×28 handwritten-style "2" on a black background, MNIST layout
/// (digit inside the central 20×20 box). The border pixels are all zero.
pub fn digit() -> RealGrid {
    let path = [
        (9.5, 8.5),
        (7.0, 11.0),
        (6.0, 14.0),
        (7.0, 17.0),
        (9.5, 19.0),
        (12.0, 18.0),
        (15.0, 15.0),
        (18.0, 11.0),
        (20.5, 8.0),
        (20.5, 13.0),
        (20.5, 20.0),
    ];
    stroke(28, 28, &path, 1.2, 0.8)
}

// Smooth indicator of the ellipse centred at (cr, cc) with radii (rr, rc).
fn ellipse(r: f64, c: f64, cr: f64, cc: f64, rr: f64, rc: f64) -> f64 {
    let d = (((r - cr) / rr).powi(2) + ((c - cc) / rc).powi(2)).sqrt();
    1.0 / (1.0 + ((d - 1.0) * 12.0).exp())
}

fn blend(base: [f64; 3], top: [f64; 3], alpha: f64) -> [f64; 3] {
    [0, 1, 2].map(|k| base[k] * (1.0 - alpha) + top[k] * alpha)
}

/// A 64×64 RGB head-and-shoulders portrait with smooth regions and a few edges.
pub fn portrait() -> Vec<RealGrid> {
    let (h, w) = (64, 64);
    let mut rgb = vec![vec![0.0; h * w]; 3];
    for r in 0..h {
        for c in 0..w {
            let (rf, cf) = (r as f64, c as f64);
            let t = rf / (h - 1) as f64;
            let mut px = [0.55 - 0.2 * t, 0.6 - 0.15 * t, 0.7 - 0.1 * t];
            px = blend(
                px,
                [0.25, 0.3, 0.45],
                ellipse(rf, cf, 70.0, 32.0, 16.0, 30.0),
            );
            px = blend(
                px,
                [0.28, 0.18, 0.1],
                ellipse(rf, cf, 24.0, 32.0, 20.0, 19.0),
            );
            let shade = 0.08 * ((cf - 32.0) / 16.0).clamp(-1.0, 1.0);
            px = blend(
                px,
                [0.9 - shade, 0.72 - shade, 0.6 - shade],
                ellipse(rf, cf, 33.0, 32.0, 19.0, 14.5),
            );
            for cc in [26.0, 38.0] {
                px = blend(px, [0.95, 0.95, 0.95], ellipse(rf, cf, 30.0, cc, 1.8, 3.2));
                px = blend(px, [0.2, 0.12, 0.08], ellipse(rf, cf, 30.0, cc, 1.5, 1.5));
                px = blend(px, [0.25, 0.15, 0.1], ellipse(rf, cf, 26.5, cc, 0.7, 3.5));
            }
            px = blend(px, [0.78, 0.58, 0.5], ellipse(rf, cf, 36.0, 32.0, 3.5, 1.6));
            px = blend(px, [0.7, 0.25, 0.28], ellipse(rf, cf, 42.5, 32.0, 1.4, 5.0));
            for k in 0..3 {
                rgb[k][r * w + c] = px[k].clamp(0.0, 1.0);
            }
        }
    }
    rgb.into_iter()
        .map(|data| RealGrid::new(h, w, data).expect("finite synthetic image"))
        .collect()
}

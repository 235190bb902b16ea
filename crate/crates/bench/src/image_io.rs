//! 8-bit PGM/PPM/PNG loading and saving as [0, 1] grid stacks.

use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use image::{GrayImage, RgbImage};
use netadm_core::RealGrid;

/// Loads `path` as `channels` (1 or 3) grids of size `height × width` in [0, 1].
/// Larger images are center-cropped; smaller ones are rejected.
pub fn load_image(
    path: &Path,
    height: usize,
    width: usize,
    channels: usize,
) -> Result<Vec<RealGrid>> {
    let img = image::open(path).with_context(|| format!("reading {}", path.display()))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    ensure!(
        h >= height && w >= width,
        "{} is {h}x{w}, smaller than the expected {height}x{width}",
        path.display()
    );
    let (r0, c0) = ((h - height) / 2, (w - width) / 2);
    let raw: Vec<u8> = match channels {
        1 => img.to_luma8().into_raw(),
        3 => img.to_rgb8().into_raw(),
        n => bail!("unsupported channel count {n}"),
    };
    let mut out = vec![Vec::with_capacity(height * width); channels];
    for r in r0..r0 + height {
        for c in c0..c0 + width {
            for (k, ch) in out.iter_mut().enumerate() {
                ch.push(raw[(r * w + c) * channels + k] as f64 / 255.0);
            }
        }
    }
    out.into_iter()
        .map(|data| Ok(RealGrid::new(height, width, data)?))
        .collect()
}

fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Saves a 1- or 3-channel stack; the format follows the file extension.
pub fn save_image(path: &Path, channels: &[RealGrid]) -> Result<()> {
    ensure!(!channels.is_empty(), "nothing to save");
    let (h, w) = channels[0].shape();
    ensure!(
        channels.iter().all(|c| c.shape() == (h, w)),
        "channel shapes differ"
    );
    let (wu, hu) = (w as u32, h as u32);
    let result = match channels.len() {
        1 => GrayImage::from_raw(
            wu,
            hu,
            channels[0].as_slice().iter().map(|&v| to_u8(v)).collect(),
        )
        .expect("buffer size matches")
        .save(path),
        3 => {
            let mut buf = Vec::with_capacity(h * w * 3);
            for i in 0..h * w {
                buf.extend(channels.iter().map(|c| to_u8(c.as_slice()[i])));
            }
            RgbImage::from_raw(wu, hu, buf)
                .expect("buffer size matches")
                .save(path)
        }
        n => bail!("cannot save {n} channels"),
    };
    result.with_context(|| format!("writing {}", path.display()))
}

/// Sets the pixels at (1, 1) and (26, 26) of a 28×28 digit to 1, breaking
/// the 180° rotation ambiguity of the magnitude.
pub fn preprocess_mnist(img: &RealGrid) -> Result<RealGrid> {
    ensure!(
        img.shape() == (28, 28),
        "expected a 28x28 digit, got {:?}",
        img.shape()
    );
    let mut out = img.clone();
    out[(1, 1)] = 1.0;
    out[(26, 26)] = 1.0;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gradient(h: usize, w: usize, phase: usize) -> RealGrid {
        RealGrid::from_fn(h, w, |r, c| ((r * 7 + c * 13 + phase) % 256) as f64 / 255.0)
    }

    #[test]
    fn gray_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let x = RealGrid::from_fn(9, 11, |r, c| (r * 11 + c) as f64 / 98.0);
        for ext in ["png", "pgm"] {
            let path = dir.path().join(format!("g.{ext}"));
            save_image(&path, &[x.clone()]).unwrap();
            let back = load_image(&path, 9, 11, 1).unwrap();
            assert!(back[0].max_abs_diff(&x).unwrap() <= 0.5 / 255.0 + 1e-12);
        }
    }

    #[test]
    fn rgb_center_crop() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.ppm");
        let full: Vec<RealGrid> = (0..3).map(|k| gradient(70, 70, 40 * k)).collect();
        save_image(&path, &full).unwrap();
        let crop = load_image(&path, 64, 64, 3).unwrap();
        for k in 0..3 {
            assert_eq!(crop[k][(0, 0)], full[k][(3, 3)]);
            assert_eq!(crop[k][(63, 63)], full[k][(66, 66)]);
        }
    }

    #[test]
    fn scaling_extremes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.png");
        let x = RealGrid::from_fn(2, 2, |r, _| r as f64);
        save_image(&path, &[x]).unwrap();
        let back = load_image(&path, 2, 2, 1).unwrap();
        assert_eq!(back[0].as_slice(), &[0.0, 0.0, 1.0, 1.0]);
    }

    #[test]
    fn rejects_small_and_missing() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.png");
        save_image(&path, &[RealGrid::zeros(8, 8)]).unwrap();
        assert!(load_image(&path, 16, 16, 1).is_err());
        assert!(load_image(&dir.path().join("missing.png"), 8, 8, 1).is_err());
    }

    #[test]
    fn mnist_marks() {
        let x = gradient(28, 28, 0);
        let y = preprocess_mnist(&x).unwrap();
        assert_eq!((y[(1, 1)], y[(26, 26)]), (1.0, 1.0));
        for r in 0..28 {
            for c in 0..28 {
                if (r, c) != (1, 1) && (r, c) != (26, 26) {
                    assert_eq!(y[(r, c)].to_bits(), x[(r, c)].to_bits());
                }
            }
        }
        assert_eq!(preprocess_mnist(&y).unwrap(), y);
        assert!(preprocess_mnist(&RealGrid::zeros(27, 28)).is_err());
    }
}

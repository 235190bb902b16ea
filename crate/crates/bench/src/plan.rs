//! Experiment plans: which images, algorithms, sampling rates and noise levels to run.
//!
//! Plans are TOML files whose keys mirror [`ExperimentPlan`]:
//!
//! ```toml
//! images = ["digits/3.png", "synthetic:digit"]
//! algorithms = ["admm", "net_adm"]
//! sampling_rates = [1.2, 1.5, 2.0]
//! snr_levels_db = [inf, 40.0, 20.0]   # inf (or an empty list) means noiseless
//! repeats = 10
//! seed = 0
//! output_dir = "results/mnist"
//! height = 28
//! width = 28
//! channels = 1
//! preprocess_mnist = true
//!
//! [solver]            # applied to every algorithm
//! outer_iters = 300
//!
//! [overrides.net_pgd] # applied to one algorithm, after [solver]
//! outer_lr = 0.25
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, ensure, Context, Result};
use netadm_core::decoder::{Activation, DecoderConfig};
use netadm_core::solvers::{Algorithm, SolverConfig};
use netadm_core::RealGrid;
use serde::{Deserialize, Deserializer};

use crate::image_io::{load_image, preprocess_mnist};
use crate::synthetic;

pub const MAX_IMAGES: usize = 1 << 8;
pub const MAX_VARIANTS: usize = 1 << 6;
pub const MAX_REPEATS: usize = 1 << 12;
/// Sampling rates are keyed in thousandths; SNR levels in tenths of a dB.
pub const MAX_RATE_MILLI: u64 = (1 << 14) - 1;
pub const SNR_DECI_OFFSET: i64 = 2000;
pub const SNR_NOISELESS_CODE: u64 = (1 << 14) - 1;

/// Per-field solver settings; unset fields keep the algorithm defaults.
#[derive(Clone, Debug, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SolverOverrides {
    pub outer_iters: Option<usize>,
    pub inner_steps: Option<usize>,
    pub lr: Option<f64>,
    pub outer_lr: Option<f64>,
    pub decay_every: Option<usize>,
    pub decay_factor: Option<f64>,
    pub rho: Option<f64>,
    pub epsilon: Option<f64>,
    pub weight_decay: Option<f64>,
    pub early_stop: Option<f64>,
}

impl SolverOverrides {
    pub fn apply(&self, cfg: &mut SolverConfig) {
        macro_rules! set {
            ($($f:ident),*) => {$(if let Some(v) = self.$f { cfg.$f = v; })*};
        }
        set!(
            outer_iters,
            inner_steps,
            lr,
            outer_lr,
            decay_every,
            decay_factor,
            rho,
            epsilon,
            weight_decay
        );
        if self.early_stop.is_some() {
            cfg.early_stop = self.early_stop;
        }
    }
}

fn parse_str<'de, D: Deserializer<'de>, T: FromStr>(d: D) -> std::result::Result<T, D::Error>
where
    T::Err: fmt::Display,
{
    String::deserialize(d)?
        .parse()
        .map_err(serde::de::Error::custom)
}

fn parse_list<'de, D: Deserializer<'de>, T: FromStr>(d: D) -> std::result::Result<Vec<T>, D::Error>
where
    T::Err: fmt::Display,
{
    Vec::<String>::deserialize(d)?
        .iter()
        .map(|s| s.parse().map_err(serde::de::Error::custom))
        .collect()
}

fn parse_keys<'de, D: Deserializer<'de>, T: FromStr + Ord, V: Deserialize<'de>>(
    d: D,
) -> std::result::Result<BTreeMap<T, V>, D::Error>
where
    T::Err: fmt::Display,
{
    BTreeMap::<String, V>::deserialize(d)?
        .into_iter()
        .map(|(k, v)| Ok((k.parse().map_err(serde::de::Error::custom)?, v)))
        .collect()
}

fn relu() -> Activation {
    Activation::Relu
}

/// A decoder architecture under study.
#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Variant {
    pub channels: Vec<usize>,
    #[serde(default = "relu", deserialize_with = "parse_str")]
    pub activation: Activation,
}

impl Variant {
    pub fn label(&self) -> String {
        let ch: Vec<String> = self.channels.iter().map(|c| c.to_string()).collect();
        format!("{{{}}}-{}", ch.join(","), self.activation)
    }
}

fn default_repeats() -> usize {
    10
}

fn default_channels() -> usize {
    1
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentPlan {
    /// Image files, or `synthetic:digit` / `synthetic:portrait`.
    pub images: Vec<String>,
    #[serde(deserialize_with = "parse_list")]
    pub algorithms: Vec<Algorithm>,
    pub sampling_rates: Vec<f64>,
    #[serde(default)]
    pub snr_levels_db: Vec<f64>,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    #[serde(default)]
    pub seed: u64,
    pub output_dir: PathBuf,
    pub height: usize,
    pub width: usize,
    #[serde(default = "default_channels")]
    pub channels: usize,
    #[serde(default)]
    pub preprocess_mnist: bool,
    /// Also score the 180°-rotated reconstruction and keep the better one.
    #[serde(default)]
    pub resolve_flip: bool,
    /// Decoder architectures; empty uses the default for the image size.
    #[serde(default)]
    pub variants: Vec<Variant>,
    #[serde(default)]
    pub solver: SolverOverrides,
    #[serde(default, deserialize_with = "parse_keys")]
    pub overrides: BTreeMap<Algorithm, SolverOverrides>,
    /// Worker threads; 0 uses all cores.
    #[serde(default)]
    pub threads: usize,
    /// Write `trace_<cell>.csv` every this many iterations; 0 disables traces.
    #[serde(default)]
    pub trace_every: usize,
    #[serde(default)]
    pub save_reconstructions: bool,
}

/// One noise setting of a plan; `None` is noiseless.
pub type Snr = Option<f64>;

impl ExperimentPlan {
    pub fn from_toml(text: &str) -> Result<Self> {
        let plan: Self = toml::from_str(text).context("parsing experiment plan")?;
        plan.validate()?;
        Ok(plan)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut plan = Self::from_toml(&text)?;
        // relative paths in a plan are relative to the plan file
        if let Some(dir) = path.parent() {
            for img in plan
                .images
                .iter_mut()
                .filter(|i| !i.starts_with("synthetic:"))
            {
                if Path::new(img.as_str()).is_relative() {
                    *img = dir.join(img.as_str()).to_string_lossy().into_owned();
                }
            }
            if plan.output_dir.is_relative() {
                plan.output_dir = dir.join(&plan.output_dir);
            }
        }
        Ok(plan)
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(!self.images.is_empty(), "plan lists no images");
        ensure!(
            self.images.len() <= MAX_IMAGES,
            "at most {MAX_IMAGES} images per plan"
        );
        ensure!(!self.algorithms.is_empty(), "plan lists no algorithms");
        ensure!(
            !self.sampling_rates.is_empty(),
            "plan lists no sampling rates"
        );
        ensure!(
            (1..=MAX_REPEATS).contains(&self.repeats),
            "repeats must be in 1..={MAX_REPEATS}"
        );
        ensure!(
            self.variants.len() <= MAX_VARIANTS,
            "at most {MAX_VARIANTS} decoder variants"
        );
        ensure!(matches!(self.channels, 1 | 3), "channels must be 1 or 3");
        ensure!(
            self.height > 0 && self.width > 0,
            "image dims must be positive"
        );
        let mut rate_keys = Vec::new();
        for &r in &self.sampling_rates {
            ensure!(
                r > 1.0 && r.is_finite(),
                "sampling rates must exceed 1, got {r}"
            );
            let key = rate_key(r);
            ensure!(key <= MAX_RATE_MILLI, "sampling rate {r} too large");
            ensure!(
                !rate_keys.contains(&key),
                "duplicate sampling rate {r} (rates are keyed to 0.001)"
            );
            rate_keys.push(key);
        }
        let mut snr_keys = Vec::new();
        for snr in self.snr_levels() {
            let key = snr_key(snr)?;
            ensure!(
                !snr_keys.contains(&key),
                "duplicate SNR level {snr:?} (levels are keyed to 0.1 dB)"
            );
            snr_keys.push(key);
        }
        for v in self.variants.iter() {
            self.decoder_config(Some(v), 0)?;
        }
        if self.variants.is_empty() && self.algorithms.iter().any(|a| a.uses_decoder()) {
            self.decoder_config(None, 0)?;
        }
        Ok(())
    }

    pub fn snr_levels(&self) -> Vec<Snr> {
        if self.snr_levels_db.is_empty() {
            vec![None]
        } else {
            self.snr_levels_db
                .iter()
                .map(|&s| s.is_finite().then_some(s))
                .collect()
        }
    }

    /// Decoder for `variant`, or the default architecture for the image geometry.
    pub fn decoder_config(&self, variant: Option<&Variant>, seed: u64) -> Result<DecoderConfig> {
        let (channels, activation) = match variant {
            Some(v) => (v.channels.clone(), v.activation),
            None => (
                default_architecture(self.height, self.width, self.channels)?,
                Activation::Relu,
            ),
        };
        Ok(
            DecoderConfig::for_output(channels, self.channels, self.height, self.width, seed)?
                .with_activation(activation),
        )
    }

    pub fn solver_config(&self, algorithm: Algorithm) -> SolverConfig {
        let mut cfg = SolverConfig::defaults(algorithm);
        self.solver.apply(&mut cfg);
        if let Some(o) = self.overrides.get(&algorithm) {
            o.apply(&mut cfg);
        }
        cfg
    }

    /// Loads every image as a channel stack, preprocessing digits when requested.
    pub fn load_images(&self) -> Result<Vec<Vec<RealGrid>>> {
        self.images.iter().map(|spec| self.load_one(spec)).collect()
    }

    fn load_one(&self, spec: &str) -> Result<Vec<RealGrid>> {
        let mut img = load_source(spec, self.height, self.width, self.channels)?;
        ensure!(
            img.len() == self.channels && img[0].shape() == (self.height, self.width),
            "image {spec} is {}x{}x{}, plan expects {}x{}x{}",
            img[0].height(),
            img[0].width(),
            img.len(),
            self.height,
            self.width,
            self.channels
        );
        if self.preprocess_mnist {
            img = img.iter().map(preprocess_mnist).collect::<Result<_>>()?;
        }
        Ok(img)
    }
}

/// Loads an image file, or `synthetic:digit` / `synthetic:portrait`.
pub fn load_source(
    spec: &str,
    height: usize,
    width: usize,
    channels: usize,
) -> Result<Vec<RealGrid>> {
    Ok(match spec.strip_prefix("synthetic:") {
        Some("digit") => vec![synthetic::digit()],
        Some("portrait") => synthetic::portrait(),
        Some(other) => bail!("unknown synthetic image {other:?}"),
        None => load_image(Path::new(spec), height, width, channels)?,
    })
}

/// Architectures used in the reference experiments: `{25,15,10}` for 28×28 digits,
/// `{120,25,15,10}` for 64×64 RGB faces and `{128,64,64,32}` for 128×128 grayscale.
pub fn default_architecture(height: usize, width: usize, channels: usize) -> Result<Vec<usize>> {
    Ok(match (height, width, channels) {
        (28, 28, _) => vec![25, 15, 10],
        (64, 64, _) => vec![120, 25, 15, 10],
        (128, 128, _) => vec![128, 64, 64, 32],
        _ => {
            bail!("no default decoder for {height}x{width}x{channels}; list `variants` in the plan")
        }
    })
}

pub fn rate_key(rate: f64) -> u64 {
    (rate * 1000.0).round() as u64
}

pub fn snr_key(snr: Snr) -> Result<u64> {
    match snr {
        None => Ok(SNR_NOISELESS_CODE),
        Some(s) => {
            let key = (s * 10.0).round() as i64 + SNR_DECI_OFFSET;
            ensure!(
                (0..SNR_NOISELESS_CODE as i64).contains(&key),
                "SNR {s} dB outside the supported range"
            );
            Ok(key as u64)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASIC: &str = r#"
        images = ["synthetic:digit"]
        algorithms = ["admm", "net-adm"]
        sampling_rates = [1.5, 2.0]
        snr_levels_db = [inf, 30.0]
        repeats = 2
        output_dir = "out"
        height = 28
        width = 28
        preprocess_mnist = true

        [solver]
        outer_iters = 50

        [overrides.net_adm]
        inner_steps = 2
    "#;

    #[test]
    fn parses_and_applies_overrides() {
        let plan = ExperimentPlan::from_toml(BASIC).unwrap();
        assert_eq!(plan.algorithms, vec![Algorithm::Admm, Algorithm::NetAdm]);
        assert_eq!(plan.snr_levels(), vec![None, Some(30.0)]);
        let adm = plan.solver_config(Algorithm::NetAdm);
        assert_eq!((adm.outer_iters, adm.inner_steps, adm.lr), (50, 2, 0.005));
        assert_eq!(plan.solver_config(Algorithm::Admm).outer_iters, 50);
        let dec = plan.decoder_config(None, 3).unwrap();
        assert_eq!(dec.channels, vec![25, 15, 10]);
        assert_eq!(plan.load_images().unwrap()[0][0][(1, 1)], 1.0);
    }

    #[test]
    fn rejects_bad_plans() {
        let bad_rate = BASIC.replace("[1.5, 2.0]", "[1.0]");
        assert!(ExperimentPlan::from_toml(&bad_rate).is_err());
        let dup = BASIC.replace("[1.5, 2.0]", "[1.5, 1.5001]");
        assert!(ExperimentPlan::from_toml(&dup).is_err());
        let zero = BASIC.replace("repeats = 2", "repeats = 0");
        assert!(ExperimentPlan::from_toml(&zero).is_err());
        let unknown = format!("{BASIC}\nbogus = 1");
        assert!(ExperimentPlan::from_toml(&unknown).is_err());
        let algo = BASIC.replace("\"admm\", ", "\"hio\", ");
        assert!(ExperimentPlan::from_toml(&algo).is_err());
        let geometry = BASIC.replace("height = 28", "height = 30");
        assert!(ExperimentPlan::from_toml(&geometry).is_err());
    }

    #[test]
    fn variants_parse() {
        let text = format!("{BASIC}\n[[variants]]\nchannels = [8, 8, 8]\nactivation = \"tanh\"\n\n[[variants]]\nchannels = [4, 4]\n");
        let plan = ExperimentPlan::from_toml(&text).unwrap();
        assert_eq!(plan.variants.len(), 2);
        assert_eq!(plan.variants[0].label(), "{8,8,8}-tanh");
        assert_eq!(plan.variants[1].activation, Activation::Relu);
        assert!(plan.decoder_config(Some(&plan.variants[1]), 0).is_ok());
    }

    #[test]
    fn keys() {
        assert_eq!(rate_key(1.1), 1100);
        assert_eq!(snr_key(None).unwrap(), SNR_NOISELESS_CODE);
        assert_eq!(snr_key(Some(20.0)).unwrap(), 2200);
        assert!(snr_key(Some(1e6)).is_err());
    }
}

//! Decoder architecture studies for Net-ADM: depth, channel widths and activation.

use std::fmt;
use std::str::FromStr;

use anyhow::{bail, ensure, Result};
use netadm_core::decoder::Activation;
use netadm_core::solvers::Algorithm;

use crate::plan::{ExperimentPlan, Variant};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Study {
    /// 64 channels per layer, depth `J = 1, 2, …` while the latent stays at least 2×2.
    Depth,
    /// Depth 3 with several channel layouts.
    Channels,
    /// `{128, 64, 64, 32}` with every supported activation.
    Activation,
}

impl Study {
    pub const ALL: [Study; 3] = [Study::Depth, Study::Channels, Study::Activation];

    pub fn name(self) -> &'static str {
        match self {
            Study::Depth => "depth",
            Study::Channels => "channels",
            Study::Activation => "activation",
        }
    }
}

impl fmt::Display for Study {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Study {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match Self::ALL
            .into_iter()
            .find(|st| st.name() == s.to_ascii_lowercase())
        {
            Some(st) => Ok(st),
            None => bail!("unknown study {s:?} (expected depth, channels or activation)"),
        }
    }
}

const MAX_DEPTH: usize = 5;

pub fn study_variants(study: Study, height: usize, width: usize) -> Result<Vec<Variant>> {
    let relu = |channels: Vec<usize>| Variant {
        channels,
        activation: Activation::Relu,
    };
    let variants: Vec<Variant> = match study {
        Study::Depth => (1..=MAX_DEPTH)
            .filter(|&j| {
                let f = 1 << j;
                height % f == 0 && width % f == 0 && height / f >= 2 && width / f >= 2
            })
            .map(|j| relu(vec![64; j + 1]))
            .collect(),
        Study::Channels => [
            vec![32, 32, 32, 32],
            vec![64, 64, 64, 64],
            vec![128, 64, 64, 32],
            vec![128, 128, 128, 128],
            vec![64, 32, 32, 16],
        ]
        .into_iter()
        .map(relu)
        .collect(),
        Study::Activation => Activation::ALL
            .into_iter()
            .map(|activation| Variant {
                channels: vec![128, 64, 64, 32],
                activation,
            })
            .collect(),
    };
    ensure!(
        !variants.is_empty(),
        "{height}x{width} admits no {study} variants"
    );
    Ok(variants)
}

/// Turns `base` into a Net-ADM-only plan over the variants of `study`.
pub fn sweep_plan(study: Study, base: &ExperimentPlan) -> Result<ExperimentPlan> {
    let mut plan = base.clone();
    plan.algorithms = vec![Algorithm::NetAdm];
    plan.variants = study_variants(study, base.height, base.width)?;
    plan.validate()?;
    Ok(plan)
}

//! Runs every (image × decoder variant × algorithm × rate × SNR × repeat) cell of a plan
//! and writes `runs.csv`, `aggregate.csv` and the long-format `curves.csv`.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use anyhow::{Context, Result};
use netadm_core::solvers::{solve, Algorithm};
use netadm_core::RealGrid;
use rayon::prelude::*;
use serde::Serialize;

use crate::image_io::save_image;
use crate::measure::make_measurement;
use crate::metrics::Score;
use crate::plan::{rate_key, snr_key, ExperimentPlan, Snr, Variant};

pub const RUNS_SCHEMA: &str = "# netadm runs v1";
pub const AGGREGATE_SCHEMA: &str = "# netadm aggregate v1";
pub const CURVES_SCHEMA: &str = "# netadm curves v1";

/// One run of one algorithm on one measurement draw.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cell {
    pub image: usize,
    /// Index into the plan's variants; always 0 for algorithms without a decoder.
    pub variant: usize,
    pub algorithm: Algorithm,
    pub rate: f64,
    pub snr: Snr,
    pub repeat: usize,
}

/// Bijective 64-bit mixer (the splitmix64 finalizer).
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

// Layout, low to high: repeat 12 | snr 14 | rate 14 | algorithm 2 | variant 6 | image 8 | stream 1.
fn pack(
    image: usize,
    variant: usize,
    algorithm: u64,
    rate: f64,
    snr: Snr,
    repeat: usize,
    stream: u64,
) -> u64 {
    let snr = snr_key(snr).expect("validated plan");
    (repeat as u64)
        | snr << 12
        | rate_key(rate) << 26
        | algorithm << 40
        | (variant as u64) << 42
        | (image as u64) << 48
        | stream << 56
}

impl Cell {
    /// Seeds the decoder. Distinct cells of a valid plan get distinct seeds.
    pub fn solver_seed(&self, base: u64) -> u64 {
        let packed = pack(
            self.image,
            self.variant,
            self.algorithm.index(),
            self.rate,
            self.snr,
            self.repeat,
            0,
        );
        mix(packed.wrapping_add(mix(base)))
    }

    /// Seeds the measurement noise. Shared by all algorithms and variants,
    /// so they are compared on identical measurements.
    pub fn noise_seed(&self, base: u64) -> u64 {
        let packed = pack(self.image, 0, 0, self.rate, self.snr, self.repeat, 1);
        mix(packed.wrapping_add(mix(base)))
    }

    pub fn label(&self) -> String {
        let snr = match self.snr {
            Some(s) => format!("{s}"),
            None => "none".into(),
        };
        format!(
            "img{}_v{}_{}_r{:.3}_snr{}_rep{}",
            self.image, self.variant, self.algorithm, self.rate, snr, self.repeat
        )
    }
}

/// All cells of `plan` in report order.
pub fn cells(plan: &ExperimentPlan) -> Vec<Cell> {
    let variants = plan.variants.len().max(1);
    let mut out = Vec::new();
    for image in 0..plan.images.len() {
        for variant in 0..variants {
            for &algorithm in &plan.algorithms {
                if variant > 0 && !algorithm.uses_decoder() {
                    continue;
                }
                for &rate in &plan.sampling_rates {
                    for snr in plan.snr_levels() {
                        for repeat in 0..plan.repeats {
                            out.push(Cell {
                                image,
                                variant,
                                algorithm,
                                rate,
                                snr,
                                repeat,
                            });
                        }
                    }
                }
            }
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunRecord {
    pub image: String,
    pub variant: String,
    pub algorithm: String,
    pub rate: f64,
    pub outer_h: usize,
    pub outer_w: usize,
    pub snr_db: Option<f64>,
    pub repeat: usize,
    pub seed: u64,
    pub noise_seed: u64,
    pub psnr: Option<f64>,
    pub ssim: Option<f64>,
    pub flipped: Option<bool>,
    pub final_loss: Option<f64>,
    pub iterations: Option<usize>,
    pub wall_ms: f64,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AggregateRow {
    pub image: String,
    pub variant: String,
    pub algorithm: String,
    pub rate: f64,
    pub outer_h: usize,
    pub outer_w: usize,
    pub snr_db: Option<f64>,
    pub runs: usize,
    pub failures: usize,
    pub psnr_mean: Option<f64>,
    pub psnr_min: Option<f64>,
    pub psnr_max: Option<f64>,
    pub ssim_mean: Option<f64>,
    pub ssim_min: Option<f64>,
    pub ssim_max: Option<f64>,
    pub loss_mean: Option<f64>,
    pub wall_ms_mean: f64,
    /// Repeat index with the highest PSNR.
    pub best_repeat: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CurvePoint {
    pub image: String,
    pub variant: String,
    pub algorithm: String,
    pub rate: f64,
    pub snr_db: Option<f64>,
    pub metric: &'static str,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Clone, Debug, Default)]
pub struct RunReport {
    pub runs: Vec<RunRecord>,
    pub aggregates: Vec<AggregateRow>,
}

impl RunReport {
    /// Aggregate row for one configuration, if present.
    pub fn aggregate(&self, algorithm: Algorithm, rate: f64, snr: Snr) -> Option<&AggregateRow> {
        self.aggregates.iter().find(|a| {
            a.algorithm == algorithm.name() && rate_key(a.rate) == rate_key(rate) && a.snr_db == snr
        })
    }

    pub fn curves(&self) -> Vec<CurvePoint> {
        let mut out = Vec::new();
        for a in &self.aggregates {
            for (metric, mean, min, max) in [
                ("psnr", a.psnr_mean, a.psnr_min, a.psnr_max),
                ("ssim", a.ssim_mean, a.ssim_min, a.ssim_max),
            ] {
                if let (Some(mean), Some(min), Some(max)) = (mean, min, max) {
                    out.push(CurvePoint {
                        image: a.image.clone(),
                        variant: a.variant.clone(),
                        algorithm: a.algorithm.clone(),
                        rate: a.rate,
                        snr_db: a.snr_db,
                        metric,
                        mean,
                        min,
                        max,
                    });
                }
            }
        }
        out
    }
}

fn variant_label(plan: &ExperimentPlan, cell: &Cell) -> String {
    if !cell.algorithm.uses_decoder() {
        return "-".into();
    }
    match plan.variants.get(cell.variant) {
        Some(v) => v.label(),
        None => plan
            .decoder_config(None, 0)
            .map(|d| {
                Variant {
                    channels: d.channels,
                    activation: d.activation,
                }
                .label()
            })
            .unwrap_or_else(|_| "default".into()),
    }
}

fn run_cell(plan: &ExperimentPlan, images: &[Vec<RealGrid>], cell: &Cell) -> RunRecord {
    let start = Instant::now();
    let seed = cell.solver_seed(plan.seed);
    let noise_seed = cell.noise_seed(plan.seed);
    let truth = &images[cell.image];
    let (h, w) = truth[0].shape();
    let mut record = RunRecord {
        image: plan.images[cell.image].clone(),
        variant: variant_label(plan, cell),
        algorithm: cell.algorithm.name().into(),
        rate: cell.rate,
        outer_h: (cell.rate * h as f64).round() as usize,
        outer_w: (cell.rate * w as f64).round() as usize,
        snr_db: cell.snr,
        repeat: cell.repeat,
        seed,
        noise_seed,
        psnr: None,
        ssim: None,
        flipped: None,
        final_loss: None,
        iterations: None,
        wall_ms: 0.0,
        error: None,
    };
    let result = (|| -> Result<(Vec<RealGrid>, f64, usize)> {
        let mut cfg = plan.solver_config(cell.algorithm);
        cfg.seed = seed;
        cfg.trace_every = plan.trace_every;
        let meas = make_measurement(truth, cell.rate, cell.snr, cfg.epsilon, noise_seed)?;
        let decoder = if cell.algorithm.uses_decoder() {
            Some(plan.decoder_config(plan.variants.get(cell.variant), seed)?)
        } else {
            None
        };
        let out = solve(&meas, decoder.as_ref(), &cfg, None)?;
        if plan.trace_every > 0 {
            let path = plan.output_dir.join(format!("trace_{}.csv", cell.label()));
            out.trace.write_csv(BufWriter::new(File::create(&path)?))?;
        }
        Ok((out.reconstruction, out.final_loss, out.iterations))
    })();
    match result {
        Ok((recon, loss, iterations)) => {
            let score = Score::compute(&recon, truth, plan.resolve_flip);
            record.psnr = Some(score.psnr);
            record.ssim = Some(score.ssim);
            record.flipped = Some(score.flipped);
            record.final_loss = Some(loss);
            record.iterations = Some(iterations);
            if plan.save_reconstructions {
                let path = plan.output_dir.join(format!("recon_{}.png", cell.label()));
                if let Err(e) = save_image(&path, &recon) {
                    record.error = Some(format!("saving reconstruction: {e:#}"));
                }
            }
        }
        Err(e) => record.error = Some(format!("{e:#}")),
    }
    record.wall_ms = start.elapsed().as_secs_f64() * 1e3;
    record
}

fn stats(values: &[f64]) -> (Option<f64>, Option<f64>, Option<f64>) {
    if values.is_empty() {
        return (None, None, None);
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (Some(mean), Some(min), Some(max))
}

/// Groups runs by configuration, preserving first-seen order.
pub fn aggregate(runs: &[RunRecord]) -> Vec<AggregateRow> {
    let mut groups: Vec<(AggregateRow, Vec<&RunRecord>)> = Vec::new();
    for run in runs {
        let same = |a: &AggregateRow| {
            a.image == run.image
                && a.variant == run.variant
                && a.algorithm == run.algorithm
                && rate_key(a.rate) == rate_key(run.rate)
                && a.snr_db == run.snr_db
        };
        match groups.iter_mut().find(|(a, _)| same(a)) {
            Some((_, members)) => members.push(run),
            None => groups.push((
                AggregateRow {
                    image: run.image.clone(),
                    variant: run.variant.clone(),
                    algorithm: run.algorithm.clone(),
                    rate: run.rate,
                    outer_h: run.outer_h,
                    outer_w: run.outer_w,
                    snr_db: run.snr_db,
                    runs: 0,
                    failures: 0,
                    psnr_mean: None,
                    psnr_min: None,
                    psnr_max: None,
                    ssim_mean: None,
                    ssim_min: None,
                    ssim_max: None,
                    loss_mean: None,
                    wall_ms_mean: 0.0,
                    best_repeat: None,
                },
                vec![run],
            )),
        }
    }
    groups
        .into_iter()
        .map(|(mut row, members)| {
            let ok: Vec<&RunRecord> = members
                .iter()
                .copied()
                .filter(|r| r.psnr.is_some())
                .collect();
            let psnr: Vec<f64> = ok.iter().filter_map(|r| r.psnr).collect();
            let ssim: Vec<f64> = ok.iter().filter_map(|r| r.ssim).collect();
            let loss: Vec<f64> = ok.iter().filter_map(|r| r.final_loss).collect();
            row.runs = members.len();
            row.failures = members.len() - ok.len();
            (row.psnr_mean, row.psnr_min, row.psnr_max) = stats(&psnr);
            (row.ssim_mean, row.ssim_min, row.ssim_max) = stats(&ssim);
            row.loss_mean = stats(&loss).0;
            row.wall_ms_mean =
                members.iter().map(|r| r.wall_ms).sum::<f64>() / members.len() as f64;
            row.best_repeat = ok
                .iter()
                .max_by(|a, b| {
                    a.psnr
                        .partial_cmp(&b.psnr)
                        .unwrap_or(std::cmp::Ordering::Equal)
                })
                .map(|r| r.repeat);
            row
        })
        .collect()
}

/// Runs every cell; failed cells are recorded and do not stop the experiment.
pub fn execute(plan: &ExperimentPlan) -> Result<RunReport> {
    plan.validate()?;
    let images = plan.load_images()?;
    if plan.trace_every > 0 || plan.save_reconstructions {
        fs::create_dir_all(&plan.output_dir)
            .with_context(|| format!("creating {}", plan.output_dir.display()))?;
    }
    let cells = cells(plan);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(plan.threads)
        .build()?;
    let runs: Vec<RunRecord> = pool.install(|| {
        cells
            .par_iter()
            .map(|c| run_cell(plan, &images, c))
            .collect()
    });
    let aggregates = aggregate(&runs);
    Ok(RunReport { runs, aggregates })
}

fn write_csv<T: Serialize>(path: &Path, schema: &str, rows: &[T]) -> Result<()> {
    let mut file =
        BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    writeln!(file, "{schema}")?;
    let mut writer = csv::Writer::from_writer(file);
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn write_report(report: &RunReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    write_csv(&dir.join("runs.csv"), RUNS_SCHEMA, &report.runs)?;
    write_csv(
        &dir.join("aggregate.csv"),
        AGGREGATE_SCHEMA,
        &report.aggregates,
    )?;
    write_csv(&dir.join("curves.csv"), CURVES_SCHEMA, &report.curves())?;
    Ok(())
}

/// [`execute`] followed by [`write_report`] into the plan's output directory.
pub fn run_experiment(plan: &ExperimentPlan) -> Result<RunReport> {
    let report = execute(plan)?;
    write_report(&report, &plan.output_dir)?;
    Ok(report)
}

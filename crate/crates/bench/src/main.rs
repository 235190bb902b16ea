use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use netadm_bench::check;
use netadm_bench::experiment::{run_experiment, RunReport};
use netadm_bench::image_io::{preprocess_mnist, save_image};
use netadm_bench::measure::make_measurement;
use netadm_bench::metrics::{format_pair, Score};
use netadm_bench::plan::{default_architecture, load_source, ExperimentPlan};
use netadm_bench::sweep::{sweep_plan, Study};
use netadm_core::decoder::{Activation, DecoderConfig};
use netadm_core::solvers::{solve, Algorithm, SolverConfig};

#[derive(Parser)]
#[command(
    name = "netadm",
    version,
    about = "Fourier phase retrieval with untrained decoder priors"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Reconstruct one image from its simulated Fourier magnitude.
    Recover(RecoverArgs),
    /// Run every cell of an experiment plan and write runs, aggregate and curve CSVs.
    Benchmark {
        #[arg(long)]
        plan: PathBuf,
    },
    /// Run a decoder architecture study (depth, channels or activation) on a plan.
    Sweep {
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        study: Study,
    },
    /// Run the numerical self-checks; exits nonzero if any fails.
    Check {
        /// Also run in-range recovery and the two trend checks (minutes).
        #[arg(long)]
        full: bool,
        /// Seeds per configuration for the trend checks.
        #[arg(long, default_value_t = 5)]
        repeats: usize,
    },
}

#[derive(clap::Args)]
struct RecoverArgs {
    /// Image file, or synthetic:digit / synthetic:portrait.
    #[arg(long)]
    image: String,
    #[arg(long, default_value = "net_adm")]
    algo: Algorithm,
    #[arg(long, default_value_t = 2.0)]
    rate: f64,
    /// Measurement SNR in dB; omit for noiseless data.
    #[arg(long)]
    snr: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    rho: Option<f64>,
    /// Outer iterations (Adam steps for net_gd).
    #[arg(long)]
    outer: Option<usize>,
    /// Adam steps per decoder projection.
    #[arg(long)]
    inner: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0)]
    noise_seed: u64,
    #[arg(long, default_value_t = 28)]
    height: usize,
    #[arg(long, default_value_t = 28)]
    width: usize,
    #[arg(long, default_value_t = 1)]
    channels: usize,
    /// Decoder channel list, e.g. 25,15,10; defaults by image size.
    #[arg(long, value_delimiter = ',')]
    arch: Option<Vec<usize>>,
    #[arg(long, default_value = "relu")]
    activation: Activation,
    /// Mark the two corner pixels of a 28×28 digit before measuring.
    #[arg(long)]
    preprocess_mnist: bool,
    /// Also score the 180°-rotated reconstruction and keep the better one.
    #[arg(long)]
    resolve_flip: bool,
    /// Where to write the reconstruction (PNG/PGM/PPM by extension).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Where to write the per-iteration trace CSV.
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    trace_every: usize,
}

fn recover(args: RecoverArgs) -> Result<()> {
    let mut truth = load_source(&args.image, args.height, args.width, args.channels)?;
    if args.preprocess_mnist {
        truth = truth.iter().map(preprocess_mnist).collect::<Result<_>>()?;
    }
    let mut cfg = SolverConfig::defaults(args.algo);
    macro_rules! set {
        ($($field:ident = $arg:ident),*) => {$(if let Some(v) = args.$arg { cfg.$field = v; })*};
    }
    set!(
        epsilon = epsilon,
        rho = rho,
        outer_iters = outer,
        inner_steps = inner,
        lr = lr
    );
    cfg.seed = args.seed;
    if args.trace.is_some() {
        cfg.trace_every = args.trace_every;
    }
    let meas = make_measurement(&truth, args.rate, args.snr, cfg.epsilon, args.noise_seed)?;
    let decoder = if args.algo.uses_decoder() {
        let arch = match args.arch {
            Some(a) => a,
            None => default_architecture(args.height, args.width, args.channels)?,
        };
        Some(
            DecoderConfig::for_output(arch, args.channels, args.height, args.width, args.seed)?
                .with_activation(args.activation),
        )
    } else {
        None
    };
    let out = solve(&meas, decoder.as_ref(), &cfg, None)?;
    let score = Score::compute(&out.reconstruction, &truth, args.resolve_flip);
    let (mh, mw) = meas.spec().outer();
    println!(
        "{} r={} ({mh}x{mw}) iterations={} loss={:.4e} psnr/ssim={}{}",
        args.algo,
        args.rate,
        out.iterations,
        out.final_loss,
        format_pair(score.psnr, score.ssim),
        if score.flipped { " (rotated)" } else { "" }
    );
    if let Some(path) = &args.out {
        save_image(path, &out.reconstruction)?;
    }
    if let Some(path) = &args.trace {
        let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        out.trace.write_csv(BufWriter::new(file))?;
    }
    Ok(())
}

fn summarize(report: &RunReport, plan: &ExperimentPlan) {
    for a in &report.aggregates {
        let pair = match (a.psnr_mean, a.ssim_mean) {
            (Some(p), Some(s)) => format_pair(p, s),
            _ => "-".into(),
        };
        let snr = a.snr_db.map_or("inf".to_string(), |s| format!("{s}"));
        println!(
            "{:<10} {:<22} r={:<5} snr={:<5} {pair} ({} runs, {} failed)",
            a.algorithm, a.variant, a.rate, snr, a.runs, a.failures
        );
    }
    println!("wrote {}", plan.output_dir.display());
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Recover(args) => recover(args)?,
        Command::Benchmark { plan } => {
            let plan = ExperimentPlan::load(&plan)?;
            let report = run_experiment(&plan)?;
            summarize(&report, &plan);
        }
        Command::Sweep { plan, study } => {
            let plan = sweep_plan(study, &ExperimentPlan::load(&plan)?)?;
            let report = run_experiment(&plan)?;
            summarize(&report, &plan);
        }
        Command::Check { full, repeats } => {
            let outcomes = if full {
                check::run_full(repeats)
            } else {
                check::run_quick()
            };
            for o in &outcomes {
                println!("{o}");
            }
            return Ok(outcomes.iter().all(|o| o.passed));
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

use std::fs;

use netadm_bench::experiment::{
    execute, run_experiment, AGGREGATE_SCHEMA, CURVES_SCHEMA, RUNS_SCHEMA,
};
use netadm_bench::plan::ExperimentPlan;
use netadm_bench::sweep::{sweep_plan, Study};

fn plan_text(out: &str, body: &str) -> String {
    format!(
        r#"
        images = ["synthetic:digit"]
        output_dir = "{out}"
        height = 28
        width = 28
        preprocess_mnist = true
        {body}
        "#
    )
}

#[test]
fn full_grid_writes_one_aggregate_per_configuration() {
    let dir = tempfile::tempdir().unwrap();
    let text = plan_text(
        &dir.path().display().to_string(),
        r#"
        algorithms = ["admm", "net_adm", "net_gd", "net_pgd"]
        sampling_rates = [1.2, 1.5, 2.0, 3.0]
        snr_levels_db = [inf, 70.0, 50.0, 40.0, 30.0, 20.0]
        repeats = 1
        [solver]
        outer_iters = 2
        inner_steps = 1
        "#,
    );
    let plan = ExperimentPlan::from_toml(&text).unwrap();
    let report = run_experiment(&plan).unwrap();
    assert_eq!(report.runs.len(), 96);
    assert_eq!(report.aggregates.len(), 96);
    assert!(
        report.runs.iter().all(|r| r.error.is_none()),
        "{:?}",
        report.runs.iter().find(|r| r.error.is_some())
    );
    for (name, schema, rows) in [
        ("runs.csv", RUNS_SCHEMA, 96),
        ("aggregate.csv", AGGREGATE_SCHEMA, 96),
        ("curves.csv", CURVES_SCHEMA, 192),
    ] {
        let text = fs::read_to_string(dir.path().join(name)).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some(schema));
        assert!(lines.next().unwrap().contains("algorithm"));
        assert_eq!(lines.count(), rows, "{name}");
    }
}

#[test]
fn runs_are_reproducible_and_share_noise_across_algorithms() {
    let dir = tempfile::tempdir().unwrap();
    let text = plan_text(
        &dir.path().display().to_string(),
        r#"
        algorithms = ["admm", "net_adm"]
        sampling_rates = [1.5]
        snr_levels_db = [30.0]
        repeats = 2
        seed = 9
        [solver]
        outer_iters = 3
        "#,
    );
    let plan = ExperimentPlan::from_toml(&text).unwrap();
    let (a, b) = (execute(&plan).unwrap(), execute(&plan).unwrap());
    let key = |r: &netadm_bench::experiment::RunRecord| {
        (r.seed, r.noise_seed, r.psnr, r.ssim, r.final_loss)
    };
    assert_eq!(
        a.runs.iter().map(key).collect::<Vec<_>>(),
        b.runs.iter().map(key).collect::<Vec<_>>()
    );
    for repeat in 0..2 {
        let noise: Vec<u64> = a
            .runs
            .iter()
            .filter(|r| r.repeat == repeat)
            .map(|r| r.noise_seed)
            .collect();
        assert_eq!(noise.len(), 2);
        assert_eq!(noise[0], noise[1]);
    }
    assert_ne!(a.runs[0].noise_seed, a.runs[1].noise_seed);
}

#[test]
fn traces_and_reconstructions_are_written() {
    let dir = tempfile::tempdir().unwrap();
    let text = plan_text(
        &dir.path().display().to_string(),
        r#"
        algorithms = ["net_adm"]
        sampling_rates = [2.0]
        repeats = 1
        trace_every = 1
        save_reconstructions = true
        [solver]
        outer_iters = 4
        "#,
    );
    run_experiment(&ExperimentPlan::from_toml(&text).unwrap()).unwrap();
    let names: Vec<String> = fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    let trace = names
        .iter()
        .find(|n| n.starts_with("trace_"))
        .expect("trace file");
    assert!(names
        .iter()
        .any(|n| n.starts_with("recon_") && n.ends_with(".png")));
    let rows = fs::read_to_string(dir.path().join(trace))
        .unwrap()
        .lines()
        .count();
    assert_eq!(rows, 5);
}

#[test]
fn depth_sweep_runs_each_variant() {
    let dir = tempfile::tempdir().unwrap();
    let text = plan_text(
        &dir.path().display().to_string(),
        r#"
        algorithms = ["admm"]
        sampling_rates = [2.0]
        repeats = 1
        [solver]
        outer_iters = 1
        inner_steps = 1
        "#,
    );
    let plan = sweep_plan(Study::Depth, &ExperimentPlan::from_toml(&text).unwrap()).unwrap();
    let report = execute(&plan).unwrap();
    let variants: Vec<&str> = report.runs.iter().map(|r| r.variant.as_str()).collect();
    assert_eq!(variants, ["{64,64}-relu", "{64,64,64}-relu"]);
    assert!(report
        .runs
        .iter()
        .all(|r| r.algorithm == "net_adm" && r.error.is_none()));
}

#[test]
fn sweep_rejects_mismatched_image_size() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!(
        r#"
        images = ["synthetic:digit"]
        algorithms = ["admm"]
        sampling_rates = [2.0]
        repeats = 1
        output_dir = "{}"
        height = 32
        width = 32
        [solver]
        outer_iters = 1
        inner_steps = 1
        "#,
        dir.path().display()
    );
    // the digit is 28×28; a 32×32 plan must reject it rather than crop silently
    let plan = sweep_plan(
        Study::Activation,
        &ExperimentPlan::from_toml(&text).unwrap(),
    )
    .unwrap();
    assert!(execute(&plan).is_err());
}

#[test]
fn missing_image_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!(
        r#"
        images = ["{}/absent.png"]
        algorithms = ["admm"]
        sampling_rates = [2.0]
        output_dir = "{}"
        height = 28
        width = 28
        "#,
        dir.path().display(),
        dir.path().display()
    );
    assert!(execute(&ExperimentPlan::from_toml(&text).unwrap()).is_err());
}

#[test]
fn bundled_plans_parse() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("plans");
    for name in ["rates.toml", "noise.toml", "architecture.toml"] {
        let plan = ExperimentPlan::load(&dir.join(name)).unwrap();
        assert!(plan.load_images().is_ok(), "{name}");
    }
    let base = ExperimentPlan::load(&dir.join("architecture.toml")).unwrap();
    assert!(sweep_plan(Study::Depth, &base).is_ok());
    // three upsampling layers need sides divisible by 8
    assert!(sweep_plan(Study::Channels, &base).is_err());
}

use netadm_core::decoder::{AdamConfig, AdamState, DecoderConfig, DecoderNet};
use netadm_core::grid::{fourier_magnitude, PadSpec, RealGrid};
use netadm_core::objective::total_loss;
use netadm_core::solvers::{solve, Algorithm, SolverConfig};
use netadm_core::MeasurementSet;
use proptest::prelude::*;

fn blob(h: usize, w: usize) -> RealGrid {
    RealGrid::from_fn(h, w, |r, c| {
        let (y, x) = (r as f64 - 0.4 * h as f64, c as f64 - 0.6 * w as f64);
        (-(y * y + 0.5 * x * x) / 6.0).exp()
    })
}

fn measure(x: &RealGrid, rate: f64) -> MeasurementSet {
    let (h, w) = x.shape();
    let spec = PadSpec::from_rate(h, w, rate).unwrap();
    MeasurementSet::new(vec![fourier_magnitude(x, &spec).unwrap()], spec, 1e-3).unwrap()
}

fn small_decoder(seed: u64) -> DecoderConfig {
    DecoderConfig::for_output(vec![8, 6, 4], 1, 16, 16, seed).unwrap()
}

fn config(alg: Algorithm, iters: usize, seed: u64) -> SolverConfig {
    let mut cfg = SolverConfig::defaults(alg);
    cfg.outer_iters = iters;
    cfg.seed = seed;
    cfg.trace_every = 1;
    cfg
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn net_adm_descends_every_iteration(seed in 0u64..1000, rate in 1.3f64..2.5) {
        let meas = measure(&blob(16, 16), rate);
        let out = solve(&meas, Some(&small_decoder(seed)), &config(Algorithm::NetAdm, 40, seed), None).unwrap();
        for row in &out.trace.rows {
            prop_assert!(row.f_u <= row.f_utilde + 1e-12, "iteration {}: {} > {}", row.iter, row.f_u, row.f_utilde);
        }
    }

    #[test]
    fn degenerate_net_adm_is_admm(seed in 0u64..1000, rate in 1.3f64..2.5) {
        let meas = measure(&blob(16, 16), rate);
        let a = solve(&meas, None, &config(Algorithm::Admm, 20, seed), None).unwrap();
        let mut cfg = config(Algorithm::NetAdm, 20, seed);
        cfg.inner_steps = 0;
        let b = solve(&meas, Some(&small_decoder(seed)), &cfg, None).unwrap();
        prop_assert_eq!(a.reconstruction, b.reconstruction);
        prop_assert_eq!(a.admm_state, b.admm_state);
    }
}

#[test]
fn solvers_are_deterministic() {
    let meas = measure(&blob(16, 16), 2.0);
    for alg in Algorithm::ALL {
        let dec = small_decoder(3);
        let run = || solve(&meas, Some(&dec), &config(alg, 15, 3), None).unwrap();
        let (a, b) = (run(), run());
        assert_eq!(a.reconstruction, b.reconstruction, "{alg}");
        let strip = |o: &netadm_core::solvers::SolverOutput| -> Vec<_> {
            o.trace.rows.iter().map(|r| r.without_timing()).collect()
        };
        assert_eq!(strip(&a), strip(&b), "{alg}");
    }
}

#[test]
fn net_pgd_reduces_loss() {
    let meas = measure(&blob(16, 16), 2.0);
    let out = solve(
        &meas,
        Some(&small_decoder(1)),
        &config(Algorithm::NetPgd, 60, 1),
        None,
    )
    .unwrap();
    let rows = &out.trace.rows;
    assert!(
        rows.last().unwrap().f_u < rows[0].f_u,
        "{} vs {}",
        rows.last().unwrap().f_u,
        rows[0].f_u
    );
}

#[test]
fn net_gd_reduces_loss() {
    let meas = measure(&blob(16, 16), 2.0);
    let out = solve(
        &meas,
        Some(&small_decoder(2)),
        &config(Algorithm::NetGd, 200, 2),
        None,
    )
    .unwrap();
    let rows = &out.trace.rows;
    assert!(rows.last().unwrap().f_u < rows[0].f_u);
}

#[test]
fn final_loss_matches_reconstruction() {
    let meas = measure(&blob(16, 16), 1.5);
    for alg in Algorithm::ALL {
        let out = solve(&meas, Some(&small_decoder(0)), &config(alg, 10, 0), None).unwrap();
        let padded: Vec<RealGrid> = out
            .reconstruction
            .iter()
            .map(|x| netadm_core::grid::zero_pad(x, meas.spec()).unwrap())
            .collect();
        let expect = total_loss(&padded, &meas).unwrap();
        assert!(
            (out.final_loss - expect).abs() <= 1e-9 * expect.max(1.0),
            "{alg}"
        );
    }
}

#[test]
fn decoder_fit_loss_decreases() {
    let mut net = DecoderNet::init(small_decoder(5)).unwrap();
    let target = vec![blob(16, 16)];
    let mut adam = AdamState::new(AdamConfig::new(0.01), net.weights());
    let out = netadm_core::decoder::fit_to_target(&mut net, &target, 200, &mut adam).unwrap();
    assert!(out.losses[200] < 0.5 * out.losses[0]);
}

#[test]
fn refits_perturbed_decoder_output() {
    // a target produced by the decoder itself is reachable from nearby weights
    let truth = DecoderNet::init(small_decoder(7)).unwrap();
    let target = truth.forward();
    let mut net = truth.clone();
    for w in net.weights_mut() {
        for (i, v) in w.data.iter_mut().enumerate() {
            *v *= 1.0 + 0.05 * if i % 2 == 0 { 1.0 } else { -1.0 };
        }
    }
    let mut adam = AdamState::new(AdamConfig::new(0.002), net.weights());
    let out = netadm_core::decoder::fit_to_target(&mut net, &target, 500, &mut adam).unwrap();
    assert!(
        out.losses[500] < 1e-2 * out.losses[0],
        "{} -> {}",
        out.losses[0],
        out.losses[500]
    );
}

use approx::{assert_abs_diff_eq, assert_relative_eq};
use proptest::prelude::*;

use sonec::algorithms::{combine_step, compensate_measurement, CompensationStats};
use sonec::analysis::{c1_max, BoundInputs};
use sonec::crb::{assemble_fim, ObservationModel};
use sonec::harness::{format_g, msd_db};
use sonec::linalg::{symmetric_eigen, Matrix};
use sonec::scalar::norm_sq;
use sonec::signal::apply_nonlinearity;
use sonec::topology::validate;
use sonec::{
    build_random_topology, generate_dataset, run_dlms, run_sonec_dlms, uniform_weights,
    LinkSetting, Measurements, RunOptions, SignalConfig, SonecVariant, StepSizes, Weights,
};

fn small_signal(n: usize, l: usize, iters: usize) -> SignalConfig {
    SignalConfig {
        n_nodes: n,
        l,
        n_iters: iters,
        pilot_len: 20,
        ..SignalConfig::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn uniform_weights_always_validate(n in 2usize..24, deg_frac in 0.0f64..1.0, seed in any::<u64>()) {
        let deg = 1 + ((n - 2) as f64 * deg_frac) as usize;
        let topo = build_random_topology(n, deg, seed).unwrap();
        prop_assert!(topo.is_connected());
        let w: Weights = uniform_weights(&topo);
        prop_assert!(validate(&w, &topo).is_valid());
    }

    #[test]
    fn compensation_inverts_on_the_principal_branch(b in -0.4f64..0.4, x in -3.0f64..3.0) {
        prop_assume!(b.abs() >= 1e-6);
        prop_assume!(1.0 + 2.0 * b * x > 1e-3);
        let mut stats = CompensationStats::default();
        let back = compensate_measurement(apply_nonlinearity(x, b, 0.0), b, &mut stats);
        assert_abs_diff_eq!(back, x, epsilon = 1e-10);
        prop_assert_eq!(stats.clamped, 0);
    }

    #[test]
    fn combination_only_without_distortion_is_dlms(seed in any::<u64>(), n in 2usize..6, l in 1usize..5) {
        let ds = generate_dataset::<f64>(&small_signal(n, l, 30), seed).unwrap().with_coeffs(&vec![0.0; n]);
        let topo = build_random_topology(n, 1, seed ^ 7).unwrap();
        let w = uniform_weights(&topo);
        let opts = RunOptions { record_trajectory: true };
        let base = run_dlms(&ds, &topo, &w, 0.01, Measurements::Nonlinear, LinkSetting::Clean, opts).unwrap();
        let steps = StepSizes::new(0.01, 0.005).unwrap();
        let comb = run_sonec_dlms(&ds, &topo, &w, steps, SonecVariant::CombinationOnly, LinkSetting::Clean, opts).unwrap();
        let (ta, tb) = (base.trajectory.unwrap(), comb.trajectory.unwrap());
        for i in 0..ta.n_iters() {
            for k in 0..n {
                for (x, y) in ta.omega(i, k).iter().zip(tb.omega(i, k)) {
                    prop_assert!((x - y).abs() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn fim_is_symmetric_psd(seed in any::<u64>(), n in 1usize..4, l in 1usize..4, iters in 1usize..6) {
        let ds = generate_dataset::<f64>(&small_signal(n, l, iters), seed).unwrap();
        let model = ObservationModel::from_dataset(&ds, iters).unwrap();
        let fim = assemble_fim(&model).full();
        prop_assert!(fim.asymmetry() <= 1e-10);
        let scale = fim.diagonal().iter().fold(1.0f64, |m, x| m.max(*x));
        let eig = symmetric_eigen(&fim).unwrap();
        prop_assert!(eig.values[0] >= -1e-10 * scale);
    }

    #[test]
    fn msd_is_permutation_invariant(
        devs in prop::collection::vec(prop::collection::vec(-2.0f64..2.0, 6), 1..6),
        rot in 0usize..5,
    ) {
        let truth = [0.1, -0.4];
        let runs: Vec<Vec<Vec<f64>>> = devs
            .iter()
            .map(|r| r.chunks(2).map(|c| vec![truth[0] + c[0], truth[1] + c[1]]).collect())
            .collect();
        let mut shuffled = runs.clone();
        shuffled.reverse();
        let k = rot % shuffled.len();
        shuffled.rotate_left(k);
        for run in shuffled.iter_mut() {
            run.reverse();
        }
        prop_assume!(runs.iter().flatten().any(|w| (w[0] - truth[0]).abs() + (w[1] - truth[1]).abs() > 0.0));
        assert_relative_eq!(msd_db(&runs, &truth).unwrap(), msd_db(&shuffled, &truth).unwrap(), epsilon = 1e-12);
    }

    #[test]
    fn combination_is_convex(vals in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 3), 1..6), raw in prop::collection::vec(0.01f64..1.0, 6)) {
        let a: Vec<f64> = raw[..vals.len()].to_vec();
        let s: f64 = a.iter().sum();
        let a: Vec<f64> = a.iter().map(|x| x / s).collect();
        let phis: Vec<&[f64]> = vals.iter().map(|v| v.as_slice()).collect();
        let omega = combine_step(&phis, &a);
        let max = vals.iter().map(|v| norm_sq(v).sqrt()).fold(0.0, f64::max);
        prop_assert!(norm_sq(&omega).sqrt() <= max + 1e-12);
    }

    #[test]
    fn bound_is_monotone(mu in 1e-4f64..0.1, b in 1e-3f64..0.5, l in 1usize..40, w in 0.05f64..3.0, f in 1.0f64..2.0) {
        let at = |mu, b, l, w| c1_max(&BoundInputs { mu, b_max: b, l, omega_norm: w });
        let base = at(mu, b, l, w);
        prop_assert!(at(mu * f, b, l, w) >= base);
        prop_assert!(at(mu, b * f, l, w) >= base);
        prop_assert!(at(mu, b, l + 1, w) >= base);
        prop_assert!(at(mu, b, l, w * f) >= base);
    }

    #[test]
    fn g_format_keeps_six_digits(x in -1e9f64..1e9) {
        let s = format_g(x);
        let back: f64 = s.parse().unwrap();
        assert_relative_eq!(back, x, max_relative = 5e-6, epsilon = 1e-300);
    }

    #[test]
    fn f32_and_f64_runs_agree(seed in any::<u64>()) {
        let cfg = small_signal(3, 2, 50);
        let d64 = generate_dataset::<f64>(&cfg, seed).unwrap();
        let d32 = generate_dataset::<f32>(&cfg, seed).unwrap();
        let topo = build_random_topology(3, 1, seed).unwrap();
        let w64: Weights = uniform_weights(&topo);
        let w32 = w64.cast::<f32>();
        let o = RunOptions::default();
        let a = run_dlms(&d64, &topo, &w64, 0.01, Measurements::Linear, LinkSetting::Clean, o).unwrap();
        let b = run_dlms(&d32, &topo, &w32, 0.01f32, Measurements::Linear, LinkSetting::Clean, o).unwrap();
        let (x, y) = (a.msd[49], b.msd[49] as f64);
        prop_assert!((x - y).abs() <= 1e-4 * x.max(1e-3));
    }
}

#[test]
fn fim_fixture_matrix() {
    let m = ObservationModel::new(
        vec![Matrix::from_rows(&[[1.0], [2.0]])],
        vec![1.0],
        vec![0.0],
        vec![1.0],
    )
    .unwrap();
    assert_eq!(
        assemble_fim(&m).full(),
        Matrix::from_rows(&[[5.0, 9.0], [9.0, 17.0]])
    );
}

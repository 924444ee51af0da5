use ca_isac::channel::{sigma_for_snr, simulate_bands, Target, TargetScene};
use ca_isac::config::{
    make_table3_config, make_table3_config_for, matched_low_cp, BandId, CaConfig, Scheme,
};
use ca_isac::crlb::{crlb_closed_form, crlb_oracle, CrlbInputs};
use ca_isac::estimators::{estimate, estimate_range_staggered, estimate_velocity_staggered};
use ca_isac::fusion::{build_comb_selection, build_range_selection, build_velocity_selection};
use ca_isac::grid::{generate_tx_grid, pilot_mask};
use ca_isac::harness::{run_sweep, write_sweep_csv, ExperimentSpec, Method, Placement};
use ca_isac::rng::seeded;
use ca_isac::sparse::{
    certify_kkt, correlation_inf_norm, solve_fista, solve_ista, Direction, LassoProblem,
    SensingOperator, SolverOptions,
};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::Rng;

fn random_vec(seed: u64, n: usize) -> Vec<Complex64> {
    let mut rng = seeded(seed);
    (0..n)
        .map(|_| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
        .collect()
}

fn scheme() -> impl Strategy<Value = Scheme> {
    prop::sample::select(Scheme::ALL.to_vec())
}

fn mask(n: usize, kind: u8, k: usize) -> (Direction, Vec<bool>) {
    match kind % 3 {
        0 => (Direction::ForwardDft, build_range_selection(n / k, n)),
        1 => (Direction::InverseDft, build_velocity_selection(k, n)),
        _ => (Direction::ForwardDft, build_comb_selection(k, n)),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn validate_is_idempotent(s in scheme(), low_khz in 10.0f64..60.0) {
        let cfg = make_table3_config_for(s).with_low_spacing(low_khz * 1e3).unwrap();
        let once = cfg.validate().unwrap();
        prop_assert_eq!(once.validate().unwrap(), once);
        let k = once.spacing_ratio().unwrap() as f64;
        prop_assert_eq!(k * once.low.spacing_hz, once.high.spacing_hz);
        prop_assert_eq!(CaConfig::from_toml(&once.to_toml()).unwrap(), once);
    }

    #[test]
    fn mask_counts_and_energy(s in scheme(), seed in any::<u64>()) {
        let cfg = make_table3_config_for(s);
        for band in [cfg.low, cfg.high] {
            let count = pilot_mask(&band).iter().filter(|&&b| b).count();
            let (n, m) = (band.subcarriers, band.symbols);
            prop_assert_eq!(count, n * m / band.pilot.interval());
            let tx = generate_tx_grid(&band, seed);
            prop_assert!((tx.energy() - count as f64).abs() < 1e-9);
        }
    }

    #[test]
    fn noise_is_reproducible(seed in any::<u64>(), snr in -20.0f64..20.0) {
        let cfg = make_table3_config();
        let sigma = sigma_for_snr(snr, Complex64::new(1.0, 0.0));
        let scene = TargetScene::single(Target::new(80.0, 10.0), sigma, seed);
        let (a, _) = simulate_bands(&cfg, &scene).unwrap();
        let (b, _) = simulate_bands(&cfg, &scene).unwrap();
        prop_assert_eq!(a.values, b.values);
    }

    #[test]
    fn sigma_invariant_to_joint_scaling(snr in -30.0f64..30.0, h in 0.1f64..10.0) {
        let g = Complex64::new(h, 0.0);
        let s1 = sigma_for_snr(snr, g);
        let s2 = sigma_for_snr(snr, g * 2.0);
        prop_assert!((s2 / s1 - 2.0).abs() < 1e-12);
    }

    #[test]
    fn operator_adjoint_identity(kind in 0u8..3, big in any::<bool>(), k in prop::sample::select(vec![2usize, 4]), seed in any::<u64>()) {
        let n = if big { 512 } else { 64 };
        let (dir, m) = mask(n, kind, k);
        let op = SensingOperator::new(dir, m).unwrap();
        let x = random_vec(seed, n);
        let y = random_vec(seed ^ 1, op.observed_rows().len());
        let lhs: Complex64 = op.apply(&x).unwrap().iter().zip(&y).map(|(a, b)| a * b.conj()).sum();
        let rhs: Complex64 = x.iter().zip(op.adjoint(&y).unwrap()).map(|(a, b)| a * b.conj()).sum();
        prop_assert!((lhs - rhs).norm() < 1e-9);
    }

    #[test]
    fn fista_scale_equivariance(kind in 0u8..3, seed in any::<u64>(), alpha in 0.1f64..20.0) {
        let (dir, m) = mask(64, kind, 4);
        let op = SensingOperator::new(dir, m).unwrap();
        let d = random_vec(seed, op.observed_rows().len());
        let opts = SolverOptions { max_iters: 3000, tol: 1e-13, ..Default::default() };
        let p = LassoProblem::new(&op, d.clone(), &opts).unwrap();
        let x = solve_fista(&p).unwrap().x_hat;
        let scaled: Vec<Complex64> = d.iter().map(|v| v * alpha).collect();
        let opts2 = SolverOptions { lambda: Some(alpha * p.lambda), ..opts };
        let x2 = solve_fista(&LassoProblem::new(&op, scaled, &opts2).unwrap()).unwrap().x_hat;
        for (a, b) in x.iter().zip(&x2) {
            prop_assert!((a * alpha - b).norm() < 1e-8 * alpha.max(1.0));
        }
    }

    #[test]
    fn fista_certified_at_defaults(kind in 0u8..3, big in any::<bool>(), seed in any::<u64>()) {
        let n = if big { 512 } else { 64 };
        let (dir, m) = mask(n, kind, 4);
        let op = SensingOperator::new(dir, m).unwrap();
        let d = random_vec(seed, op.observed_rows().len());
        let p = LassoProblem::new(&op, d.clone(), &SolverOptions::default()).unwrap();
        let r = solve_fista(&p).unwrap();
        let scale = p.lambda.max(correlation_inf_norm(&op, &d).unwrap());
        prop_assert!(certify_kkt(&p, &r.x_hat).unwrap() <= 1e-3 * scale);
    }

    #[test]
    fn closed_form_matches_oracle(
        s in scheme(),
        n in prop::sample::select(vec![8usize, 16, 64, 512]),
        m in prop::sample::select(vec![8usize, 16, 64]),
        kq in prop::sample::select(vec![2usize, 4]),
        sigma in 0.01f64..100.0,
    ) {
        let mut high = make_table3_config().high;
        high.spacing_hz = kq as f64 * 30e3;
        high.subcarriers = n;
        high.symbols = m;
        let mut low = high;
        low.carrier_hz = 5.9e9;
        low.spacing_hz = 30e3;
        low.cp_s = matched_low_cp(&low, &high);
        let cfg = CaConfig { low, high, ..make_table3_config() }.with_scheme(s, kq, kq);
        let inputs = CrlbInputs::new(cfg, 1.0, sigma).unwrap();
        let c = crlb_closed_form(&inputs).unwrap();
        let o = crlb_oracle(&inputs).unwrap();
        prop_assert!((c.crlb_range / o.crlb_range - 1.0).abs() < 1e-6);
        prop_assert!((c.crlb_velocity / o.crlb_velocity - 1.0).abs() < 1e-6);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn on_grid_targets_bin_exact(br in 0usize..256, bv in 0usize..32) {
        let cfg = make_table3_config();
        let r = br as f64 * cfg.range_bin_width(BandId::High);
        let v = bv as f64 * cfg.velocity_bin_width(BandId::High);
        let (lo, hi) = simulate_bands(&cfg, &TargetScene::single(Target::new(r, v), 0.0, 3)).unwrap();
        let opts = SolverOptions::default();
        prop_assert_eq!(estimate_range_staggered(&lo, &hi, &cfg, &opts).unwrap().peak_bin, br);
        prop_assert_eq!(estimate_velocity_staggered(&lo, &hi, &cfg, &opts).unwrap().peak_bin, bv);
    }

    #[test]
    fn off_grid_within_half_bin(s in scheme(), r in 1.0f64..300.0, v in 0.0f64..40.0) {
        let cfg = make_table3_config_for(s);
        let (lo, hi) = simulate_bands(&cfg, &TargetScene::single(Target::new(r, v), 0.0, 4)).unwrap();
        let e = estimate(&lo, &hi, &cfg, &SolverOptions::default()).unwrap();
        // Averaged schemes can be off by half a bin of each band.
        let (rb, vb) = if s == Scheme::Ca1 {
            (cfg.range_bin_width(BandId::High), cfg.velocity_bin_width(BandId::High))
        } else {
            (
                0.5 * (cfg.range_bin_width(BandId::Low) + cfg.range_bin_width(BandId::High)),
                0.5 * (cfg.velocity_bin_width(BandId::Low) + cfg.velocity_bin_width(BandId::High)),
            )
        };
        prop_assert!((e.range_m - r).abs() <= rb / 2.0 + 1e-9, "{} vs {}", e.range_m, r);
        prop_assert!((e.velocity_mps - v).abs() <= vb / 2.0 + 1e-9, "{} vs {}", e.velocity_mps, v);
    }

    #[test]
    fn peaks_invariant_to_global_scaling(seed in any::<u64>(), mag in 0.01f64..100.0, phase in 0.0f64..6.3) {
        let cfg = make_table3_config();
        let (lo, hi) = simulate_bands(&cfg, &TargetScene::single(Target::new(70.0, -12.0), 1.0, seed)).unwrap();
        let f = Complex64::from_polar(mag, phase);
        let opts = SolverOptions::default();
        let a = estimate(&lo, &hi, &cfg, &opts).unwrap();
        let b = estimate(&lo.scaled(f), &hi.scaled(f), &cfg, &opts).unwrap();
        prop_assert_eq!(a.range[0].peak_bin, b.range[0].peak_bin);
        prop_assert_eq!(a.velocity[0].peak_bin, b.velocity[0].peak_bin);
    }
}

#[test]
fn fista_not_worse_than_ista() {
    for seed in 0..20 {
        let op =
            SensingOperator::new(Direction::ForwardDft, build_range_selection(16, 64)).unwrap();
        let d = random_vec(seed, 16);
        let opts = SolverOptions {
            tol: 0.0,
            max_iters: 100,
            ..Default::default()
        };
        let p = LassoProblem::new(&op, d, &opts).unwrap();
        let f = solve_fista(&p).unwrap();
        let i = solve_ista(&p).unwrap();
        assert_eq!(f.iterations, i.iterations);
        assert!(f.objective <= i.objective + 1e-9, "seed {seed}");
    }
}

#[test]
fn sweep_csv_is_byte_identical() {
    let cfg = make_table3_config();
    let mut spec = ExperimentSpec::new(
        cfg,
        vec![Method::Scheme(Scheme::Ca1), Method::Scheme(Scheme::Ca3)],
        Target::new(117.0, 30.0),
        vec![-10.0, 0.0],
    );
    spec.trials = 4;
    spec.placement = Placement::one_bin(&cfg);
    spec.master_seed = 42;
    let run = || {
        let mut buf = Vec::new();
        write_sweep_csv(&mut buf, &run_sweep(&spec).unwrap()).unwrap();
        buf
    };
    let a = run();
    assert_eq!(a, run());
    let text = String::from_utf8(a).unwrap();
    assert_eq!(text.lines().count(), 1 + 4);
}

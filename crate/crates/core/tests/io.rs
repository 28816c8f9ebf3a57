mod common;

use cascade_core::iogen::{precision_nonzero_fraction, read_raw_matrix, read_trace};
use cascade_core::{
    cholesky_lower, empirical_correlation, generate_synthetic, read_matrix, run_cascade,
    sparsity_dump, validate_corr, write_matrix, write_trace, CascadeOptions, FactorizationKind,
    Matrix, SyntheticSpec, TreePolicy,
};
use common::{golden, random_corr};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn normal_table(m: usize, n: usize, seed: u64) -> Matrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Matrix::from_fn(m, n, |_, _| StandardNormal.sample(&mut rng))
}

#[test]
fn golden_matrix_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sigma.csv");
    let s = golden();
    write_matrix(&s, &path).unwrap();
    let back: cascade_core::CorrMatrix = read_matrix(&path, false).unwrap();
    assert!(back.max_abs_diff(&s) <= 1e-12);
}

#[test]
fn golden_trace_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("kl_trace.csv");
    let m = run_cascade(
        &golden(),
        TreePolicy::ChowLiu,
        FactorizationKind::LowerCholeskyOrdered,
        &CascadeOptions::stages(2),
    )
    .unwrap();
    write_trace(&m.kl_trace, &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("stage,kl_nats\n"));
    let rows: Vec<(usize, f64)> = read_trace(&path).unwrap();
    assert_eq!(rows.iter().map(|r| r.0).collect::<Vec<_>>(), vec![0, 1, 2]);
    let d0 = cascade_core::kl_gauss(&golden(), &Matrix::identity(5)).unwrap();
    assert!((rows[0].1 - d0).abs() <= 1e-12);
    assert!((rows[1].1 - 0.375).abs() <= 1e-3);
    assert!((rows[2].1 - 0.051).abs() <= 1e-3);
}

#[test]
fn sparsity_dump_of_tree_covariance() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sp.csv");
    let tree = cascade_core::chow_liu(&golden(), 1e-12).unwrap();
    sparsity_dump(tree.covariance(), &path).unwrap();
    let sp: Matrix<f64> = read_raw_matrix(&path).unwrap();
    let pairs = tree.edge_pairs();
    for u in 0..5 {
        for v in 0..5 {
            let expected_zero = u != v && !pairs.contains(&(u.min(v), u.max(v)));
            assert_eq!(sp[(u, v)] <= 1e-9, expected_zero, "({u},{v})");
            assert!(sp[(u, v)] >= 0.0);
        }
    }
}

#[test]
fn independent_columns_are_uncorrelated() {
    let c = empirical_correlation(&normal_table(10_000, 3, 11)).unwrap();
    for i in 0..3 {
        for j in 0..3 {
            if i != j {
                assert!(c[(i, j)].abs() < 0.05, "{}", c[(i, j)]);
            }
        }
    }
}

#[test]
fn simulated_golden_samples_recover_sigma() {
    let s = golden();
    let l = cholesky_lower(&s).unwrap();
    let z = normal_table(5000, 5, 12);
    // rows are samples, so x = L z becomes X = Z L^T
    let x = z.matmul(&l.transpose());
    let est = empirical_correlation(&x).unwrap();
    assert!(est.max_abs_diff(&s) <= 0.05, "{}", est.max_abs_diff(&s));
    validate_corr(est.as_matrix().clone()).unwrap();
}

#[test]
fn synthetic_density_matches_request() {
    let spec = SyntheticSpec::new(250, 0.5, 42).unwrap();
    let s = generate_synthetic::<f64>(&spec).unwrap();
    validate_corr(s.as_matrix().clone()).unwrap();
    let frac = precision_nonzero_fraction(&s, 1e-9).unwrap();
    assert!((frac - 0.5).abs() <= 0.05, "{frac}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn generated_matrices_are_valid_and_repeatable(
        n in 2usize..60,
        density in 0.0f64..=1.0,
        seed in any::<u64>(),
    ) {
        let spec = SyntheticSpec::new(n, density, seed).unwrap();
        let a = generate_synthetic::<f64>(&spec).unwrap();
        let b = generate_synthetic::<f64>(&spec).unwrap();
        prop_assert_eq!(a.as_matrix(), b.as_matrix());
        prop_assert!(validate_corr(a.as_matrix().clone()).is_ok());
    }

    #[test]
    fn csv_round_trip_is_lossless(n in 1usize..12, seed in any::<u64>()) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let s = random_corr(n, seed);
        write_matrix(&s, &path).unwrap();
        let back: Matrix<f64> = read_raw_matrix(&path).unwrap();
        prop_assert!(back.max_abs_diff(&s) <= 1e-12);
    }
}

use magicount_core::matrix::{Matrix, SimplexMatrix};
use magicount_core::permanent::block_expand;
use magicount_core::sampler::{chain_rng, sample_uniform_simplex};
use magicount_core::scaling::{
    log_sigma, log_sigma_positive, scaling_entry_bound, sigma_via_minimization, sinkhorn_scale,
    sinkhorn_scale_observed, DEFAULT_MAX_ITER, DEFAULT_TOL,
};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::Exp1;

fn random_point(seed: u64, n: usize) -> SimplexMatrix {
    sample_uniform_simplex(&mut chain_rng(seed), n)
}

fn sum_log(m: &Matrix) -> f64 {
    m.as_slice().iter().map(|v| v.ln()).sum()
}

/// Closed form for 2×2: `σ = (√(ad) + √(bc))²`.
fn sigma_two_by_two(x: &Matrix) -> f64 {
    let (a, b, c, d) = (x[(0, 0)], x[(0, 1)], x[(1, 0)], x[(1, 1)]);
    2.0 * ((a * d).sqrt() + (b * c).sqrt()).ln()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn passes_never_decrease_sum_of_logs(seed in any::<u64>(), n in 2usize..=7) {
        let x = random_point(seed, n);
        let a = x.matrix().scaled(n as f64);
        let mut prev = sum_log(&a);
        let mut ok = true;
        sinkhorn_scale_observed(&a, DEFAULT_TOL, DEFAULT_MAX_ITER, |m| {
            let s = sum_log(m);
            ok &= s >= prev - 1e-9 * prev.abs().max(1.0);
            prev = s;
        }).unwrap();
        prop_assert!(ok);
    }

    #[test]
    fn log_sigma_is_concave(seed in any::<u64>(), n in 1usize..=6) {
        let mut rng = chain_rng(seed);
        let x1 = sample_uniform_simplex(&mut rng, n);
        let x2 = sample_uniform_simplex(&mut rng, n);
        let (l1, l2) = (log_sigma(&x1).unwrap(), log_sigma(&x2).unwrap());
        for alpha in [0.25, 0.5, 0.75] {
            let data: Vec<f64> = x1.as_slice().iter().zip(x2.as_slice())
                .map(|(a, b)| alpha * a + (1.0 - alpha) * b).collect();
            let mid = SimplexMatrix::project(&Matrix::from_vec(n, data).unwrap()).unwrap();
            prop_assert!(log_sigma(&mid).unwrap() >= alpha * l1 + (1.0 - alpha) * l2 - 1e-9);
        }
    }

    #[test]
    fn sigma_peaks_on_balanced_matrices(seed in any::<u64>(), n in 1usize..=6) {
        let max = -(n as f64) * (n as f64).ln();
        let x = random_point(seed, n);
        prop_assert!(log_sigma(&x).unwrap() <= max + 1e-12);
        // any matrix with line sums 1/n is a maximizer
        let y = sinkhorn_scale(&x, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap().y.scaled(1.0 / n as f64);
        let y = SimplexMatrix::project(&y).unwrap();
        prop_assert!((log_sigma(&y).unwrap() - max).abs() < 1e-9);
    }

    #[test]
    fn permutation_invariance(seed in any::<u64>(), n in 1usize..=6) {
        let mut rng = chain_rng(seed);
        let x = sample_uniform_simplex(&mut rng, n);
        let mut rp: Vec<usize> = (0..n).collect();
        let mut cp: Vec<usize> = (0..n).collect();
        rp.shuffle(&mut rng);
        cp.shuffle(&mut rng);
        let base = log_sigma(&x).unwrap();
        let permuted = SimplexMatrix::new(x.permuted(&rp, &cp)).unwrap();
        prop_assert!((log_sigma(&permuted).unwrap() - base).abs() < 1e-10);
        let transposed = SimplexMatrix::new(x.transpose()).unwrap();
        prop_assert!((log_sigma(&transposed).unwrap() - base).abs() < 1e-10);
    }

    #[test]
    fn oracle_agreement(seed in any::<u64>(), n in 1usize..=8) {
        let x = random_point(seed, n);
        let a = log_sigma(&x).unwrap();
        let b = sigma_via_minimization(&x, 1e-12).unwrap();
        prop_assert!((a - b).abs() < 1e-6, "{} vs {}", a, b);
    }

    #[test]
    fn closed_form_two_by_two(seed in any::<u64>()) {
        let x = random_point(seed, 2);
        prop_assert!((log_sigma(&x).unwrap() - sigma_two_by_two(&x)).abs() < 1e-9);
    }

    #[test]
    fn kronecker_power(seed in any::<u64>(), n in 1usize..=4, t in 1usize..=4) {
        let x = random_point(seed, n);
        let big = block_expand(&x, t).unwrap();
        let got = log_sigma_positive(&big).unwrap();
        prop_assert!((got - t as f64 * log_sigma(&x).unwrap()).abs() < 1e-8);
    }

    #[test]
    fn homogeneity(seed in any::<u64>(), n in 1usize..=5, lambda in 0.01f64..100.0) {
        let x = random_point(seed, n);
        let got = log_sigma_positive(&x.matrix().scaled(lambda)).unwrap();
        prop_assert!((got - (n as f64 * lambda.ln() + log_sigma(&x).unwrap())).abs() < 1e-9);
    }
}

#[test]
fn entry_bound_on_random_exponential_matrices() {
    let mut rng = chain_rng(61);
    for _ in 0..100 {
        let data: Vec<f64> = (0..25).map(|_| rng.sample::<f64, _>(Exp1)).collect();
        let a = Matrix::from_vec(5, data).unwrap();
        let b = sinkhorn_scale(&SimplexMatrix::project(&a).unwrap(), DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap().y;
        for k in 0..5 {
            for l in 0..5 {
                assert!(b[(k, l)].ln() <= scaling_entry_bound(&a, k, l).unwrap() + 1e-9);
            }
        }
    }
}

#[test]
fn near_boundary_points_match_closed_form() {
    for eps in [1e-6, 1e-9, 1e-12, 2.5e-13] {
        let x = SimplexMatrix::project(&Matrix::from_rows(&[vec![0.3, 0.2], vec![eps, 0.5]]).unwrap()).unwrap();
        let got = log_sigma(&x).unwrap();
        assert!((got - sigma_two_by_two(&x)).abs() < 1e-8, "eps {eps}: {got}");
    }
}

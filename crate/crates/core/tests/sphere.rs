use icb_core::linalg::Matrix;
use icb_core::sphere::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `E[u₁^{2λ}]` on `S^d`: `Π_{i<λ} (2i + 1)/(d + 1 + 2i)`.
fn exact_moment(d: usize, lambda: u32) -> f64 {
    (0..lambda).map(|i| (2 * i + 1) as f64 / (d as f64 + 1.0 + 2.0 * i as f64)).product()
}

#[test]
fn second_moment_is_one_over_dimension() {
    for d in 1..=8 {
        let e = mc_cosine_power_expectation(d, 1, 1_000_000, 17 + d as u64).unwrap();
        let target = 1.0 / (d as f64 + 1.0);
        assert!((e.estimate - target).abs() < 3.0 * e.stderr, "d={d}: {e:?}");
    }
}

#[test]
fn reduction_and_pairs_agree() {
    for (d, l) in [(1, 1), (2, 2), (4, 3)] {
        let a = mc_cosine_power_expectation(d, l, 200_000, 3).unwrap();
        let b = mc_cosine_power_pairs(d, l, 200_000, 4).unwrap();
        let se = (a.stderr.powi(2) + b.stderr.powi(2)).sqrt();
        assert!((a.estimate - b.estimate).abs() < 4.0 * se);
        assert!((a.estimate - exact_moment(d, l)).abs() < 4.0 * a.stderr);
    }
}

#[test]
fn cosine_power_bound_holds() {
    for d in [2usize, 3] {
        for l in d as u32..=10 {
            let b = cosine_power_bound(d, l);
            assert!(exact_moment(d, l) <= b);
            let e = mc_cosine_power_expectation(d, l, 100_000, 9).unwrap();
            assert!(e.estimate <= b);
        }
    }
}

#[test]
fn integrand_bound_holds_on_grid() {
    for d in 1..=8 {
        for l in 1..=10 {
            let c = integrand_bound_check(d, l, 10_000).unwrap();
            assert!(c.holds, "d={d} l={l}: {c:?}");
        }
    }
}

#[test]
fn monte_carlo_is_reproducible() {
    let a = mc_cosine_power_expectation(3, 2, 50_000, 5).unwrap();
    let b = mc_cosine_power_expectation(3, 2, 50_000, 5).unwrap();
    assert_eq!(a, b);
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let c = pool.install(|| mc_cosine_power_expectation(3, 2, 50_000, 5).unwrap());
    assert_eq!(a, c);
}

#[test]
fn frobenius_bound_holds_at_its_natural_size() {
    // with n = multiset(d, λ) rows the bound applies
    let n = multiset(2, 2) as usize;
    let c = frobenius_expectation_check(2, 2, n, 200, 1).unwrap();
    assert!(c.holds, "{c:?}");
}

#[test]
fn frobenius_bound_fails_for_more_rows() {
    // E‖M‖_F² = n + n(n−1)·E⟨u,v⟩⁴ = 8 + 56/5 for n = 8 on S², so the mean sits
    // near √19.2 ≈ 4.38, above √3·3^{3/4} ≈ 3.95
    let c = frobenius_expectation_check(2, 2, 8, 200, 1).unwrap();
    assert!((c.mean.estimate - 19.2f64.sqrt()).abs() < 0.2, "{c:?}");
    assert!(!c.holds);
}

#[test]
fn spectral_count_holds_on_seeded_grams() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for seed in 0..100u64 {
        let d = rng.random_range(1..=5);
        let n = rng.random_range(2..=12);
        let l = rng.random_range(1..=4);
        let g = hadamard_power_gram(&sample_sphere(d, n, seed), l).unwrap();
        assert!(g.is_symmetric(0.0));
        assert!((0..n).all(|i| g[(i, i)] == 1.0));
        let c = spectral_count_check(&g).unwrap();
        assert!(c.holds, "{c:?}");
    }
}

fn layer1_a(n: usize, d: usize, seed: u64) -> Matrix {
    sample_sphere(d - 1, n, seed)
}

#[test]
fn layer1_construction_matches_formula() {
    let a = layer1_a(4, 3, 21);
    let c = lower_bound_layer1_construction(&a, 8, 2, 3, 5).unwrap();
    assert_eq!(c.templates.len(), 9);
    let v = verify_layer1_construction(&c).unwrap();
    assert_eq!(v.pairs, 16);
    assert!(v.max_deviation < 1e-12, "{v:?}");
}

#[test]
fn layer1_u_has_the_four_cases() {
    let a = layer1_a(4, 3, 21);
    let c = lower_bound_layer1_construction(&a, 8, 2, 3, 5).unwrap();
    let u = expected_u(&c, 2, 3);
    // d_a = 4: coordinates 4 and 8 carry 2N
    assert_eq!(u[3], 6.0);
    assert_eq!(u[7], 6.0);
    assert_eq!(u[0], a[(1, 0)]);
    assert_eq!(u[1], a[(1, 1)]);
    assert_eq!(u[2], a[(2, 0)]);
    // φ runs past d in the second head block
    assert_eq!(&u[4..7], &[0.0, 0.0, 0.0]);
}

#[test]
fn layer1_rejects_bad_shapes() {
    let a = layer1_a(4, 3, 1);
    assert!(lower_bound_layer1_construction(&a, 8, 3, 3, 0).is_err());
    assert!(lower_bound_layer1_construction(&a, 8, 4, 3, 0).is_err());
    assert!(lower_bound_layer1_construction(&a, 9, 3, 3, 0).is_ok());
    let narrow = layer1_a(4, 2, 1);
    assert!(lower_bound_layer1_construction(&narrow, 9, 3, 3, 0).is_err());
}

#[test]
fn odd_head_dimension_construction() {
    // d_a = 5 splits evenly into two halves of two
    let a = layer1_a(3, 4, 8);
    let c = lower_bound_layer1_construction(&a, 10, 2, 2, 3).unwrap();
    assert!(verify_layer1_construction(&c).unwrap().max_deviation < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn grams_are_unit_diagonal_and_satisfy_the_count(seed in 0u64..100_000, d in 1usize..6, n in 2usize..10, l in 1u32..5) {
        let g = hadamard_power_gram(&sample_sphere(d, n, seed), l).unwrap();
        prop_assert!(g.is_symmetric(0.0));
        let c = spectral_count_check(&g).unwrap();
        prop_assert!(c.holds);
    }
}

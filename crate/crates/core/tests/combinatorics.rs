use icb_core::combinatorics::*;
use num_bigint::BigUint;
use num_traits::{One, ToPrimitive};
use proptest::prelude::*;

fn big_factorial(n: u64) -> BigUint {
    (1..=n).fold(BigUint::one(), |acc, k| acc * k)
}

fn big_multinomial(parts: &[u64]) -> BigUint {
    let k: u64 = parts.iter().sum();
    parts.iter().fold(big_factorial(k), |acc, &p| acc / big_factorial(p))
}

fn big_binomial(n: u64, k: u64) -> BigUint {
    big_factorial(n) / (big_factorial(k) * big_factorial(n - k))
}

fn big_balanced(k: u64, m: u64) -> Vec<u64> {
    let (q, r) = (k / m, k % m);
    (0..m).map(|i| if i < m - r { q } else { q + 1 }).collect()
}

/// `ln S(n)` with the integer part evaluated exactly.
fn oracle_ln_s(k: u64, m: u64, eta: f64, n: u64) -> f64 {
    let int = big_binomial(k, n) * big_multinomial(&big_balanced(n, m)) * big_multinomial(&big_balanced(k - n, m));
    int.to_f64().unwrap().ln() + n as f64 * eta.ln()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs())
}

const ETAS: [f64; 3] = [0.1, 0.5, 1.0];

#[test]
fn multinomials_match_big_integers() {
    assert_eq!(big_multinomial(&[3, 4, 5]), BigUint::from(27720u32));
    for k in 0..=30u64 {
        for m in 1..=4usize {
            for_each_composition(k, m, |a| {
                if a.iter().sum::<u64>() == k && (k < 12 || a[0] % 3 == 0) {
                    let exact = big_multinomial(a).to_f64().unwrap();
                    let got = log_multinomial(k, a).unwrap().to_f64();
                    assert!(rel(got, exact) < 1e-12, "{a:?}");
                }
            });
        }
    }
}

#[test]
fn balanced_split_is_the_maximizer() {
    for k in 0..=16u64 {
        for m in 1..=4u64 {
            let best = balanced_multinomial(k, m).unwrap().ln_abs();
            let mut max = f64::NEG_INFINITY;
            for_each_composition(k, m as usize, |a| max = max.max(log_multinomial(k, a).unwrap().ln_abs()));
            assert!((best - max).abs() < 1e-12);
        }
    }
}

#[test]
fn s_recurrence_matches_exact_product() {
    for k in 0..=16u64 {
        for m in [2u64, 3] {
            for eta in ETAS {
                for n in 0..=k {
                    let exact = oracle_ln_s(k, m, eta, n);
                    let rec = s_recurrence(k, m, eta, n).unwrap().ln_abs();
                    let direct = s_direct(k, m, eta, n).unwrap().ln_abs();
                    assert!(rel(rec.exp(), exact.exp()) < 1e-12, "K={k} M={m} eta={eta} n={n}");
                    assert!(rel(direct.exp(), exact.exp()) < 1e-12);
                }
            }
        }
    }
}

#[test]
fn block_product_agrees_only_when_m_divides_k() {
    for k in [6u64, 9, 12] {
        for n in 0..=k {
            let exact = oracle_ln_s(k, 3, 0.5, n).exp();
            assert!(rel(s_block_product(k, 3, 0.5, n).unwrap().to_f64(), exact) < 1e-12);
        }
    }
    // K = 5, M = 2, n = 1: the exact value is 30η, the block product gives 25η
    let exact = oracle_ln_s(5, 2, 0.5, 1).exp();
    assert!(rel(exact, 15.0) < 1e-14);
    assert!(rel(s_block_product(5, 2, 0.5, 1).unwrap().to_f64(), 12.5) < 1e-14);
}

#[test]
fn argmax_formula_attains_the_maximum() {
    for k in 1..=16u64 {
        for m in [2u64, 3] {
            for eta in ETAS {
                let (arg, _) = argmax_s_exhaustive(k, m, eta).unwrap();
                let f = argmax_s(k, m, eta).unwrap();
                assert!(arg.contains(&f), "K={k} M={m} eta={eta}: formula {f}, exhaustive {arg:?}");
            }
        }
    }
    let (arg, _) = argmax_s_exhaustive(20, 2, 0.25).unwrap();
    assert!(arg.contains(&argmax_s(20, 2, 0.25).unwrap()));
}

#[test]
fn t_sets_are_sandwiched() {
    for k in 1..=16u64 {
        for m in [2u64, 3] {
            for s in [0.05, 0.2, (-1.5f64).exp()] {
                let t = characterize_t(k, m, s).unwrap();
                assert!(t.inner_in_t && t.t_in_outer, "K={k} M={m} s={s}: {t:?}");
                assert!(t.inner_size <= t.t_size && t.t_size <= t.outer_size);
            }
        }
    }
    let a = characterize_t(12, 2, 0.5).unwrap();
    let b = characterize_t(9, 3, 0.1).unwrap();
    assert!(a.inner_in_t && a.t_in_outer && b.inner_in_t && b.t_in_outer);
    assert_eq!(b.compositions, 55);
}

#[test]
fn oversized_t_is_refused() {
    assert!(characterize_t(3000, 3, 0.1).is_err());
}

#[test]
fn lattice_counts_match_cube_scan() {
    for d in 1..=4usize {
        for r in 0..=4i64 {
            let mut n = 0u64;
            let side = (2 * r + 1) as u64;
            for idx in 0..side.pow(d as u32) {
                let mut x = idx;
                let mut sq = 0i64;
                for _ in 0..d {
                    let c = (x % side) as i64 - r;
                    x /= side;
                    sq += c * c;
                }
                n += u64::from(sq <= r * r);
            }
            assert_eq!(lattice_ball_count(d, r as f64).unwrap(), n);
        }
    }
}

#[test]
fn lattice_counts_respect_bounds() {
    for d in 2..=6usize {
        for r in 2..=8 {
            let exact = lattice_ball_count(d, r as f64).unwrap() as f64;
            let (lo, hi) = lattice_ball_bounds(d, r as f64);
            assert!(0.5 * lo <= exact && exact <= 2.0 * hi, "d={d} R={r}: {lo} {exact} {hi}");
        }
    }
}

#[test]
fn binomial_count_example() {
    let c = count_nonneg_binom_eta(30, 0.5, 0.1).unwrap();
    assert!(c.exact as f64 <= 2.0 * c.bound.unwrap(), "{c:?}");
    assert!(c.exact >= 1);
}

#[test]
fn summand_counts_sit_between_closed_forms() {
    for k in 1..=16u64 {
        for m in [2u64, 3] {
            for eta in ETAS {
                for s in [0.05, 0.2, (-1.5f64).exp()] {
                    let c = count_nonneg_summands(k, m, eta, s).unwrap();
                    if let Some(u) = c.upper {
                        assert!(c.exact as f64 <= 4.0 * u, "K={k} M={m} eta={eta} s={s}: {c:?}");
                    }
                    if let Some(l) = c.lower {
                        assert!(c.exact as f64 >= l / 4.0, "K={k} M={m} eta={eta} s={s}: {c:?}");
                    }
                }
            }
        }
    }
    let a = count_nonneg_summands(9, 2, 1.0, (-1.5f64).exp()).unwrap();
    let b = count_nonneg_summands(15, 2, 0.25, 0.05).unwrap();
    assert!(a.upper.is_some() && b.upper.is_some());
}

#[test]
fn threshold_between_top_levels_keeps_only_the_maxima() {
    let logs = summand_logs(9, 2, 0.5).unwrap();
    let mut levels: Vec<f64> = logs.clone();
    levels.sort_by(|a, b| b.total_cmp(a));
    levels.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    let ratio2 = (levels[1] - levels[0]).exp();
    let ratio3 = (levels[2] - levels[0]).exp();
    let top = count_nonneg_summands(9, 2, 0.5, (ratio2 + 1.0) / 2.0).unwrap();
    assert_eq!(top.exact, top.max_multiplicity);
    let second = logs.iter().filter(|&&l| (l - levels[1]).abs() < 1e-12).count() as u64;
    let two = count_nonneg_summands(9, 2, 0.5, (ratio2 + ratio3) / 2.0).unwrap();
    assert_eq!(two.exact, top.max_multiplicity + second);
}

fn instance(width: u64, eta: f64) -> TheoremInstance {
    TheoremInstance { width, seq_len: 2, heads: 1, layers: 6, eta, lambda_min: 1.0, lambda_max: 1.0, eps: 1.0, coeff_bound: 1.0 }
}

#[test]
fn theorem_bound_is_linear_in_width() {
    let xs = [4.0, 6.0, 8.0];
    let ys: Vec<f64> = xs.iter().map(|&d| theorem_bound(&instance(d as u64, 0.5)).unwrap().value.ln_abs()).collect();
    for &d in &[4u64, 6, 8] {
        assert!(theorem_bound(&instance(d, 0.5)).unwrap().hypotheses_hold());
    }
    let mx = xs.iter().sum::<f64>() / 3.0;
    let my = ys.iter().sum::<f64>() / 3.0;
    let slope = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>() / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
    for (x, y) in xs.iter().zip(&ys) {
        let fit = my + slope * (x - mx);
        assert!((y - fit).abs() <= 0.1 * y.abs());
    }
}

#[test]
fn theorem_bound_grows_with_eta() {
    let hi = theorem_bound(&instance(4, 1.0)).unwrap().value;
    let lo = theorem_bound(&instance(4, 1e-4)).unwrap();
    assert!(hi > lo.value);
    assert!(!lo.hypotheses_hold());
}

proptest! {
    #[test]
    fn lognumber_sum_matches_floats(a in -1e6f64..1e6, b in -1e6f64..1e6) {
        let s = (LogNumber::from_f64(a) + LogNumber::from_f64(b)).to_f64();
        prop_assert!((s - (a + b)).abs() <= 1e-9 * (a.abs() + b.abs()).max(1e-300));
        let p = (LogNumber::from_f64(a) * LogNumber::from_f64(b)).to_f64();
        prop_assert!((p - a * b).abs() <= 1e-12 * (a * b).abs());
    }

    #[test]
    fn multinomial_is_permutation_invariant(mut parts in prop::collection::vec(0u64..8, 1..5)) {
        let k: u64 = parts.iter().sum();
        let a = log_multinomial(k, &parts).unwrap().ln_abs();
        parts.reverse();
        let b = log_multinomial(k, &parts).unwrap().ln_abs();
        prop_assert!((a - b).abs() < 1e-12);
        prop_assert!(a <= balanced_multinomial(k, parts.len() as u64).unwrap().ln_abs() + 1e-12);
    }

    #[test]
    fn recurrence_tracks_direct_definition(k in 0u64..40, m in 1u64..5, eta in 0.05f64..2.0, frac in 0.0f64..1.0) {
        let n = (frac * k as f64).floor() as u64;
        let a = s_recurrence(k, m, eta, n).unwrap().ln_abs();
        let b = s_direct(k, m, eta, n).unwrap().ln_abs();
        prop_assert!((a - b).abs() <= 1e-10 * a.abs().max(1.0));
    }
}

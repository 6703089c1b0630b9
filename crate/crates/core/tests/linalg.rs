use icb_core::linalg::{singular_values, symmetric_eigen, Matrix};
use icb_core::seprank::{eps_rank_certificate, spectral_rank_estimate};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Dense = Vec<Vec<f64>>;

fn random_symmetric(n: usize, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let x = rng.random_range(-1.0..1.0);
            m[(i, j)] = x;
            m[(j, i)] = x;
        }
    }
    m
}

fn dense(m: &Matrix) -> Dense {
    (0..m.rows()).map(|i| m.row(i).to_vec()).collect()
}

/// Householder QR of a square matrix: returns (Q, R).
fn householder_qr(a: &Dense) -> (Dense, Dense) {
    let n = a.len();
    let mut r = a.clone();
    let mut q: Dense = (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
    for k in 0..n.saturating_sub(1) {
        let norm: f64 = (k..n).map(|i| r[i][k] * r[i][k]).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let alpha = if r[k][k] > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = (0..n).map(|i| if i < k { 0.0 } else { r[i][k] }).collect();
        v[k] -= alpha;
        let vn: f64 = v.iter().map(|x| x * x).sum();
        if vn == 0.0 {
            continue;
        }
        for j in 0..n {
            let s: f64 = (k..n).map(|i| v[i] * r[i][j]).sum::<f64>() * 2.0 / vn;
            for i in k..n {
                r[i][j] -= s * v[i];
            }
        }
        for row in q.iter_mut() {
            let s: f64 = (k..n).map(|i| row[i] * v[i]).sum::<f64>() * 2.0 / vn;
            for i in k..n {
                row[i] -= s * v[i];
            }
        }
    }
    (q, r)
}

/// Eigenvalues of a symmetric matrix by Wilkinson-shifted QR iteration with deflation.
fn qr_eigenvalues(m: &Matrix) -> Vec<f64> {
    let mut a = dense(m);
    let scale = m.frobenius_norm().max(1e-300);
    let mut out = Vec::new();
    while !a.is_empty() {
        let n = a.len();
        if n == 1 {
            out.push(a[0][0]);
            break;
        }
        let off = (0..n - 1).map(|j| a[n - 1][j].abs()).fold(0.0, f64::max);
        if off < 1e-15 * scale {
            out.push(a[n - 1][n - 1]);
            a.pop();
            for row in a.iter_mut() {
                row.pop();
            }
            continue;
        }
        let (p, q, r) = (a[n - 2][n - 2], a[n - 2][n - 1], a[n - 1][n - 1]);
        let delta = (p - r) / 2.0;
        let sign = if delta >= 0.0 { 1.0 } else { -1.0 };
        let mu = r - sign * q * q / (delta.abs() + (delta * delta + q * q).sqrt());
        for (i, row) in a.iter_mut().enumerate() {
            row[i] -= mu;
        }
        let (qm, rm) = householder_qr(&a);
        a = (0..n).map(|i| (0..n).map(|j| (0..n).map(|k| rm[i][k] * qm[k][j]).sum::<f64>() + if i == j { mu } else { 0.0 }).collect()).collect();
    }
    out.sort_by(|x, y| y.total_cmp(x));
    out
}

/// Singular values by Householder bidiagonalization, then bisection on the
/// Golub–Kahan tridiagonal whose eigenvalues are `±σ`.
fn bidiagonal_singular_values(m: &Matrix) -> Vec<f64> {
    let mut a = dense(m);
    let (rows, cols) = m.shape();
    assert!(rows >= cols);
    let reflect_cols = |a: &mut Dense, k: usize| {
        let norm: f64 = (k..rows).map(|i| a[i][k] * a[i][k]).sum::<f64>().sqrt();
        if norm == 0.0 {
            return;
        }
        let alpha = if a[k][k] > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = (0..rows).map(|i| if i < k { 0.0 } else { a[i][k] }).collect();
        v[k] -= alpha;
        let vn: f64 = v.iter().map(|x| x * x).sum();
        if vn == 0.0 {
            return;
        }
        for j in 0..cols {
            let s: f64 = (k..rows).map(|i| v[i] * a[i][j]).sum::<f64>() * 2.0 / vn;
            for i in k..rows {
                a[i][j] -= s * v[i];
            }
        }
    };
    let reflect_rows = |a: &mut Dense, k: usize| {
        let norm: f64 = (k + 1..cols).map(|j| a[k][j] * a[k][j]).sum::<f64>().sqrt();
        if norm == 0.0 {
            return;
        }
        let alpha = if a[k][k + 1] > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = (0..cols).map(|j| if j <= k { 0.0 } else { a[k][j] }).collect();
        v[k + 1] -= alpha;
        let vn: f64 = v.iter().map(|x| x * x).sum();
        if vn == 0.0 {
            return;
        }
        for row in a.iter_mut() {
            let s: f64 = (k + 1..cols).map(|j| row[j] * v[j]).sum::<f64>() * 2.0 / vn;
            for j in k + 1..cols {
                row[j] -= s * v[j];
            }
        }
    };
    for k in 0..cols {
        reflect_cols(&mut a, k);
        if k + 2 <= cols {
            reflect_rows(&mut a, k);
        }
    }
    let mut off = Vec::with_capacity(2 * cols - 1);
    for k in 0..cols {
        off.push(a[k][k]);
        if k + 1 < cols {
            off.push(a[k][k + 1]);
        }
    }
    // eigenvalues of the zero-diagonal tridiagonal with off-diagonal `off`
    let count_below = |x: f64| -> usize {
        let mut c = 0;
        let mut q = -x;
        if q < 0.0 {
            c += 1;
        }
        for e in &off {
            let prev = if q == 0.0 { 1e-300 } else { q };
            q = -x - e * e / prev;
            if q < 0.0 {
                c += 1;
            }
        }
        c
    };
    let dim = 2 * cols;
    let bound = off.iter().map(|e| 2.0 * e.abs()).fold(0.0, f64::max) + 1.0;
    let mut sv = Vec::with_capacity(cols);
    for k in 0..cols {
        // k-th largest eigenvalue: the (dim − 1 − k)-th smallest
        let target = dim - 1 - k;
        let (mut lo, mut hi) = (-bound, bound);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if count_below(mid) > target {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        sv.push(0.5 * (lo + hi));
    }
    sv
}

#[test]
fn jacobi_matches_qr_iteration() {
    for seed in 0..5 {
        let m = random_symmetric(20, seed);
        let e = symmetric_eigen(&m).unwrap();
        let oracle = qr_eigenvalues(&m);
        for (a, b) in e.values.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
        let r = e.reconstruct();
        let resid = m.as_slice().iter().zip(r.as_slice()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(resid < 1e-9);
        let qtq = e.vectors.transpose().matmul(&e.vectors).unwrap();
        for i in 0..20 {
            for j in 0..20 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((qtq[(i, j)] - want).abs() < 1e-12);
            }
        }
    }
}

fn planted_rank(n: usize, r: usize, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u = Matrix::from_fn(n, r, |_, _| rng.random_range(-1.0..1.0));
    let v = Matrix::from_fn(r, n, |_, _| rng.random_range(-1.0..1.0));
    u.matmul(&v).unwrap()
}

#[test]
fn one_sided_jacobi_matches_bidiagonal_oracle() {
    for seed in 0..10 {
        let r = 1 + seed as usize % 15;
        let m = planted_rank(16, r, seed);
        let sv = singular_values(&m).unwrap();
        let oracle = bidiagonal_singular_values(&m);
        for (a, b) in sv.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-10 * sv[0], "{a} vs {b}");
        }
        let est = spectral_rank_estimate(&m, None).unwrap();
        let tau = est.tau;
        assert_eq!(est.rank, r);
        assert_eq!(oracle.iter().filter(|&&s| s > tau).count(), r);
    }
}

/// Exact rank of an integer matrix by fraction-free elimination.
fn bareiss_rank(m: &[Vec<i128>]) -> usize {
    let mut a = m.to_vec();
    let n = a.len();
    let cols = a[0].len();
    let mut rank = 0;
    let mut prev = 1i128;
    for c in 0..cols {
        let Some(p) = (rank..n).find(|&i| a[i][c] != 0) else { continue };
        a.swap(rank, p);
        for i in rank + 1..n {
            for j in c + 1..cols {
                a[i][j] = (a[rank][c] * a[i][j] - a[i][c] * a[rank][j]) / prev;
            }
            a[i][c] = 0;
        }
        prev = a[rank][c];
        rank += 1;
        if rank == n {
            break;
        }
    }
    rank
}

#[test]
fn certificate_never_exceeds_exact_rank() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..100 {
        let n = rng.random_range(3..=10);
        let r = rng.random_range(0..=n);
        let mut int = vec![vec![0i128; n]; n];
        for _ in 0..r {
            let v: Vec<i128> = (0..n).map(|_| rng.random_range(-3..=3)).collect();
            let c: i128 = [-2, -1, 1, 2][rng.random_range(0..4)];
            for i in 0..n {
                for j in 0..n {
                    int[i][j] += c * v[i] * v[j];
                }
            }
        }
        let exact = bareiss_rank(&int);
        let m = Matrix::from_fn(n, n, |i, j| int[i][j] as f64);
        for eps in [1e-6, 1e-2, 0.5, 3.0] {
            let c = eps_rank_certificate(&m, eps).unwrap();
            assert!(c.rank <= exact, "certified {} > exact {exact}", c.rank);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn eigen_reconstructs(seed in 0u64..100_000, n in 1usize..12) {
        let m = random_symmetric(n, seed);
        let e = symmetric_eigen(&m).unwrap();
        let r = e.reconstruct();
        let resid = m.as_slice().iter().zip(r.as_slice()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        prop_assert!(resid < 1e-9);
        prop_assert!(e.values.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn certificate_shrinks_as_eps_grows(seed in 0u64..100_000, n in 2usize..10, lo in 1e-3f64..1.0, f in 1.0f64..10.0) {
        let m = random_symmetric(n, seed);
        let a = eps_rank_certificate(&m, lo).unwrap();
        let b = eps_rank_certificate(&m, lo * f).unwrap();
        prop_assert!(b.rank <= a.rank);
    }

    #[test]
    fn singular_values_match_eigenvalues_of_symmetric_psd(seed in 0u64..100_000, n in 1usize..10) {
        let b = random_symmetric(n, seed);
        let psd = b.matmul(&b).unwrap();
        let ev = symmetric_eigen(&psd).unwrap().values;
        let sv = singular_values(&psd).unwrap();
        for (x, y) in ev.iter().zip(&sv) {
            prop_assert!((x.max(0.0) - y).abs() < 1e-10 * sv[0].max(1.0));
        }
    }
}

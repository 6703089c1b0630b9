//! Sphere moments, Hadamard-power Gram matrices and the first-layer
//! construction used for the in-context lower bound.
//!
//! `d` always names the sphere `S^d ⊂ R^{d+1}`. Monte Carlo draws are split
//! into fixed-size chunks, each with its own ChaCha stream, so estimates do
//! not depend on the number of threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::attention::{self, HyperParams, Mask, NetworkWeights};
use crate::combinatorics::ln_binomial;
use crate::error::{invalid, CoreError, Result};
use crate::linalg::{self, neumaier_sum, Matrix};
use crate::seprank::{self, UnitDiagonalCount};

const CHUNK: usize = 4096;
pub const UNIT_TOL: f64 = 1e-12;

fn chunk_rng(seed: u64, chunk: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chunk as u64);
    rng
}

fn unit_gaussian(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let n = linalg::norm(&v);
        if n > 1e-150 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// `n` points uniform on `S^d`, as rows of an `n × (d+1)` matrix.
pub fn sample_sphere(d: usize, n: usize, seed: u64) -> Matrix {
    let rows: Vec<Vec<f64>> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .flat_map_iter(|c| {
            let mut rng = chunk_rng(seed, c);
            let len = CHUNK.min(n - c * CHUNK);
            (0..len).map(move |_| unit_gaussian(&mut rng, d + 1)).collect::<Vec<_>>()
        })
        .collect();
    if n == 0 {
        return Matrix::zeros(0, d + 1);
    }
    Matrix::from_rows(&rows).expect("rows share a width")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McEstimate {
    pub estimate: f64,
    /// Sample standard error of the mean.
    pub stderr: f64,
    pub samples: usize,
}

fn summarize(values: &[f64]) -> McEstimate {
    let n = values.len();
    let mean = neumaier_sum(values.iter().copied()) / n as f64;
    let var = if n > 1 { neumaier_sum(values.iter().map(|v| (v - mean).powi(2))) / (n - 1) as f64 } else { 0.0 };
    McEstimate { estimate: mean, stderr: (var / n as f64).sqrt(), samples: n }
}

fn chunked<F>(samples: usize, seed: u64, draw: F) -> Vec<f64>
where
    F: Fn(&mut ChaCha8Rng) -> f64 + Sync,
{
    (0..samples.div_ceil(CHUNK))
        .into_par_iter()
        .flat_map_iter(|c| {
            let mut rng = chunk_rng(seed, c);
            let len = CHUNK.min(samples - c * CHUNK);
            (0..len).map(|_| draw(&mut rng)).collect::<Vec<_>>()
        })
        .collect()
}

fn check_mc(d: usize, samples: usize) -> Result<()> {
    if d == 0 || samples < 2 {
        return Err(invalid(format!("need d >= 1 and at least two samples, got d={d}, samples={samples}")));
    }
    Ok(())
}

/// `E⟨u, v⟩^{2λ}` for independent uniform `u, v ∈ S^d`, estimated through the
/// rotation-invariant reduction `E[u₁^{2λ}]`.
pub fn mc_cosine_power_expectation(d: usize, lambda: u32, samples: usize, seed: u64) -> Result<McEstimate> {
    check_mc(d, samples)?;
    let v = chunked(samples, seed, |rng| unit_gaussian(rng, d + 1)[0].powi(2 * lambda as i32));
    Ok(summarize(&v))
}

/// Same expectation from explicit pairs `(u, v)`.
pub fn mc_cosine_power_pairs(d: usize, lambda: u32, samples: usize, seed: u64) -> Result<McEstimate> {
    check_mc(d, samples)?;
    let v = chunked(samples, seed, |rng| {
        let u = unit_gaussian(rng, d + 1);
        let w = unit_gaussian(rng, d + 1);
        linalg::dot(&u, &w).powi(2 * lambda as i32)
    });
    Ok(summarize(&v))
}

/// `multiset(d, λ) = C(d + λ − 1, λ)`
pub fn multiset(d: usize, lambda: u32) -> f64 {
    if d == 0 {
        return if lambda == 0 { 1.0 } else { 0.0 };
    }
    ln_binomial(d as u64 + u64::from(lambda) - 1, u64::from(lambda)).exp().round()
}

/// `(d + 1) · multiset(d, λ)^{−1/2}`
pub fn cosine_power_bound(d: usize, lambda: u32) -> f64 {
    (d as f64 + 1.0) / multiset(d, lambda).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IntegrandCheck {
    pub max_value: f64,
    pub argmax: f64,
    /// `√(2λ / (2λ + d))`
    pub critical_point: f64,
    /// `multiset(d, λ)^{−1/2}`
    pub bound: f64,
    pub holds: bool,
}

/// `x^{2λ} (1 − x²)^{d/2}` on `grid` equally spaced points of `[0, 1]` against its bound.
pub fn integrand_bound_check(d: usize, lambda: u32, grid: usize) -> Result<IntegrandCheck> {
    if d == 0 || grid < 2 {
        return Err(invalid("need d >= 1 and at least two grid points"));
    }
    let f = |x: f64| x.powi(2 * lambda as i32) * (1.0 - x * x).max(0.0).powf(d as f64 / 2.0);
    let (mut max_value, mut argmax) = (f64::NEG_INFINITY, 0.0);
    for i in 0..grid {
        let x = i as f64 / (grid - 1) as f64;
        let v = f(x);
        if v > max_value {
            max_value = v;
            argmax = x;
        }
    }
    let lf = f64::from(lambda);
    let critical_point = (2.0 * lf / (2.0 * lf + d as f64)).sqrt();
    max_value = max_value.max(f(critical_point));
    let bound = 1.0 / multiset(d, lambda).sqrt();
    Ok(IntegrandCheck { max_value, argmax, critical_point, bound, holds: max_value <= bound })
}

/// `(B Bᵀ)^{⊙λ}` for unit rows `B`; the diagonal is exactly 1.
pub fn hadamard_power_gram(base: &Matrix, lambda: u32) -> Result<Matrix> {
    let n = base.rows();
    for i in 0..n {
        let norm = linalg::norm(base.row(i));
        if (norm - 1.0).abs() > 1e-9 {
            return Err(invalid(format!("row {i} has norm {norm}, expected 1")));
        }
    }
    Ok(Matrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { linalg::dot(base.row(i), base.row(j)).powi(lambda as i32) }))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FrobeniusCheck {
    pub mean: McEstimate,
    /// `√(d+1) · multiset(d, λ)^{3/4}`
    pub bound: f64,
    /// `mean − 3·stderr ≤ bound`
    pub holds: bool,
}

/// Mean of `‖(B Bᵀ)^{⊙λ}‖_F` over `trials` draws of `n` uniform rows on `S^d`.
pub fn frobenius_expectation_check(d: usize, lambda: u32, n: usize, trials: usize, seed: u64) -> Result<FrobeniusCheck> {
    if trials < 2 || n == 0 {
        return Err(invalid("need at least two trials and one row"));
    }
    let norms: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let b = sample_sphere(d, n, seed.wrapping_add(t as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
            hadamard_power_gram(&b, lambda).map(|m| m.frobenius_norm())
        })
        .collect::<Result<_>>()?;
    let mean = summarize(&norms);
    let bound = (d as f64 + 1.0).sqrt() * multiset(d, lambda).powf(0.75);
    Ok(FrobeniusCheck { mean, bound, holds: mean.estimate - 3.0 * mean.stderr <= bound })
}

/// `#{λ_k ≥ 1/n} ≥ (n − 1)/‖M‖_F` for a unit-diagonal Gram.
pub fn spectral_count_check(gram: &Matrix) -> Result<UnitDiagonalCount> {
    seprank::unit_diagonal_count(gram)
}

// ---------------------------------------------------------------------------
// first-layer construction

/// A one-layer network whose output on the template pair `(j₁, j₂ + n)` is
/// `(Σ_h O_h V_h) u` with `u` given entrywise by [`expected_u`].
#[derive(Debug, Clone)]
pub struct Layer1Construction {
    /// `n × d`, `d = (d_x − H)/2`
    pub a: Matrix,
    pub weights: NetworkWeights,
    /// `2n + 1` templates in `R^{d_x}`; 0-based index `i` is template `i + 1`.
    pub templates: Vec<Vec<f64>>,
}

#[derive(Clone, Copy)]
enum Slot {
    First,
    Second,
    Constant,
}

fn slot(alpha: usize, da: usize) -> Slot {
    let r = (alpha - 1) % da;
    if r == da - 1 {
        Slot::Constant
    } else if 2 * r < da - 1 {
        Slot::First
    } else {
        Slot::Second
    }
}

/// `φ(α) = ⌊(α−1)/d_a⌋ (d_a − 1) + ((α−1) mod d_a) + 1`, 1-based.
pub fn phi(alpha: usize, da: usize) -> usize {
    (alpha - 1) / da * (da - 1) + (alpha - 1) % da + 1
}

/// Offset from a second-half slot back to the matching first-half slot.
fn half_shift(da: usize) -> usize {
    (da - 1).div_ceil(2)
}

/// Entry of `A` feeding coordinate `alpha` (1-based) from the given half, if any.
fn a_entry(a: &Matrix, row: usize, alpha: usize, da: usize, second: bool) -> Option<f64> {
    let d = a.cols();
    let src = if second {
        let s = half_shift(da);
        if alpha <= s {
            return None;
        }
        alpha - s
    } else {
        alpha
    };
    let p = phi(src, da);
    (p <= d).then(|| a[(row, p - 1)])
}

/// Builds templates, all-ones embeddings and the one-hot key/query weights;
/// value and output weights are seeded uniform draws in `[-1, 1]`.
pub fn lower_bound_layer1_construction(a: &Matrix, width: usize, heads: usize, seq_len: usize, seed: u64) -> Result<Layer1Construction> {
    if heads == 0 || !width.is_multiple_of(heads) || width < heads || !(width - heads).is_multiple_of(2) {
        return Err(invalid(format!("need H | d_x and d_x − H even; got d_x={width}, H={heads}")));
    }
    let d = (width - heads) / 2;
    if a.cols() != d {
        return Err(CoreError::Shape(format!("A must have d = {d} columns, got {}", a.cols())));
    }
    let n = a.rows();
    let da = width / heads;
    let nf = seq_len as f64;
    let template = |i: usize| -> Vec<f64> {
        (1..=width)
            .map(|alpha| match slot(alpha, da) {
                Slot::Constant => 1.0,
                Slot::First if i <= n => a_entry(a, i - 1, alpha, da, false).map_or(0.0, |v| v / nf),
                Slot::Second if i > n && i <= 2 * n => a_entry(a, i - n - 1, alpha, da, true).map_or(0.0, |v| v / nf),
                _ => 0.0,
            })
            .collect()
    };
    let templates = (1..=2 * n + 1).map(template).collect();
    let hyper = HyperParams::new(1, heads, width, seq_len, 1, 0.0)?;
    let mut weights = NetworkWeights::zeros(hyper)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for h in &mut weights.layers[0] {
        h.key[(0, da - 1)] = 1.0;
        h.query[(0, da - 1)] = 1.0;
        for x in h.value.as_mut_slice().iter_mut().chain(h.output.as_mut_slice()) {
            *x = rng.random_range(-1.0..=1.0);
        }
    }
    weights.vocab = Matrix::from_fn(width, 1, |_, _| 1.0);
    Ok(Layer1Construction { a: a.clone(), weights, templates })
}

/// The four-case vector `u` for template pair `(j₁, j₂ + n)`, 1-based `j`'s.
pub fn expected_u(c: &Layer1Construction, j1: usize, j2: usize) -> Vec<f64> {
    let h = &c.weights.hyper;
    let da = h.head_dim;
    (1..=h.width)
        .map(|alpha| match slot(alpha, da) {
            Slot::First => a_entry(&c.a, j1 - 1, alpha, da, false).unwrap_or(0.0),
            Slot::Second => a_entry(&c.a, j2 - 1, alpha, da, true).unwrap_or(0.0),
            Slot::Constant => 2.0 * h.seq_len as f64,
        })
        .collect()
}

/// `Σ_h O_h V_h`
pub fn summed_output_value(c: &Layer1Construction) -> Result<Matrix> {
    let w = c.weights.hyper.width;
    let mut acc = Matrix::zeros(w, w);
    for h in &c.weights.layers[0] {
        let ov = h.output.matmul(&h.value)?;
        for (x, y) in acc.as_mut_slice().iter_mut().zip(ov.as_slice()) {
            *x += y;
        }
    }
    Ok(acc)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Layer1Verification {
    pub pairs: usize,
    /// Max over pairs, positions and coordinates of `|layer output − (ΣOV) u|`.
    pub max_deviation: f64,
}

/// Runs the network with `S1` lookups marked by template `j₁` and `S2` lookups
/// by template `j₂ + n`, for all `j₁, j₂ ∈ 1..=n`.
pub fn verify_layer1_construction(c: &Layer1Construction) -> Result<Layer1Verification> {
    let n = c.a.rows();
    let nlen = c.weights.hyper.seq_len;
    let ov = summed_output_value(c)?;
    let seq = vec![0usize; nlen];
    let mut max_deviation = 0.0_f64;
    for j1 in 1..=n {
        for j2 in 1..=n {
            let inputs = attention::in_context_inputs(&c.weights, &seq, &seq, &c.templates[j1 - 1], &c.templates[j2 + n - 1])?;
            let out = attention::first_layer_forward(&c.weights, &inputs, Mask::Full)?;
            let want = ov.matvec(&expected_u(c, j1, j2));
            for y in &out {
                for (a, b) in y.iter().zip(&want) {
                    max_deviation = max_deviation.max((a - b).abs());
                }
            }
        }
    }
    Ok(Layer1Verification { pairs: n * n, max_deviation })
}

//! Grid matricizations of the association scalar and rank diagnostics.
//!
//! Rows index `a`-templates and columns `b`-templates, so the matrix rank
//! lower-bounds the separation rank of `Z_y(a, b)` with respect to `(a, b)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attention::{self, HyperParams, Mask, Mode, NetworkWeights, Readout};
use crate::error::{invalid, CoreError, Result};
use crate::linalg::{self, Matrix};

pub const MAX_GRID: usize = 512;
pub const DEFAULT_TAU_REL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateKind {
    /// Uniform on the unit sphere.
    #[default]
    Sphere,
    /// Uniform on `[-1, 1]^d`.
    Cube,
}

pub fn sample_templates(count: usize, dim: usize, kind: TemplateKind, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| match kind {
            TemplateKind::Cube => (0..dim).map(|_| rng.random_range(-1.0..=1.0)).collect(),
            TemplateKind::Sphere => loop {
                let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
                let n = linalg::norm(&v);
                if n > 1e-12 {
                    break v.into_iter().map(|x| x / n).collect();
                }
            },
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct GridSpec {
    pub a_templates: Vec<Vec<f64>>,
    pub b_templates: Vec<Vec<f64>>,
    pub s1: Vec<usize>,
    pub s2: Vec<usize>,
    pub mode: Mode,
    pub readout: Readout,
    pub mask: Mask,
}

/// `M[i][j] = Z_y(a_i, b_j)`, rows evaluated in parallel.
pub fn build_grid_matrix(weights: &NetworkWeights, spec: &GridSpec) -> Result<Matrix> {
    let (za, zb) = (spec.a_templates.len(), spec.b_templates.len());
    if za > MAX_GRID || zb > MAX_GRID {
        return Err(CoreError::TooLarge(format!("grid {za}x{zb} exceeds {MAX_GRID} templates per side")));
    }
    if za == 0 || zb == 0 {
        return Err(invalid("grid needs at least one template on each side"));
    }
    let rows: Vec<Vec<f64>> = spec
        .a_templates
        .par_iter()
        .map(|a| -> Result<Vec<f64>> {
            match spec.mode {
                Mode::InContext => spec
                    .b_templates
                    .iter()
                    .map(|b| attention::associated_eval(weights, &spec.s1, &spec.s2, a, b, Mode::InContext, spec.readout, spec.mask))
                    .collect(),
                Mode::Sequential => {
                    // the SGD step depends on `a` only
                    let updated = attention::sequential_update(weights, &spec.s1, a, spec.mask)?;
                    spec.b_templates.iter().map(|b| attention::sequential_readout(&updated, &spec.s2, b, spec.readout, spec.mask)).collect()
                }
            }
        })
        .collect::<Result<_>>()?;
    let m = Matrix::from_rows(&rows)?;
    if !m.all_finite() {
        return Err(CoreError::NonFinite("grid matrix overflowed".into()));
    }
    Ok(m)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectralRank {
    pub rank: usize,
    pub tau: f64,
    /// Descending.
    pub singular_values: Vec<f64>,
}

/// Counts singular values strictly above `tau` (default `1e-8 · σ₁`).
pub fn spectral_rank_estimate(m: &Matrix, tau: Option<f64>) -> Result<SpectralRank> {
    let singular_values = linalg::singular_values(m)?;
    let sigma1 = singular_values.first().copied().unwrap_or(0.0);
    let tau = tau.unwrap_or(DEFAULT_TAU_REL * sigma1);
    if !(tau >= 0.0) {
        return Err(invalid(format!("tau must be non-negative, got {tau}")));
    }
    let rank = if sigma1 == 0.0 { 0 } else { singular_values.iter().filter(|&&s| s > tau).count() };
    Ok(SpectralRank { rank, tau, singular_values })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RankCertificate {
    /// `k` such that the `certified_eps`-rank is at least `k`.
    pub rank: usize,
    pub eps: f64,
    /// `eps / (2n)`
    pub certified_eps: f64,
}

/// For symmetric `m`: with `k` eigenvalues `≥ eps`, every entrywise
/// `eps/(2n)`-perturbation keeps rank at least `k`.
pub fn eps_rank_certificate(m: &Matrix, eps: f64) -> Result<RankCertificate> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(invalid(format!("eps must be positive, got {eps}")));
    }
    let e = linalg::symmetric_eigen(m)?;
    let rank = e.values.iter().filter(|&&l| l >= eps).count();
    Ok(RankCertificate { rank, eps, certified_eps: eps / (2.0 * m.rows() as f64) })
}

/// `[[0, m], [mᵀ, 0]]`; its eigenvalues are `±σ_i(m)` plus zeros.
pub fn symmetric_dilation(m: &Matrix) -> Matrix {
    let (r, c) = m.shape();
    Matrix::from_fn(r + c, r + c, |i, j| match (i < r, j < r) {
        (true, false) => m[(i, j - r)],
        (false, true) => m[(j, i - r)],
        _ => 0.0,
    })
}

/// Certificate for a general matrix through its symmetric dilation `D`.
/// `rank(D') = 2·rank(m')` for any perturbation `m'` lifted into `D`, so the
/// dilation's certificate `k` gives `certified_eps`-rank of `m` at least `⌈k/2⌉`.
pub fn dilation_certificate(m: &Matrix, eps: f64) -> Result<RankCertificate> {
    let c = eps_rank_certificate(&symmetric_dilation(m), eps)?;
    Ok(RankCertificate { rank: c.rank.div_ceil(2), ..c })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UnitDiagonalCount {
    /// `#{λ ≥ 1/n}`
    pub count: usize,
    /// `(n − 1) / ‖m‖_F`
    pub floor: f64,
    pub holds: bool,
}

/// Eigenvalue count of a symmetric matrix with unit diagonal against the trace floor.
pub fn unit_diagonal_count(m: &Matrix) -> Result<UnitDiagonalCount> {
    let n = m.rows();
    if n == 0 {
        return Err(invalid("empty matrix"));
    }
    if (0..n).any(|i| (m[(i, i)] - 1.0).abs() > 1e-12) {
        return Err(invalid("diagonal must be 1"));
    }
    let e = linalg::symmetric_eigen(m)?;
    let count = e.values.iter().filter(|&&l| l >= 1.0 / n as f64).count();
    let floor = (n as f64 - 1.0) / m.frobenius_norm();
    Ok(UnitDiagonalCount { count, floor, holds: count as f64 >= floor })
}

// ---------------------------------------------------------------------------
// depth bounds

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InContextBound {
    /// `L · d_x`
    pub value: f64,
    /// Set when `L ≤ log₃ d_x`, where depth rather than width limits the rank.
    pub depth_limited: bool,
}

pub fn bound_in_context(layers: usize, width: usize, heads: usize) -> Result<InContextBound> {
    if layers == 0 || width == 0 || heads == 0 || !width.is_multiple_of(heads) {
        return Err(invalid(format!("need positive L, d_x, H with H | d_x; got L={layers} d_x={width} H={heads}")));
    }
    Ok(InContextBound { value: (layers * width) as f64, depth_limited: layers as f64 <= (width as f64).ln() / 3f64.ln() })
}

/// `(L + ½ log₃ η) · d_x`
pub fn bound_sequential(layers: usize, width: usize, eta: f64) -> Result<f64> {
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(invalid(format!("eta must be positive and finite, got {eta}")));
    }
    Ok((layers as f64 + 0.5 * eta.ln() / 3f64.ln()) * width as f64)
}

/// `½ log₃(1/η)`: the depth lost to the learning rate.
pub fn depth_deficit(eta: f64) -> Result<f64> {
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(invalid(format!("eta must be positive and finite, got {eta}")));
    }
    Ok(0.5 * (1.0 / eta).ln() / 3f64.ln())
}

// ---------------------------------------------------------------------------
// gap experiment

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapConfig {
    pub layers: usize,
    pub width: usize,
    pub heads: usize,
    pub seq_len: usize,
    pub vocab: usize,
    pub etas: Vec<f64>,
    pub grid: usize,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub templates: TemplateKind,
    pub tau_rel: f64,
    pub seed: u64,
}

impl Default for GapConfig {
    /// The toy configuration: `L = 2, d_x = 4, H = 2, N = 2, V = 8, Z = 24`.
    fn default() -> Self {
        Self {
            layers: 2,
            width: 4,
            heads: 2,
            seq_len: 2,
            vocab: 8,
            etas: vec![1e-1, 1e-2, 1e-3, 1e-4],
            grid: 24,
            lambda_min: 0.3,
            lambda_max: 0.7,
            templates: TemplateKind::Sphere,
            tau_rel: DEFAULT_TAU_REL,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapRow {
    pub mode: Mode,
    pub layers: usize,
    pub width: usize,
    pub heads: usize,
    pub seq_len: usize,
    pub eta: f64,
    pub grid: usize,
    pub tau: f64,
    pub spectral_rank: usize,
    pub cert_rank: usize,
    pub top_singular_values: Vec<f64>,
    pub seed: u64,
}

/// One row per `(η, mode)`. Weights, sequences and templates depend on the
/// seed only, so rows for different `η` share everything but the step size.
pub fn run_gap_experiment(cfg: &GapConfig) -> Result<Vec<GapRow>> {
    let mut rows = Vec::with_capacity(2 * cfg.etas.len());
    let hyper0 = HyperParams::new(cfg.layers, cfg.heads, cfg.width, cfg.seq_len, cfg.vocab, 0.0)?;
    let base = NetworkWeights::random(hyper0, cfg.lambda_min, cfg.lambda_max, cfg.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_0f_5e9);
    let s1: Vec<usize> = (0..cfg.seq_len).map(|_| rng.random_range(0..cfg.vocab)).collect();
    let s2: Vec<usize> = (0..cfg.seq_len).map(|_| rng.random_range(0..cfg.vocab)).collect();
    let a_templates = sample_templates(cfg.grid, cfg.width, cfg.templates, rng.random());
    let b_templates = sample_templates(cfg.grid, cfg.width, cfg.templates, rng.random());
    for &eta in &cfg.etas {
        let mut weights = base.clone();
        weights.hyper.eta = eta;
        for mode in [Mode::InContext, Mode::Sequential] {
            let spec = GridSpec {
                a_templates: a_templates.clone(),
                b_templates: b_templates.clone(),
                s1: s1.clone(),
                s2: s2.clone(),
                mode,
                readout: Readout::last(&weights.hyper),
                mask: Mask::Full,
            };
            let m = build_grid_matrix(&weights, &spec)?;
            let sr = spectral_rank_estimate(&m, None)?;
            let tau = cfg.tau_rel * sr.singular_values.first().copied().unwrap_or(0.0);
            let sr = spectral_rank_estimate(&m, Some(tau))?;
            let cert_rank = if tau > 0.0 { dilation_certificate(&m, tau)?.rank } else { 0 };
            rows.push(GapRow {
                mode,
                layers: cfg.layers,
                width: cfg.width,
                heads: cfg.heads,
                seq_len: cfg.seq_len,
                eta,
                grid: cfg.grid,
                tau,
                spectral_rank: sr.rank,
                cert_rank,
                top_singular_values: sr.singular_values.iter().take(8).copied().collect(),
                seed: cfg.seed,
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_certifies_full_rank() {
        let c = eps_rank_certificate(&Matrix::identity(7), 1.0).unwrap();
        assert_eq!(c.rank, 7);
        assert!((c.certified_eps - 1.0 / 14.0).abs() < 1e-15);
    }

    #[test]
    fn rank_one_outer_product() {
        let mut m = Matrix::zeros(5, 5);
        m.add_outer(1.0, &[1.0, 2.0, 3.0, 4.0, 5.0], &[1.0, -1.0, 2.0, 0.5, 3.0]);
        assert_eq!(spectral_rank_estimate(&m, None).unwrap().rank, 1);
    }

    #[test]
    fn zero_matrix_has_rank_zero() {
        assert_eq!(spectral_rank_estimate(&Matrix::zeros(3, 3), None).unwrap().rank, 0);
    }

    #[test]
    fn certificate_refuses_asymmetric_input() {
        let m = Matrix::from_rows(&[vec![1.0, 1.0], vec![0.0, 1.0]]).unwrap();
        assert!(matches!(eps_rank_certificate(&m, 0.5), Err(CoreError::NotSymmetric)));
    }

    #[test]
    fn depth_deficit_values() {
        assert!((depth_deficit(1e-6).unwrap() - 6.2877).abs() < 1e-3);
        assert!((depth_deficit(1e-4).unwrap() - 4.1918).abs() < 1e-3);
        assert!(depth_deficit(0.0).is_err());
    }

    #[test]
    fn bound_examples() {
        assert!((bound_sequential(12, 768, 1e-6).unwrap() - 4387.0).abs() < 1.0);
        let ic = bound_in_context(12, 768, 12).unwrap();
        assert_eq!(ic.value, 9216.0);
        assert!(!ic.depth_limited);
        assert!(bound_in_context(2, 768, 12).unwrap().depth_limited);
        assert_eq!(bound_sequential(7, 64, 1.0).unwrap(), bound_in_context(7, 64, 1).unwrap().value);
    }

    #[test]
    fn dilation_spectrum_is_plus_minus_singular_values() {
        let m = Matrix::from_rows(&[vec![3.0, 0.0], vec![0.0, 2.0], vec![0.0, 0.0]]).unwrap();
        let e = linalg::symmetric_eigen(&symmetric_dilation(&m)).unwrap();
        let expect = [3.0, 2.0, 0.0, -2.0, -3.0];
        for (a, b) in e.values.iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn oversized_grid_is_rejected() {
        let hp = HyperParams::new(1, 1, 2, 2, 4, 0.1).unwrap();
        let w = NetworkWeights::random(hp, 0.1, 0.5, 0).unwrap();
        let spec = GridSpec {
            a_templates: vec![vec![1.0, 0.0]; MAX_GRID + 1],
            b_templates: vec![vec![1.0, 0.0]],
            s1: vec![0, 1],
            s2: vec![2, 3],
            mode: Mode::InContext,
            readout: Readout::last(&hp),
            mask: Mask::Full,
        };
        assert!(matches!(build_grid_matrix(&w, &spec), Err(CoreError::TooLarge(_))));
    }
}

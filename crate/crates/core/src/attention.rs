//! Simplified multi-head self-attention (no softmax, no nonlinearity) with
//! tied input/output embeddings, a hand-written reverse pass, and the two
//! representations compared throughout the crate:
//!
//! * in-context: one forward pass over the concatenation `S1 ++ S2`;
//! * sequential: one SGD step on the language-model loss of `S1`, then a
//!   forward pass over `S2` alone.
//!
//! The association layer multiplies each embedding lookup elementwise by a
//! vector `a` (lookups made by `S1` tokens) or `b` (lookups made by `S2`
//! tokens). The output projection `(M^V)ᵀ y` inside the loss is not a lookup
//! and is never marked.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, CoreError, Result};
use crate::linalg::{dot, neumaier_sum, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    /// L
    pub layers: usize,
    /// H
    pub heads: usize,
    /// d_x
    pub width: usize,
    /// d_a = d_x / H
    pub head_dim: usize,
    /// N, the length of each of S1 and S2
    pub seq_len: usize,
    /// V
    pub vocab: usize,
    /// SGD learning rate
    pub eta: f64,
}

impl HyperParams {
    /// Derives `head_dim` from `width / heads`.
    pub fn new(layers: usize, heads: usize, width: usize, seq_len: usize, vocab: usize, eta: f64) -> Result<Self> {
        if heads == 0 || !width.is_multiple_of(heads) {
            return Err(invalid(format!("heads ({heads}) must divide width ({width})")));
        }
        let h = Self { layers, heads, width, head_dim: width / heads, seq_len, vocab, eta };
        h.validate()?;
        Ok(h)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 || self.heads == 0 || self.width == 0 || self.seq_len == 0 || self.vocab == 0 {
            return Err(invalid("layers, heads, width, seq_len and vocab must be positive"));
        }
        if self.head_dim * self.heads != self.width {
            return Err(invalid(format!("head_dim {} times heads {} must equal width {}", self.head_dim, self.heads, self.width)));
        }
        if !self.eta.is_finite() || self.eta < 0.0 {
            return Err(invalid(format!("eta must be finite and non-negative, got {}", self.eta)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadWeights {
    /// d_a × d_x
    pub key: Matrix,
    /// d_a × d_x
    pub query: Matrix,
    /// d_a × d_x
    pub value: Matrix,
    /// d_x × d_a
    pub output: Matrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkWeights {
    pub hyper: HyperParams,
    /// `layers[l][h]`
    pub layers: Vec<Vec<HeadWeights>>,
    /// M^V, d_x × V; column `w` embeds token `w`.
    pub vocab: Matrix,
}

impl NetworkWeights {
    pub fn zeros(hyper: HyperParams) -> Result<Self> {
        hyper.validate()?;
        let (dx, da) = (hyper.width, hyper.head_dim);
        let head = HeadWeights { key: Matrix::zeros(da, dx), query: Matrix::zeros(da, dx), value: Matrix::zeros(da, dx), output: Matrix::zeros(dx, da) };
        Ok(Self { hyper, layers: vec![vec![head; hyper.heads]; hyper.layers], vocab: Matrix::zeros(dx, hyper.vocab) })
    }

    /// Every entry drawn with magnitude uniform in `[lambda_min, lambda_max]` and a random sign.
    pub fn random(hyper: HyperParams, lambda_min: f64, lambda_max: f64, seed: u64) -> Result<Self> {
        if !(0.0 <= lambda_min && lambda_min <= lambda_max && lambda_max.is_finite()) {
            return Err(invalid(format!("need 0 <= lambda_min <= lambda_max, got [{lambda_min}, {lambda_max}]")));
        }
        let mut w = Self::zeros(hyper)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for t in w.tensors_mut() {
            for x in t.as_mut_slice() {
                let mag = if lambda_max > lambda_min { rng.random_range(lambda_min..=lambda_max) } else { lambda_min };
                *x = if rng.random::<bool>() { mag } else { -mag };
            }
        }
        Ok(w)
    }

    /// Tensors in declaration order: per layer, per head `K, Q, V, O`; then `M^V`.
    pub fn tensors(&self) -> Vec<&Matrix> {
        let mut out = Vec::with_capacity(self.layers.len() * self.hyper.heads * 4 + 1);
        for layer in &self.layers {
            for h in layer {
                out.extend([&h.key, &h.query, &h.value, &h.output]);
            }
        }
        out.push(&self.vocab);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            for h in layer {
                out.push(&mut h.key);
                out.push(&mut h.query);
                out.push(&mut h.value);
                out.push(&mut h.output);
            }
        }
        out.push(&mut self.vocab);
        out
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.as_slice().len()).sum()
    }

    pub fn flat_params(&self) -> Vec<f64> {
        self.tensors().iter().flat_map(|t| t.as_slice().iter().copied()).collect()
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(CoreError::Shape(format!("expected {} parameters, got {}", self.param_count(), flat.len())));
        }
        let mut off = 0;
        for t in self.tensors_mut() {
            let n = t.as_slice().len();
            t.as_mut_slice().copy_from_slice(&flat[off..off + n]);
            off += n;
        }
        Ok(())
    }

    /// `self - step · grad`, tensor by tensor.
    pub fn sgd_update(&self, grad: &NetworkWeights, step: f64) -> NetworkWeights {
        let mut out = self.clone();
        for (dst, g) in out.tensors_mut().into_iter().zip(grad.tensors()) {
            for (x, gx) in dst.as_mut_slice().iter_mut().zip(g.as_slice()) {
                *x -= step * gx;
            }
        }
        out
    }

    /// Binary layout: `ICBW1`, six little-endian u32 (L, H, d_x, d_a, N, V),
    /// η as little-endian f64, then every tensor row-major as little-endian f64.
    pub fn to_bytes(&self) -> Vec<u8> {
        let h = &self.hyper;
        let mut out = Vec::with_capacity(5 + 24 + 8 + 8 * self.param_count());
        out.extend_from_slice(WEIGHTS_MAGIC);
        for v in [h.layers, h.heads, h.width, h.head_dim, h.seq_len, h.vocab] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        out.extend_from_slice(&h.eta.to_le_bytes());
        for t in self.tensors() {
            for x in t.as_slice() {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let rest = bytes.strip_prefix(WEIGHTS_MAGIC.as_slice()).ok_or_else(|| CoreError::Format("bad magic".into()))?;
        if rest.len() < 32 {
            return Err(CoreError::Format("truncated header".into()));
        }
        let u = |i: usize| u32::from_le_bytes(rest[4 * i..4 * i + 4].try_into().unwrap()) as usize;
        let eta = f64::from_le_bytes(rest[24..32].try_into().unwrap());
        let hyper = HyperParams { layers: u(0), heads: u(1), width: u(2), head_dim: u(3), seq_len: u(4), vocab: u(5), eta };
        hyper.validate().map_err(|e| CoreError::Format(e.to_string()))?;
        let mut w = Self::zeros(hyper)?;
        let body = &rest[32..];
        if body.len() != 8 * w.param_count() {
            return Err(CoreError::Format(format!("expected {} tensor bytes, found {}", 8 * w.param_count(), body.len())));
        }
        let flat: Vec<f64> = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        w.set_flat_params(&flat)?;
        Ok(w)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("weights serialize")
    }
}

pub const WEIGHTS_MAGIC: &[u8; 5] = b"ICBW1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Mask {
    #[default]
    Full,
    Causal,
}

impl Mask {
    fn allows(self, i: usize, j: usize) -> bool {
        match self {
            Mask::Full => true,
            Mask::Causal => j <= i,
        }
    }
}

/// Which scalar of the final-layer output a representation reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Readout {
    /// Position within `S2`; the in-context pass reads absolute position `N + position`.
    pub position: usize,
    pub coordinate: usize,
}

impl Readout {
    /// Last `S2` position, first coordinate.
    pub fn last(hyper: &HyperParams) -> Self {
        Self { position: hyper.seq_len - 1, coordinate: 0 }
    }

    fn check(&self, hyper: &HyperParams) -> Result<()> {
        if self.position >= hyper.seq_len || self.coordinate >= hyper.width {
            return Err(invalid(format!("readout ({}, {}) outside {} positions x {} coordinates", self.position, self.coordinate, hyper.seq_len, hyper.width)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    InContext,
    Sequential,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::InContext => "in_context",
            Mode::Sequential => "sequential",
        }
    }
}

fn check_sequence(hyper: &HyperParams, seq: &[usize]) -> Result<()> {
    if seq.len() != hyper.seq_len {
        return Err(invalid(format!("sequence has {} tokens, expected {}", seq.len(), hyper.seq_len)));
    }
    if let Some(&token) = seq.iter().find(|&&t| t >= hyper.vocab) {
        return Err(CoreError::TokenOutOfRange { token, vocab: hyper.vocab });
    }
    Ok(())
}

fn check_mark(hyper: &HyperParams, mark: &[f64]) -> Result<()> {
    if mark.len() != hyper.width {
        return Err(CoreError::Shape(format!("association vector has {} entries, expected {}", mark.len(), hyper.width)));
    }
    Ok(())
}

/// Column `token` of `M^V`.
pub fn embed(weights: &NetworkWeights, token: usize) -> Result<Vec<f64>> {
    if token >= weights.hyper.vocab {
        return Err(CoreError::TokenOutOfRange { token, vocab: weights.hyper.vocab });
    }
    Ok(weights.vocab.column(token))
}

fn embed_marked(vocab: &Matrix, seq: &[usize], mark: Option<&[f64]>) -> Vec<Vec<f64>> {
    seq.iter()
        .map(|&w| {
            let mut x = vocab.column(w);
            if let Some(m) = mark {
                x.iter_mut().zip(m).for_each(|(xi, mi)| *xi *= mi);
            }
            x
        })
        .collect()
}

// ---------------------------------------------------------------------------
// forward

struct HeadCache {
    q: Vec<Vec<f64>>,
    k: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    c: Vec<Vec<f64>>,
    s: Vec<Vec<f64>>,
}

struct LayerCache {
    input: Vec<Vec<f64>>,
    heads: Vec<HeadCache>,
}

fn layer_forward(heads: &[HeadWeights], g: &[Vec<f64>], mask: Mask) -> (Vec<Vec<f64>>, Vec<HeadCache>) {
    let n = g.len();
    let mut caches = Vec::with_capacity(heads.len());
    let mut contrib: Vec<Vec<Vec<f64>>> = Vec::with_capacity(heads.len());
    for hw in heads {
        let q: Vec<Vec<f64>> = g.iter().map(|x| hw.query.matvec(x)).collect();
        let k: Vec<Vec<f64>> = g.iter().map(|x| hw.key.matvec(x)).collect();
        let v: Vec<Vec<f64>> = g.iter().map(|x| hw.value.matvec(x)).collect();
        let s: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| if mask.allows(i, j) { dot(&q[i], &k[j]) } else { 0.0 }).collect()).collect();
        let da = hw.key.rows();
        let c: Vec<Vec<f64>> = (0..n).map(|i| (0..da).map(|r| neumaier_sum((0..n).map(|j| s[i][j] * v[j][r]))).collect()).collect();
        contrib.push(c.iter().map(|ci| hw.output.matvec(ci)).collect());
        caches.push(HeadCache { q, k, v, c, s });
    }
    let dx = g.first().map_or(0, Vec::len);
    let out = (0..n).map(|i| (0..dx).map(|p| neumaier_sum(contrib.iter().map(|h| h[i][p]))).collect()).collect();
    (out, caches)
}

fn forward_cached(weights: &NetworkWeights, inputs: Vec<Vec<f64>>, mask: Mask) -> (Vec<Vec<f64>>, Vec<LayerCache>) {
    let mut g = inputs;
    let mut caches = Vec::with_capacity(weights.layers.len());
    for layer in &weights.layers {
        let (next, heads) = layer_forward(layer, &g, mask);
        caches.push(LayerCache { input: g, heads });
        g = next;
    }
    (g, caches)
}

/// Final-layer outputs for arbitrary input vectors (one per position).
pub fn forward_inputs(weights: &NetworkWeights, inputs: &[Vec<f64>], mask: Mask) -> Result<Vec<Vec<f64>>> {
    if let Some(bad) = inputs.iter().find(|x| x.len() != weights.hyper.width) {
        return Err(CoreError::Shape(format!("input of length {}, expected {}", bad.len(), weights.hyper.width)));
    }
    Ok(forward_cached(weights, inputs.to_vec(), mask).0)
}

/// Output of the first layer only.
pub fn first_layer_forward(weights: &NetworkWeights, inputs: &[Vec<f64>], mask: Mask) -> Result<Vec<Vec<f64>>> {
    if let Some(bad) = inputs.iter().find(|x| x.len() != weights.hyper.width) {
        return Err(CoreError::Shape(format!("input of length {}, expected {}", bad.len(), weights.hyper.width)));
    }
    Ok(layer_forward(&weights.layers[0], inputs, mask).0)
}

/// Final-layer outputs for a token sequence of any length.
pub fn forward_tokens(weights: &NetworkWeights, tokens: &[usize], mask: Mask) -> Result<Vec<Vec<f64>>> {
    if let Some(&token) = tokens.iter().find(|&&t| t >= weights.hyper.vocab) {
        return Err(CoreError::TokenOutOfRange { token, vocab: weights.hyper.vocab });
    }
    Ok(forward_cached(weights, embed_marked(&weights.vocab, tokens, None), mask).0)
}

// ---------------------------------------------------------------------------
// loss and reverse pass

fn log_softmax_terms(vocab: &Matrix, y: &[f64], target: usize) -> (f64, Vec<f64>) {
    let logits = vocab.matvec_t(y);
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let z = neumaier_sum(logits.iter().map(|l| (l - max).exp()));
    let lse = max + z.ln();
    let probs = logits.iter().map(|l| (l - lse).exp()).collect();
    (lse - logits[target], probs)
}

fn loss_from_outputs(vocab: &Matrix, outputs: &[Vec<f64>], seq: &[usize]) -> f64 {
    neumaier_sum((0..seq.len().saturating_sub(1)).map(|j| log_softmax_terms(vocab, &outputs[j], seq[j + 1]).0))
}

/// `−Σ_{j<N} log softmax((M^V)ᵀ y^j)_{w^{j+1}}` on a single sequence.
pub fn loss(weights: &NetworkWeights, seq: &[usize], mask: Mask) -> Result<f64> {
    loss_marked(weights, seq, None, mask)
}

fn loss_marked(weights: &NetworkWeights, seq: &[usize], mark: Option<&[f64]>, mask: Mask) -> Result<f64> {
    check_sequence(&weights.hyper, seq)?;
    if let Some(m) = mark {
        check_mark(&weights.hyper, m)?;
    }
    let (out, _) = forward_cached(weights, embed_marked(&weights.vocab, seq, mark), mask);
    Ok(loss_from_outputs(&weights.vocab, &out, seq))
}

fn add_outer_rows(dst: &mut Matrix, left: &[Vec<f64>], right: &[Vec<f64>]) {
    for (u, v) in left.iter().zip(right) {
        dst.add_outer(1.0, u, v);
    }
}

fn layer_backward(heads: &[HeadWeights], cache: &LayerCache, dy: &[Vec<f64>], mask: Mask, grads: &mut [HeadWeights]) -> Vec<Vec<f64>> {
    let g = &cache.input;
    let n = g.len();
    let dx = g.first().map_or(0, Vec::len);
    let mut dg_parts: Vec<Vec<Vec<f64>>> = vec![Vec::new(); n];
    for ((hw, hc), gr) in heads.iter().zip(&cache.heads).zip(grads.iter_mut()) {
        let dc: Vec<Vec<f64>> = dy.iter().map(|d| hw.output.matvec_t(d)).collect();
        add_outer_rows(&mut gr.output, dy, &hc.c);
        let da = dc.first().map_or(0, Vec::len);
        let ds: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| if mask.allows(i, j) { dot(&dc[i], &hc.v[j]) } else { 0.0 }).collect()).collect();
        let dv: Vec<Vec<f64>> = (0..n).map(|j| (0..da).map(|r| neumaier_sum((0..n).map(|i| hc.s[i][j] * dc[i][r]))).collect()).collect();
        let dq: Vec<Vec<f64>> = (0..n).map(|i| (0..da).map(|r| neumaier_sum((0..n).map(|j| ds[i][j] * hc.k[j][r]))).collect()).collect();
        let dk: Vec<Vec<f64>> = (0..n).map(|j| (0..da).map(|r| neumaier_sum((0..n).map(|i| ds[i][j] * hc.q[i][r]))).collect()).collect();
        add_outer_rows(&mut gr.query, &dq, g);
        add_outer_rows(&mut gr.key, &dk, g);
        add_outer_rows(&mut gr.value, &dv, g);
        for i in 0..n {
            dg_parts[i].push(hw.query.matvec_t(&dq[i]));
            dg_parts[i].push(hw.key.matvec_t(&dk[i]));
            dg_parts[i].push(hw.value.matvec_t(&dv[i]));
        }
    }
    dg_parts.iter().map(|parts| (0..dx).map(|p| neumaier_sum(parts.iter().map(|v| v[p]))).collect()).collect()
}

/// Loss and its gradient with respect to every weight, including `M^V`.
pub fn loss_gradient(weights: &NetworkWeights, seq: &[usize], mask: Mask) -> Result<(f64, NetworkWeights)> {
    loss_gradient_marked(weights, seq, None, mask)
}

fn loss_gradient_marked(weights: &NetworkWeights, seq: &[usize], mark: Option<&[f64]>, mask: Mask) -> Result<(f64, NetworkWeights)> {
    let hyper = weights.hyper;
    check_sequence(&hyper, seq)?;
    if let Some(m) = mark {
        check_mark(&hyper, m)?;
    }
    let mut grad = NetworkWeights::zeros(hyper)?;
    let (out, caches) = forward_cached(weights, embed_marked(&weights.vocab, seq, mark), mask);
    let n = seq.len();
    let mut dy = vec![vec![0.0; hyper.width]; n];
    let mut terms = Vec::with_capacity(n);
    for j in 0..n.saturating_sub(1) {
        let (l, mut p) = log_softmax_terms(&weights.vocab, &out[j], seq[j + 1]);
        terms.push(l);
        p[seq[j + 1]] -= 1.0;
        grad.vocab.add_outer(1.0, &out[j], &p);
        dy[j] = weights.vocab.matvec(&p);
    }
    for (l, cache) in caches.iter().enumerate().rev() {
        dy = layer_backward(&weights.layers[l], cache, &dy, mask, &mut grad.layers[l]);
    }
    for (j, &w) in seq.iter().enumerate() {
        for r in 0..hyper.width {
            let m = mark.map_or(1.0, |m| m[r]);
            grad.vocab[(r, w)] += dy[j][r] * m;
        }
    }
    Ok((neumaier_sum(terms), grad))
}

/// Central finite differences of the loss over every flattened parameter.
pub fn finite_difference_gradient(weights: &NetworkWeights, seq: &[usize], mask: Mask, h: f64) -> Result<Vec<f64>> {
    check_sequence(&weights.hyper, seq)?;
    let base = weights.flat_params();
    let mut probe = weights.clone();
    let mut out = Vec::with_capacity(base.len());
    let mut flat = base.clone();
    for i in 0..base.len() {
        flat[i] = base[i] + h;
        probe.set_flat_params(&flat)?;
        let up = loss(&probe, seq, mask)?;
        flat[i] = base[i] - h;
        probe.set_flat_params(&flat)?;
        let down = loss(&probe, seq, mask)?;
        flat[i] = base[i];
        out.push((up - down) / (2.0 * h));
    }
    Ok(out)
}

pub const FD_STEP: f64 = 1e-5;
/// Denominator floor for the componentwise relative error, so that components
/// whose analytic value is zero are judged by absolute error.
pub const GRAD_REL_FLOOR: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GradientCheck {
    pub params: usize,
    pub max_abs_error: f64,
    /// `max_i |g_i − f_i| / max(|g_i|, |f_i|, GRAD_REL_FLOOR)`
    pub max_rel_error: f64,
}

/// Compares the reverse pass against central differences with step `h`.
pub fn check_gradient(weights: &NetworkWeights, seq: &[usize], mask: Mask, h: f64) -> Result<GradientCheck> {
    let (_, grad) = loss_gradient(weights, seq, mask)?;
    let analytic = grad.flat_params();
    let numeric = finite_difference_gradient(weights, seq, mask, h)?;
    let mut max_abs_error = 0.0_f64;
    let mut max_rel_error = 0.0_f64;
    for (a, f) in analytic.iter().zip(&numeric) {
        let err = (a - f).abs();
        max_abs_error = max_abs_error.max(err);
        max_rel_error = max_rel_error.max(err / a.abs().max(f.abs()).max(GRAD_REL_FLOOR));
    }
    Ok(GradientCheck { params: analytic.len(), max_abs_error, max_rel_error })
}

/// Weights after one SGD step on `S1`, with embedding lookups optionally marked by `a`.
pub fn sgd_step(weights: &NetworkWeights, s1: &[usize], a: Option<&[f64]>, mask: Mask) -> Result<NetworkWeights> {
    let (_, grad) = loss_gradient_marked(weights, s1, a, mask)?;
    Ok(weights.sgd_update(&grad, weights.hyper.eta))
}

// ---------------------------------------------------------------------------
// representations

pub fn in_context_rep(weights: &NetworkWeights, s1: &[usize], s2: &[usize], readout: Readout, mask: Mask) -> Result<f64> {
    check_sequence(&weights.hyper, s1)?;
    check_sequence(&weights.hyper, s2)?;
    readout.check(&weights.hyper)?;
    let tokens: Vec<usize> = s1.iter().chain(s2).copied().collect();
    let out = forward_tokens(weights, &tokens, mask)?;
    Ok(out[weights.hyper.seq_len + readout.position][readout.coordinate])
}

pub fn sequential_rep(weights: &NetworkWeights, s1: &[usize], s2: &[usize], readout: Readout, mask: Mask) -> Result<f64> {
    check_sequence(&weights.hyper, s2)?;
    readout.check(&weights.hyper)?;
    let updated = sgd_step(weights, s1, None, mask)?;
    let out = forward_tokens(&updated, s2, mask)?;
    Ok(out[readout.position][readout.coordinate])
}

pub fn representation(weights: &NetworkWeights, s1: &[usize], s2: &[usize], mode: Mode, readout: Readout, mask: Mask) -> Result<f64> {
    match mode {
        Mode::InContext => in_context_rep(weights, s1, s2, readout, mask),
        Mode::Sequential => sequential_rep(weights, s1, s2, readout, mask),
    }
}

/// The association-layer scalar `Z_y(a, b)`.
#[allow(clippy::too_many_arguments)]
pub fn associated_eval(weights: &NetworkWeights, s1: &[usize], s2: &[usize], a: &[f64], b: &[f64], mode: Mode, readout: Readout, mask: Mask) -> Result<f64> {
    match mode {
        Mode::InContext => {
            let inputs = in_context_inputs(weights, s1, s2, a, b)?;
            readout.check(&weights.hyper)?;
            let out = forward_cached(weights, inputs, mask).0;
            Ok(out[weights.hyper.seq_len + readout.position][readout.coordinate])
        }
        Mode::Sequential => {
            let updated = sequential_update(weights, s1, a, mask)?;
            sequential_readout(&updated, s2, b, readout, mask)
        }
    }
}

/// Marked input vectors of the concatenated pass: `S1` lookups times `a`, `S2` lookups times `b`.
pub fn in_context_inputs(weights: &NetworkWeights, s1: &[usize], s2: &[usize], a: &[f64], b: &[f64]) -> Result<Vec<Vec<f64>>> {
    let hyper = &weights.hyper;
    check_sequence(hyper, s1)?;
    check_sequence(hyper, s2)?;
    check_mark(hyper, a)?;
    check_mark(hyper, b)?;
    let mut inputs = embed_marked(&weights.vocab, s1, Some(a));
    inputs.extend(embed_marked(&weights.vocab, s2, Some(b)));
    Ok(inputs)
}

/// First half of the sequential association: the SGD step on `S1` with lookups marked by `a`.
pub fn sequential_update(weights: &NetworkWeights, s1: &[usize], a: &[f64], mask: Mask) -> Result<NetworkWeights> {
    check_mark(&weights.hyper, a)?;
    sgd_step(weights, s1, Some(a), mask)
}

/// Second half: forward `S2` through already-updated weights with lookups marked by `b`.
pub fn sequential_readout(updated: &NetworkWeights, s2: &[usize], b: &[f64], readout: Readout, mask: Mask) -> Result<f64> {
    check_sequence(&updated.hyper, s2)?;
    check_mark(&updated.hyper, b)?;
    readout.check(&updated.hyper)?;
    let out = forward_cached(updated, embed_marked(&updated.vocab, s2, Some(b)), mask).0;
    Ok(out[readout.position][readout.coordinate])
}

// ---------------------------------------------------------------------------
// polynomial degree

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DegreeCheck {
    pub degree: usize,
    /// Max absolute deviation of the interpolant at the held-out points.
    pub residual: f64,
    /// `max(1, max |f|)` over the interpolation nodes.
    pub scale: f64,
    pub passes: bool,
}

impl DegreeCheck {
    pub fn relative_residual(&self) -> f64 {
        self.residual / self.scale
    }
}

pub const DEGREE_TOL: f64 = 1e-9;
const HELD_OUT: usize = 8;

/// Restricts the in-context output to a random line `x₀ + t·d` in input-embedding
/// space, interpolates with a degree-`degree` polynomial at Chebyshev nodes on
/// `[-1, 1]` and measures the misfit at held-out points.
pub fn polynomial_degree_check(weights: &NetworkWeights, s1: &[usize], s2: &[usize], degree: usize, readout: Readout, seed: u64) -> Result<DegreeCheck> {
    let ones = vec![1.0; weights.hyper.width];
    let x0 = in_context_inputs(weights, s1, s2, &ones, &ones)?;
    readout.check(&weights.hyper)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dir: Vec<Vec<f64>> = x0.iter().map(|x| x.iter().map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let pos = weights.hyper.seq_len + readout.position;
    let f = |t: f64| {
        let inputs = x0.iter().zip(&dir).map(|(x, d)| x.iter().zip(d).map(|(xi, di)| xi + t * di).collect()).collect();
        forward_cached(weights, inputs, Mask::Full).0[pos][readout.coordinate]
    };
    let nodes: Vec<f64> = if degree == 0 { vec![0.0] } else { (0..=degree).map(|k| (std::f64::consts::PI * k as f64 / degree as f64).cos()).collect() };
    let values: Vec<f64> = nodes.iter().map(|&t| f(t)).collect();
    let scale = values.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
    let mut residual = 0.0_f64;
    for _ in 0..HELD_OUT {
        let t: f64 = rng.random_range(-0.95..0.95);
        residual = residual.max((f(t) - barycentric(&nodes, &values, t)).abs());
    }
    Ok(DegreeCheck { degree, residual, scale, passes: residual < DEGREE_TOL * scale })
}

/// Barycentric interpolation on Chebyshev points of the second kind.
fn barycentric(nodes: &[f64], values: &[f64], t: f64) -> f64 {
    let n = nodes.len();
    if n == 1 {
        return values[0];
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for k in 0..n {
        let diff = t - nodes[k];
        if diff == 0.0 {
            return values[k];
        }
        let mut w = if k % 2 == 0 { 1.0 } else { -1.0 };
        if k == 0 || k == n - 1 {
            w *= 0.5;
        }
        num += w / diff * values[k];
        den += w / diff;
    }
    num / den
}

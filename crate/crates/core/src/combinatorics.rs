//! Log-space combinatorics for the sequential upper bound.
//!
//! The bound counts the non-negligible summands of
//! `Σ_n C(K,n) ηⁿ Σ_{a,b} mult(n; a) mult(K−n; b)` with `K = 3^L`. Everything
//! here either evaluates one of the closed forms or checks it by exhaustive
//! enumeration on small instances.

use std::cmp::Ordering;
use std::f64::consts::{E, PI};
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::sync::OnceLock;

use serde::Serialize;
use statrs::function::gamma::ln_gamma;

use crate::error::{invalid, CoreError, Result};

// ---------------------------------------------------------------------------
// LogNumber

/// A real number stored as a sign and the natural log of its magnitude.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LogNumber {
    sign: i8,
    ln_abs: f64,
}

impl LogNumber {
    pub const ZERO: LogNumber = LogNumber { sign: 0, ln_abs: f64::NEG_INFINITY };
    pub const ONE: LogNumber = LogNumber { sign: 1, ln_abs: 0.0 };

    /// Positive number with the given log.
    pub fn from_ln(ln_abs: f64) -> Self {
        if ln_abs == f64::NEG_INFINITY {
            Self::ZERO
        } else {
            Self { sign: 1, ln_abs }
        }
    }

    pub fn from_f64(x: f64) -> Self {
        match x.partial_cmp(&0.0) {
            Some(Ordering::Greater) => Self { sign: 1, ln_abs: x.ln() },
            Some(Ordering::Less) => Self { sign: -1, ln_abs: (-x).ln() },
            _ => Self::ZERO,
        }
    }

    pub fn sign(self) -> i8 {
        self.sign
    }

    /// `ln |x|`
    pub fn ln_abs(self) -> f64 {
        self.ln_abs
    }

    pub fn log10_abs(self) -> f64 {
        self.ln_abs / std::f64::consts::LN_10
    }

    pub fn to_f64(self) -> f64 {
        f64::from(self.sign) * self.ln_abs.exp()
    }

    pub fn is_zero(self) -> bool {
        self.sign == 0
    }

    pub fn powf(self, p: f64) -> Self {
        match self.sign {
            0 if p > 0.0 => Self::ZERO,
            0 => Self::ONE,
            1 => Self::from_ln(self.ln_abs * p),
            _ => Self { sign: -1, ln_abs: f64::NAN },
        }
    }

    pub fn powi(self, p: i64) -> Self {
        match self.sign {
            0 if p > 0 => Self::ZERO,
            0 => Self::ONE,
            s => Self { sign: if s < 0 && p % 2 != 0 { -1 } else { 1 }, ln_abs: self.ln_abs * p as f64 },
        }
    }
}

impl Mul for LogNumber {
    type Output = LogNumber;
    fn mul(self, o: LogNumber) -> LogNumber {
        if self.sign == 0 || o.sign == 0 {
            return LogNumber::ZERO;
        }
        LogNumber { sign: self.sign * o.sign, ln_abs: self.ln_abs + o.ln_abs }
    }
}

impl Div for LogNumber {
    type Output = LogNumber;
    fn div(self, o: LogNumber) -> LogNumber {
        if o.sign == 0 {
            return LogNumber { sign: self.sign.max(1), ln_abs: f64::INFINITY };
        }
        if self.sign == 0 {
            return LogNumber::ZERO;
        }
        LogNumber { sign: self.sign * o.sign, ln_abs: self.ln_abs - o.ln_abs }
    }
}

impl Neg for LogNumber {
    type Output = LogNumber;
    fn neg(self) -> LogNumber {
        LogNumber { sign: -self.sign, ..self }
    }
}

impl Add for LogNumber {
    type Output = LogNumber;
    /// Log-sum-exp; opposite signs subtract magnitudes.
    fn add(self, o: LogNumber) -> LogNumber {
        if self.sign == 0 {
            return o;
        }
        if o.sign == 0 {
            return self;
        }
        let (big, small) = if self.ln_abs >= o.ln_abs { (self, o) } else { (o, self) };
        let d = small.ln_abs - big.ln_abs;
        if big.sign == small.sign {
            LogNumber { sign: big.sign, ln_abs: big.ln_abs + d.exp().ln_1p() }
        } else if d == 0.0 {
            LogNumber::ZERO
        } else {
            LogNumber { sign: big.sign, ln_abs: big.ln_abs + (-d.exp()).ln_1p() }
        }
    }
}

impl Sub for LogNumber {
    type Output = LogNumber;
    fn sub(self, o: LogNumber) -> LogNumber {
        self + (-o)
    }
}

impl PartialOrd for LogNumber {
    fn partial_cmp(&self, o: &LogNumber) -> Option<Ordering> {
        match self.sign.cmp(&o.sign) {
            Ordering::Equal => match self.sign {
                0 => Some(Ordering::Equal),
                1 => self.ln_abs.partial_cmp(&o.ln_abs),
                _ => o.ln_abs.partial_cmp(&self.ln_abs),
            },
            ord => Some(ord),
        }
    }
}

// ---------------------------------------------------------------------------
// factorials and multinomials

const SMALL_FACTORIALS: usize = 171;

fn small_ln_factorials() -> &'static [f64] {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut f = 1.0_f64;
        let mut out = Vec::with_capacity(SMALL_FACTORIALS);
        out.push(0.0);
        for k in 1..SMALL_FACTORIALS {
            f *= k as f64;
            out.push(f.ln());
        }
        out
    })
}

/// `ln n!`
pub fn ln_factorial(n: u64) -> f64 {
    match small_ln_factorials().get(n as usize) {
        Some(&v) => v,
        None => ln_gamma(n as f64 + 1.0),
    }
}

/// `ln C(n, k)`; `-∞` when `k > n`.
pub fn ln_binomial(n: u64, k: u64) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)
}

/// `ln C(x, y)` for real arguments through the gamma function.
pub fn ln_binomial_real(x: f64, y: f64) -> f64 {
    ln_gamma(x + 1.0) - ln_gamma(y + 1.0) - ln_gamma(x - y + 1.0)
}

/// `K! / Π a_i!`
pub fn log_multinomial(k: u64, parts: &[u64]) -> Result<LogNumber> {
    let total: u64 = parts.iter().sum();
    if total != k {
        return Err(invalid(format!("parts sum to {total}, expected {k}")));
    }
    Ok(LogNumber::from_ln(ln_factorial(k) - parts.iter().map(|&p| ln_factorial(p)).sum::<f64>()))
}

/// `M` parts of `K` differing by at most one: `M − (K mod M)` parts `⌊K/M⌋`, then `K mod M` parts `⌊K/M⌋ + 1`.
pub fn balanced_split(k: u64, m: u64) -> Result<Vec<u64>> {
    if m == 0 {
        return Err(invalid("M must be positive"));
    }
    let (q, r) = (k / m, k % m);
    Ok((0..m).map(|i| if i < m - r { q } else { q + 1 }).collect())
}

/// The maximizer of `mult(K; a)` over compositions of `K` into `M` parts.
pub fn multinomial_max_location(k: u64, m: u64) -> Result<Vec<u64>> {
    balanced_split(k, m)
}

pub fn balanced_multinomial(k: u64, m: u64) -> Result<LogNumber> {
    log_multinomial(k, &balanced_split(k, m)?)
}

/// Calls `f` on every weak composition of `k` into `m` parts, in lexicographic order.
pub fn for_each_composition(k: u64, m: usize, mut f: impl FnMut(&[u64])) {
    if m == 0 {
        if k == 0 {
            f(&[]);
        }
        return;
    }
    let mut parts = vec![0u64; m];
    parts[m - 1] = k;
    loop {
        f(&parts);
        // advance: find the rightmost position before the last that can grow
        let mut i = m - 1;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            let rest: u64 = parts[i + 1..].iter().sum();
            if rest > 0 {
                parts[i] += 1;
                for p in &mut parts[i + 1..] {
                    *p = 0;
                }
                parts[m - 1] = rest - 1;
                break;
            }
        }
    }
}

/// `C(k + m − 1, m − 1)` as f64.
pub fn composition_count(k: u64, m: u64) -> f64 {
    if m == 0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    ln_binomial(k + m - 1, m - 1).exp().round()
}

// ---------------------------------------------------------------------------
// S(n) and its argmax

fn check_eta(eta: f64) -> Result<()> {
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(invalid(format!("eta must be positive and finite, got {eta}")));
    }
    Ok(())
}

/// `S(n) = C(K,n) ηⁿ mult(n; balanced) mult(K−n; balanced)`, evaluated directly.
pub fn s_direct(k: u64, m: u64, eta: f64, n: u64) -> Result<LogNumber> {
    check_eta(eta)?;
    if n > k {
        return Err(invalid(format!("n = {n} exceeds K = {k}")));
    }
    let c = LogNumber::from_ln(ln_binomial(k, n) + n as f64 * eta.ln());
    Ok(c * balanced_multinomial(n, m)? * balanced_multinomial(k - n, m)?)
}

/// `S(n)` as a product of successive ratios `S(t+1)/S(t) = η ⌈(K−t)/M⌉ / (⌊t/M⌋ + 1)`
/// starting from `S(0) = mult(K; balanced)`. Grouped in blocks of `M` steps
/// this is `Π_j (η(K − jM)/((j+1)M))^M` whenever `M | K`.
pub fn s_recurrence(k: u64, m: u64, eta: f64, n: u64) -> Result<LogNumber> {
    check_eta(eta)?;
    if m == 0 {
        return Err(invalid("M must be positive"));
    }
    if n > k {
        return Err(invalid(format!("n = {n} exceeds K = {k}")));
    }
    let ln_eta = eta.ln();
    let mut acc = balanced_multinomial(k, m)?.ln_abs();
    for t in 0..n {
        let up = (k - t).div_ceil(m) as f64;
        let down = (t / m + 1) as f64;
        acc += ln_eta + up.ln() - down.ln();
    }
    Ok(LogNumber::from_ln(acc))
}

/// The block-product closed form:
/// `Π_{j<⌊n/M⌋} (η(K−jM)/((j+1)M))^M · (η(K−⌊n/M⌋M)/((⌊n/M⌋+1)M))^{n mod M} · mult(K; balanced)`.
/// Equals [`s_direct`] when `M | K`; for other `K` it drifts from it.
pub fn s_block_product(k: u64, m: u64, eta: f64, n: u64) -> Result<LogNumber> {
    check_eta(eta)?;
    if m == 0 {
        return Err(invalid("M must be positive"));
    }
    if n > k {
        return Err(invalid(format!("n = {n} exceeds K = {k}")));
    }
    let (kf, mf) = (k as f64, m as f64);
    let blocks = n / m;
    let mut acc = balanced_multinomial(k, m)?.ln_abs();
    for j in 0..blocks {
        let jf = j as f64;
        acc += mf * (eta * (kf - jf * mf) / ((jf + 1.0) * mf)).ln();
    }
    let rem = (n % m) as f64;
    if rem > 0.0 {
        let bf = blocks as f64;
        acc += rem * (eta * (kf - bf * mf) / ((bf + 1.0) * mf)).ln();
    }
    Ok(LogNumber::from_ln(acc))
}

/// `n* = (⌊(ηK − M) / (M(1+η))⌋ + 1) · M`
pub fn argmax_s(k: u64, m: u64, eta: f64) -> Result<u64> {
    check_eta(eta)?;
    if m == 0 {
        return Err(invalid("M must be positive"));
    }
    let (kf, mf) = (k as f64, m as f64);
    let q = ((eta * kf - mf) / (mf * (1.0 + eta))).floor() + 1.0;
    Ok((q.max(0.0) as u64) * m)
}

/// All `n` attaining `max S(n)` (relative tie tolerance `1e-12`) and the max itself.
pub fn argmax_s_exhaustive(k: u64, m: u64, eta: f64) -> Result<(Vec<u64>, LogNumber)> {
    let vals: Vec<LogNumber> = (0..=k).map(|n| s_direct(k, m, eta, n)).collect::<Result<_>>()?;
    let best = vals.iter().map(|v| v.ln_abs()).fold(f64::NEG_INFINITY, f64::max);
    let arg = (0..=k).filter(|&n| vals[n as usize].ln_abs() >= best - TIE_TOL).collect();
    Ok((arg, LogNumber::from_ln(best)))
}

/// Log-space slack for treating two exact integers' ratios as tied.
pub const TIE_TOL: f64 = 1e-12;

// ---------------------------------------------------------------------------
// integer points in a ball

pub const LATTICE_MAX_DIM: usize = 6;
pub const LATTICE_MAX_RADIUS: f64 = 10.0;

/// `#{x ∈ ℤ^d : ‖x‖ ≤ R}` by enumeration.
pub fn lattice_ball_count(d: usize, radius: f64) -> Result<u64> {
    if d > LATTICE_MAX_DIM || radius > LATTICE_MAX_RADIUS {
        return Err(CoreError::TooLarge(format!("lattice enumeration limited to d <= {LATTICE_MAX_DIM}, R <= {LATTICE_MAX_RADIUS}; got d={d}, R={radius}")));
    }
    if !(radius >= 0.0) {
        return Err(invalid(format!("radius must be non-negative, got {radius}")));
    }
    // integer squared norms compare exactly against ⌊R²⌋
    let r2 = (radius * radius + 1e-9).floor() as i64;
    fn rec(dims: usize, rem: i64) -> u64 {
        if dims == 0 {
            return 1;
        }
        let m = (rem as f64).sqrt().floor() as i64;
        (-m..=m).map(|x| rec(dims - 1, rem - x * x)).sum()
    }
    Ok(rec(d, r2))
}

/// `((πe/2)^{d/2} / √(πd)) · (2R/√d ∓ 1)^d`, the lower one clamped at 0.
pub fn lattice_ball_bounds(d: usize, radius: f64) -> (f64, f64) {
    let df = d as f64;
    let pre = (PI * E / 2.0).powf(df / 2.0) / (PI * df).sqrt();
    let t = 2.0 * radius / df.sqrt();
    (pre * (t - 1.0).max(0.0).powf(df), pre * (t + 1.0).powf(df))
}

// ---------------------------------------------------------------------------
// the set T_{K,M}

pub const MAX_COMPOSITIONS: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TCharacterization {
    pub compositions: u64,
    /// `|T|`
    pub t_size: u64,
    /// `‖a − (K/M)·1‖² ≤ (K/M) ln(1/s)`
    pub inner_size: u64,
    /// `‖a − (K/M)·1‖² ≤ 4K ln(1/s)`
    pub outer_size: u64,
    pub inner_in_t: bool,
    pub t_in_outer: bool,
}

fn check_s(s: f64) -> Result<()> {
    if !(s > 0.0 && s <= 1.0) {
        return Err(invalid(format!("s must lie in (0, 1], got {s}")));
    }
    Ok(())
}

/// Enumerates `T = {a : mult(K; a) ≥ s · mult(K; balanced)}` against both balls.
pub fn characterize_t(k: u64, m: u64, s: f64) -> Result<TCharacterization> {
    check_s(s)?;
    if m == 0 {
        return Err(invalid("M must be positive"));
    }
    let count = composition_count(k, m);
    if count > MAX_COMPOSITIONS {
        return Err(CoreError::TooLarge(format!("{count} compositions exceed {MAX_COMPOSITIONS}")));
    }
    let reference = balanced_multinomial(k, m)?.ln_abs() + s.ln();
    let ln_inv_s = -s.ln();
    let (kf, mf) = (k as i128, m as i128);
    // distances scaled by M² so they stay integers
    let inner_r = (k as f64) * (m as f64) * ln_inv_s;
    let outer_r = 4.0 * (k as f64) * (m * m) as f64 * ln_inv_s;
    let mut out = TCharacterization { compositions: 0, t_size: 0, inner_size: 0, outer_size: 0, inner_in_t: true, t_in_outer: true };
    for_each_composition(k, m as usize, |a| {
        let in_t = log_multinomial(k, a).map(|v| v.ln_abs() >= reference - TIE_TOL).unwrap_or(false);
        let dist: i128 = a.iter().map(|&x| (mf * x as i128 - kf).pow(2)).sum();
        let inner = dist as f64 <= inner_r;
        let outer = dist as f64 <= outer_r;
        out.compositions += 1;
        out.t_size += u64::from(in_t);
        out.inner_size += u64::from(inner);
        out.outer_size += u64::from(outer);
        out.inner_in_t &= !inner || in_t;
        out.t_in_outer &= !in_t || outer;
    });
    Ok(out)
}

// ---------------------------------------------------------------------------
// counting non-negligible terms

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BinomCount {
    pub exact: u64,
    /// Present when `s < e⁻¹`, where the closed form is meaningful.
    pub bound: Option<f64>,
}

/// `#{n : C(K,n) ηⁿ ≥ s · max_t C(K,t) η^t}` with the closed-form upper bound
/// `K √((2 ln(1/s) − 1)²(1+η)² − 4η) / (2(1+η)(ln(1/s) − 1))`.
pub fn count_nonneg_binom_eta(k: u64, eta: f64, s: f64) -> Result<BinomCount> {
    check_eta(eta)?;
    check_s(s)?;
    let terms: Vec<f64> = (0..=k).map(|n| ln_binomial(k, n) + n as f64 * eta.ln()).collect();
    let best = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exact = terms.iter().filter(|&&t| t >= best + s.ln() - TIE_TOL).count() as u64;
    let l = -s.ln();
    let bound = (l > 1.0).then(|| {
        let disc = (2.0 * l - 1.0).powi(2) * (1.0 + eta).powi(2) - 4.0 * eta;
        k as f64 * disc.max(0.0).sqrt() / (2.0 * (1.0 + eta) * (l - 1.0))
    });
    Ok(BinomCount { exact, bound })
}

pub const MAX_SUMMANDS: f64 = 1e7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SummandCount {
    pub total: u64,
    /// `#{(n, a, b) : F ≥ s · max F}`
    pub exact: u64,
    /// How many summands attain the maximum.
    pub max_multiplicity: u64,
    pub ln_max: f64,
    /// Closed-form upper bound, when `ηK/(1+η) ≥ M − 1` and `M ≥ 2`.
    pub upper: Option<f64>,
    /// Closed-form lower bound, when `K/(1+η) ≥ M²`.
    pub lower: Option<f64>,
}

/// `ln F(n, a, b) = ln[C(K,n) ηⁿ mult(n; a) mult(K−n; b)]` for every summand, in
/// enumeration order (n ascending, then a, then b lexicographic).
pub fn summand_logs(k: u64, m: u64, eta: f64) -> Result<Vec<f64>> {
    check_eta(eta)?;
    if m == 0 {
        return Err(invalid("M must be positive"));
    }
    let total = composition_count(k, 2 * m);
    if total > MAX_SUMMANDS {
        return Err(CoreError::TooLarge(format!("{total} summands exceed {MAX_SUMMANDS}")));
    }
    let mut out = Vec::with_capacity(total as usize);
    for n in 0..=k {
        let head = ln_binomial(k, n) + n as f64 * eta.ln();
        let mut left = Vec::new();
        for_each_composition(n, m as usize, |a| left.push(log_multinomial(n, a).unwrap().ln_abs()));
        let mut right = Vec::new();
        for_each_composition(k - n, m as usize, |b| right.push(log_multinomial(k - n, b).unwrap().ln_abs()));
        for la in &left {
            for lb in &right {
                out.push(head + la + lb);
            }
        }
    }
    Ok(out)
}

pub fn count_nonneg_summands(k: u64, m: u64, eta: f64, s: f64) -> Result<SummandCount> {
    check_s(s)?;
    let logs = summand_logs(k, m, eta)?;
    let ln_max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exact = logs.iter().filter(|&&l| l >= ln_max + s.ln() - TIE_TOL).count() as u64;
    let max_multiplicity = logs.iter().filter(|&&l| l >= ln_max - TIE_TOL).count() as u64;
    let (kf, mf) = (k as f64, m as f64);
    let l = -s.ln();
    let upper = (m >= 2 && eta * kf / (1.0 + eta) >= mf - 1.0)
        .then(|| 2.0 * kf / ((mf - 1.0).powi(2) * PI) * (25.0 * PI * E * kf * l * eta.sqrt() / (2.0 * (mf - 1.0) * (1.0 + eta))).powf(mf - 1.0));
    let lower = (kf / (1.0 + eta) >= mf * mf).then(|| 1.0 / (mf * PI.sqrt()) * (PI * E * kf * l / (2.0 * mf * mf * (1.0 + eta))).powf((mf - 1.0) / 2.0));
    Ok(SummandCount { total: logs.len() as u64, exact, max_multiplicity, ln_max, upper, lower })
}

// ---------------------------------------------------------------------------
// the assembled sequential bound

#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
pub struct TheoremInstance {
    pub width: u64,
    pub seq_len: u64,
    pub heads: u64,
    pub layers: u32,
    pub eta: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub eps: f64,
    /// The bound `M` on the magnitude of the polynomial coefficients.
    pub coeff_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TheoremBound {
    pub value: LogNumber,
    /// `(name, holds)` for each hypothesis.
    pub hypotheses: Vec<(&'static str, bool)>,
}

impl TheoremBound {
    pub fn hypotheses_hold(&self) -> bool {
        self.hypotheses.iter().all(|(_, ok)| *ok)
    }
}

/// The separation-rank upper bound for the sequential representation, with
/// `K = 2C(L) + 1 = 3^L`:
///
/// `(2K/(d−1)²) (25√η/(d−1))^{d−1} 2^{3N} (e(2d+K))^{4d}`
/// `  / [ (1 + (dN/(e(2dN+K)))^{2dN} (Λmin/Λmax)^{(L+2)(K+1)} ε/M)² d^{2d} ]`
///
/// The value is returned even when a hypothesis fails; callers check
/// [`TheoremBound::hypotheses_hold`].
pub fn theorem_bound(inst: &TheoremInstance) -> Result<TheoremBound> {
    let TheoremInstance { width, seq_len, heads, layers, eta, lambda_min, lambda_max, eps, coeff_bound } = *inst;
    if width < 2 || seq_len == 0 || heads == 0 || layers == 0 {
        return Err(invalid("need d_x >= 2 and positive N, H, L"));
    }
    check_eta(eta)?;
    if !(lambda_min > 0.0 && lambda_min <= lambda_max && eps > 0.0 && coeff_bound > 0.0) {
        return Err(invalid("need 0 < lambda_min <= lambda_max and positive eps, M"));
    }
    let d = width as f64;
    let n = seq_len as f64;
    let k = 3f64.powi(layers as i32);
    let num = (2.0 * k / (d - 1.0).powi(2)).ln() + (d - 1.0) * (25.0 * eta.sqrt() / (d - 1.0)).ln() + 3.0 * n * 2f64.ln() + 4.0 * d * (E * (2.0 * d + k)).ln();
    let tiny = 2.0 * d * n * (d * n / (E * (2.0 * d * n + k))).ln()
        + (f64::from(layers) + 2.0) * (k + 1.0) * (lambda_min / lambda_max).ln()
        + (eps / coeff_bound).ln();
    let den = 2.0 * ln_1p_exp(tiny) + 2.0 * d * d.ln();
    let three_l = k;
    let hypotheses = vec![
        ("eta_in_unit_interval", eta > 0.0 && eta <= 1.0),
        ("2(1+eta)d/eta < 3^L", 2.0 * (1.0 + eta) * d / eta < three_l),
        ("2(1+eta)d^2 < 3^L", 2.0 * (1.0 + eta) * d * d < three_l),
        ("N < d", seq_len < width),
        ("H divides d", width % heads == 0),
    ];
    Ok(TheoremBound { value: LogNumber::from_ln(num - den), hypotheses })
}

/// `ln(1 + eˣ)` without overflow.
fn ln_1p_exp(x: f64) -> f64 {
    if x > 35.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

//! Straight-line reference network used as a test oracle.
//!
//! Written against nested `Vec`s with a generic scalar so the same code runs
//! on `f64` and on forward-mode dual numbers; gradients come from one dual
//! pass per parameter and share nothing with the library's reverse pass.

#![allow(dead_code)]

use std::ops::{Add, Div, Mul, Neg, Sub};

use icb_core::attention::NetworkWeights;

pub trait Num: Copy + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Div<Output = Self> + Neg<Output = Self> {
    fn c(x: f64) -> Self;
    /// Independent variable: derivative 1.
    fn var(x: f64) -> Self;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn val(self) -> f64;
}

impl Num for f64 {
    fn c(x: f64) -> Self {
        x
    }
    fn var(x: f64) -> Self {
        x
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn ln(self) -> Self {
        f64::ln(self)
    }
    fn val(self) -> f64 {
        self
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Dual {
    pub v: f64,
    pub d: f64,
}

impl Add for Dual {
    type Output = Dual;
    fn add(self, o: Dual) -> Dual {
        Dual { v: self.v + o.v, d: self.d + o.d }
    }
}
impl Sub for Dual {
    type Output = Dual;
    fn sub(self, o: Dual) -> Dual {
        Dual { v: self.v - o.v, d: self.d - o.d }
    }
}
impl Mul for Dual {
    type Output = Dual;
    fn mul(self, o: Dual) -> Dual {
        Dual { v: self.v * o.v, d: self.d * o.v + self.v * o.d }
    }
}
impl Div for Dual {
    type Output = Dual;
    fn div(self, o: Dual) -> Dual {
        Dual { v: self.v / o.v, d: (self.d * o.v - self.v * o.d) / (o.v * o.v) }
    }
}
impl Neg for Dual {
    type Output = Dual;
    fn neg(self) -> Dual {
        Dual { v: -self.v, d: -self.d }
    }
}
impl Num for Dual {
    fn c(x: f64) -> Self {
        Dual { v: x, d: 0.0 }
    }
    fn var(x: f64) -> Self {
        Dual { v: x, d: 1.0 }
    }
    fn exp(self) -> Self {
        let e = self.v.exp();
        Dual { v: e, d: self.d * e }
    }
    fn ln(self) -> Self {
        Dual { v: self.v.ln(), d: self.d / self.v }
    }
    fn val(self) -> f64 {
        self.v
    }
}

pub struct Head<T> {
    pub k: Vec<Vec<T>>,
    pub q: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
    pub o: Vec<Vec<T>>,
}

pub struct Net<T> {
    pub layers: Vec<Vec<Head<T>>>,
    /// d_x rows, V columns
    pub m: Vec<Vec<T>>,
    pub causal: bool,
}

fn rows_of(m: &icb_core::linalg::Matrix) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|i| m.row(i).to_vec()).collect()
}

/// Lifts weights into the oracle; parameter number `seed` (declaration order) gets derivative 1.
pub fn lift<T: Num>(w: &NetworkWeights, seed: Option<usize>, causal: bool) -> Net<T> {
    let mut counter = 0usize;
    let mut conv = |m: &icb_core::linalg::Matrix| -> Vec<Vec<T>> {
        rows_of(m)
            .into_iter()
            .map(|r| {
                r.into_iter()
                    .map(|x| {
                        let out = if Some(counter) == seed { T::var(x) } else { T::c(x) };
                        counter += 1;
                        out
                    })
                    .collect()
            })
            .collect()
    };
    let mut layers = Vec::new();
    for l in &w.layers {
        let mut heads = Vec::new();
        for h in l {
            let k = conv(&h.key);
            let q = conv(&h.query);
            let v = conv(&h.value);
            let o = conv(&h.output);
            heads.push(Head { k, q, v, o });
        }
        layers.push(heads);
    }
    let m = conv(&w.vocab);
    Net { layers, m, causal }
}

fn matvec<T: Num>(a: &[Vec<T>], x: &[T]) -> Vec<T> {
    a.iter()
        .map(|row| {
            let mut s = T::c(0.0);
            for (r, xi) in row.iter().zip(x) {
                s = s + *r * *xi;
            }
            s
        })
        .collect()
}

pub fn forward<T: Num>(net: &Net<T>, xs: Vec<Vec<T>>) -> Vec<Vec<T>> {
    let mut g = xs;
    for layer in &net.layers {
        let n = g.len();
        let dx = g[0].len();
        let mut next = vec![vec![T::c(0.0); dx]; n];
        for h in layer {
            let q: Vec<Vec<T>> = g.iter().map(|x| matvec(&h.q, x)).collect();
            let k: Vec<Vec<T>> = g.iter().map(|x| matvec(&h.k, x)).collect();
            let v: Vec<Vec<T>> = g.iter().map(|x| matvec(&h.v, x)).collect();
            for i in 0..n {
                let da = q[i].len();
                let mut c = vec![T::c(0.0); da];
                for j in 0..n {
                    if net.causal && j > i {
                        continue;
                    }
                    let mut s = T::c(0.0);
                    for r in 0..da {
                        s = s + q[i][r] * k[j][r];
                    }
                    for r in 0..da {
                        c[r] = c[r] + s * v[j][r];
                    }
                }
                let out = matvec(&h.o, &c);
                for p in 0..dx {
                    next[i][p] = next[i][p] + out[p];
                }
            }
        }
        g = next;
    }
    g
}

pub fn embed<T: Num>(net: &Net<T>, seq: &[usize], mark: Option<&[f64]>) -> Vec<Vec<T>> {
    seq.iter()
        .map(|&w| {
            net.m
                .iter()
                .enumerate()
                .map(|(r, row)| match mark {
                    Some(m) => row[w] * T::c(m[r]),
                    None => row[w],
                })
                .collect()
        })
        .collect()
}

pub fn loss<T: Num>(net: &Net<T>, seq: &[usize], mark: Option<&[f64]>) -> T {
    let y = forward(net, embed(net, seq, mark));
    let vocab = net.m[0].len();
    let mut total = T::c(0.0);
    for j in 0..seq.len() - 1 {
        let logits: Vec<T> = (0..vocab)
            .map(|v| {
                let mut s = T::c(0.0);
                for (r, row) in net.m.iter().enumerate() {
                    s = s + row[v] * y[j][r];
                }
                s
            })
            .collect();
        let shift = logits.iter().map(|l| l.val()).fold(f64::NEG_INFINITY, f64::max);
        let mut z = T::c(0.0);
        for l in &logits {
            z = z + (*l - T::c(shift)).exp();
        }
        total = total + (z.ln() + T::c(shift)) - logits[seq[j + 1]];
    }
    total
}

/// Exact gradient by forward-mode differentiation, declaration order.
pub fn gradient(w: &NetworkWeights, seq: &[usize], mark: Option<&[f64]>, causal: bool) -> Vec<f64> {
    (0..w.param_count()).map(|i| loss::<Dual>(&lift::<Dual>(w, Some(i), causal), seq, mark).d).collect()
}

pub fn loss_value(w: &NetworkWeights, seq: &[usize], causal: bool) -> f64 {
    loss::<f64>(&lift::<f64>(w, None, causal), seq, None)
}

pub fn updated_weights(w: &NetworkWeights, s1: &[usize], mark: Option<&[f64]>) -> NetworkWeights {
    let g = gradient(w, s1, mark, false);
    let flat: Vec<f64> = w.flat_params().iter().zip(&g).map(|(p, gi)| p - w.hyper.eta * gi).collect();
    let mut out = w.clone();
    out.set_flat_params(&flat).unwrap();
    out
}

pub fn in_context(w: &NetworkWeights, s1: &[usize], s2: &[usize], a: &[f64], b: &[f64], pos: usize, coord: usize) -> f64 {
    let net = lift::<f64>(w, None, false);
    let mut xs = embed(&net, s1, Some(a));
    xs.extend(embed(&net, s2, Some(b)));
    forward(&net, xs)[s1.len() + pos][coord]
}

pub fn sequential(w: &NetworkWeights, s1: &[usize], s2: &[usize], a: &[f64], b: &[f64], pos: usize, coord: usize) -> f64 {
    let u = updated_weights(w, s1, Some(a));
    let net = lift::<f64>(&u, None, false);
    forward(&net, embed(&net, s2, Some(b)))[pos][coord]
}

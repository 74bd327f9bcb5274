//! Building blocks with hand-written backward passes.
//!
//! Parameters live in one flat buffer; each block stores offsets into it. Forward
//! functions return the activations the matching backward function needs, and
//! backward functions accumulate parameter gradients into a buffer of the same layout.

use super::matrix::{add_into, add_row_bias, gemm, put_cols, softmax_in_place, sum_rows_into, take_cols};

pub const LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LinearP {
    pub w: usize,
    pub b: usize,
    pub din: usize,
    pub dout: usize,
}

impl LinearP {
    pub fn weight<'a>(&self, p: &'a [f64]) -> &'a [f64] {
        &p[self.w..self.w + self.din * self.dout]
    }

    pub fn bias<'a>(&self, p: &'a [f64]) -> &'a [f64] {
        &p[self.b..self.b + self.dout]
    }

    pub fn forward(&self, p: &[f64], x: &[f64], n: usize) -> Vec<f64> {
        let mut y = vec![0.0; n * self.dout];
        gemm(n, self.din, self.dout, x, false, self.weight(p), false, 0.0, &mut y);
        add_row_bias(&mut y, self.bias(p));
        y
    }

    /// Accumulates dW, db and returns dx.
    pub fn backward(&self, p: &[f64], g: &mut [f64], x: &[f64], n: usize, dy: &[f64]) -> Vec<f64> {
        gemm(self.din, n, self.dout, x, true, dy, false, 1.0, &mut g[self.w..self.w + self.din * self.dout]);
        sum_rows_into(&mut g[self.b..self.b + self.dout], dy);
        let mut dx = vec![0.0; n * self.din];
        gemm(n, self.dout, self.din, dy, false, self.weight(p), true, 0.0, &mut dx);
        dx
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NormP {
    pub g: usize,
    pub b: usize,
    pub dim: usize,
}

pub struct NormCache {
    xhat: Vec<f64>,
    inv_std: Vec<f64>,
}

impl NormP {
    pub fn forward(&self, p: &[f64], x: &[f64]) -> (Vec<f64>, NormCache) {
        let d = self.dim;
        let gain = &p[self.g..self.g + d];
        let bias = &p[self.b..self.b + d];
        let n = x.len() / d;
        let mut y = vec![0.0; x.len()];
        let mut xhat = vec![0.0; x.len()];
        let mut inv_std = Vec::with_capacity(n);
        for r in 0..n {
            let row = &x[r * d..(r + 1) * d];
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let inv = 1.0 / (var + LN_EPS).sqrt();
            inv_std.push(inv);
            for j in 0..d {
                let h = (row[j] - mean) * inv;
                xhat[r * d + j] = h;
                y[r * d + j] = h * gain[j] + bias[j];
            }
        }
        (y, NormCache { xhat, inv_std })
    }

    pub fn backward(&self, p: &[f64], g: &mut [f64], cache: &NormCache, dy: &[f64]) -> Vec<f64> {
        let d = self.dim;
        let mut dx = vec![0.0; dy.len()];
        let mut dxhat = vec![0.0; d];
        for (r, &inv) in cache.inv_std.iter().enumerate() {
            let xh = &cache.xhat[r * d..(r + 1) * d];
            let dyr = &dy[r * d..(r + 1) * d];
            for j in 0..d {
                g[self.g + j] += dyr[j] * xh[j];
                g[self.b + j] += dyr[j];
                dxhat[j] = dyr[j] * p[self.g + j];
            }
            let mean_d = dxhat.iter().sum::<f64>() / d as f64;
            let mean_dx = dxhat.iter().zip(xh).map(|(a, b)| a * b).sum::<f64>() / d as f64;
            for j in 0..d {
                dx[r * d + j] = inv * (dxhat[j] - mean_d - xh[j] * mean_dx);
            }
        }
        dx
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

pub fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + 0.044715 * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FfnP {
    pub l1: LinearP,
    pub l2: LinearP,
}

pub struct FfnCache {
    pre: Vec<f64>,
    act: Vec<f64>,
}

impl FfnP {
    pub fn forward(&self, p: &[f64], x: &[f64], n: usize) -> (Vec<f64>, FfnCache) {
        let pre = self.l1.forward(p, x, n);
        let act: Vec<f64> = pre.iter().map(|&v| gelu(v)).collect();
        let y = self.l2.forward(p, &act, n);
        (y, FfnCache { pre, act })
    }

    pub fn backward(&self, p: &[f64], g: &mut [f64], x: &[f64], n: usize, cache: &FfnCache, dy: &[f64]) -> Vec<f64> {
        let mut dact = self.l2.backward(p, g, &cache.act, n, dy);
        dact.iter_mut().zip(&cache.pre).for_each(|(d, &v)| *d *= gelu_grad(v));
        self.l1.backward(p, g, x, n, &dact)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AttnP {
    pub q: LinearP,
    pub k: LinearP,
    pub v: LinearP,
    pub o: LinearP,
    pub heads: usize,
}

pub struct AttnCache {
    q: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
    /// Attention weights per head, `nq×nk` each.
    probs: Vec<Vec<f64>>,
    concat: Vec<f64>,
}

/// Scaled dot-product attention over already projected `q` (`nq×d`), `k`, `v` (`nk×d`).
///
/// With `causal`, query `i` sees keys `0..=i + (nk - nq)`.
pub fn attention_core(q: &[f64], k: &[f64], v: &[f64], d: usize, heads: usize, causal: bool) -> (Vec<f64>, Vec<Vec<f64>>) {
    let nq = q.len() / d;
    let nk = k.len() / d;
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut concat = vec![0.0; nq * d];
    let mut probs = Vec::with_capacity(heads);
    for h in 0..heads {
        let qh = take_cols(q, d, h * dh, dh);
        let kh = take_cols(k, d, h * dh, dh);
        let vh = take_cols(v, d, h * dh, dh);
        let mut s = vec![0.0; nq * nk];
        gemm(nq, dh, nk, &qh, false, &kh, true, 0.0, &mut s);
        for i in 0..nq {
            let row = &mut s[i * nk..(i + 1) * nk];
            row.iter_mut().for_each(|x| *x *= scale);
            if causal {
                let last = i + (nk - nq);
                row[last + 1..].iter_mut().for_each(|x| *x = f64::NEG_INFINITY);
            }
            softmax_in_place(row);
        }
        let mut oh = vec![0.0; nq * dh];
        gemm(nq, nk, dh, &s, false, &vh, false, 0.0, &mut oh);
        put_cols(&mut concat, d, h * dh, &oh);
        probs.push(s);
    }
    (concat, probs)
}

impl AttnP {
    pub fn forward(&self, p: &[f64], xq: &[f64], xkv: &[f64], causal: bool) -> (Vec<f64>, AttnCache) {
        let d = self.q.din;
        let (nq, nk) = (xq.len() / d, xkv.len() / d);
        let q = self.q.forward(p, xq, nq);
        let k = self.k.forward(p, xkv, nk);
        let v = self.v.forward(p, xkv, nk);
        let (concat, probs) = attention_core(&q, &k, &v, d, self.heads, causal);
        let out = self.o.forward(p, &concat, nq);
        (out, AttnCache { q, k, v, probs, concat })
    }

    /// Returns (dxq, dxkv).
    pub fn backward(&self, p: &[f64], g: &mut [f64], xq: &[f64], xkv: &[f64], cache: &AttnCache, dout: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let d = self.q.din;
        let (nq, nk) = (xq.len() / d, xkv.len() / d);
        let dh = d / self.heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let dconcat = self.o.backward(p, g, &cache.concat, nq, dout);
        let mut dq = vec![0.0; nq * d];
        let mut dk = vec![0.0; nk * d];
        let mut dv = vec![0.0; nk * d];
        for h in 0..self.heads {
            let qh = take_cols(&cache.q, d, h * dh, dh);
            let kh = take_cols(&cache.k, d, h * dh, dh);
            let vh = take_cols(&cache.v, d, h * dh, dh);
            let doh = take_cols(&dconcat, d, h * dh, dh);
            let pr = &cache.probs[h];
            let mut dp = vec![0.0; nq * nk];
            gemm(nq, dh, nk, &doh, false, &vh, true, 0.0, &mut dp);
            let mut dvh = vec![0.0; nk * dh];
            gemm(nk, nq, dh, pr, true, &doh, false, 0.0, &mut dvh);
            let mut ds = dp;
            for i in 0..nq {
                let prow = &pr[i * nk..(i + 1) * nk];
                let drow = &mut ds[i * nk..(i + 1) * nk];
                let dot: f64 = prow.iter().zip(drow.iter()).map(|(a, b)| a * b).sum();
                for (x, &pv) in drow.iter_mut().zip(prow) {
                    *x = pv * (*x - dot) * scale;
                }
            }
            let mut dqh = vec![0.0; nq * dh];
            gemm(nq, nk, dh, &ds, false, &kh, false, 0.0, &mut dqh);
            let mut dkh = vec![0.0; nk * dh];
            gemm(nk, nq, dh, &ds, true, &qh, false, 0.0, &mut dkh);
            put_cols(&mut dq, d, h * dh, &dqh);
            put_cols(&mut dk, d, h * dh, &dkh);
            put_cols(&mut dv, d, h * dh, &dvh);
        }
        let dxq = self.q.backward(p, g, xq, nq, &dq);
        let mut dxkv = self.k.backward(p, g, xkv, nk, &dk);
        add_into(&mut dxkv, &self.v.backward(p, g, xkv, nk, &dv));
        (dxq, dxkv)
    }
}

use crate::error::{contract, shape_err, Result};
use crate::graph::{GradSink, Graph, Op, Var};
use crate::ops::activation::softmax_in_place;

pub(crate) struct LayerNormCache {
    x: Var,
    gamma: Var,
    beta: Var,
    xhat: Vec<f64>,
    rstd: Vec<f64>,
}

pub(crate) struct AttentionCache {
    q: Var,
    k: Var,
    v: Var,
    segments: Vec<(usize, usize)>,
    heads: usize,
    /// Attention weights, per segment then per head, each `len × len`.
    probs: Vec<f64>,
}

impl Graph<'_> {
    /// Normalizes each row over the last axis, then applies `gamma`/`beta`.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
        let width = match self.shape(x).last() {
            Some(&w) if w > 0 => w,
            _ => return shape_err("layer_norm", &[self.shape(x)]),
        };
        if self.shape(gamma) != [width] || self.shape(beta) != [width] {
            return shape_err(
                "layer_norm",
                &[self.shape(x), self.shape(gamma), self.shape(beta)],
            );
        }
        let xv = self.value(x);
        let (gv, bv) = (self.value(gamma), self.value(beta));
        let rows = xv.len() / width;
        let mut xhat = Vec::with_capacity(xv.len());
        let mut rstd = Vec::with_capacity(rows);
        let mut out = Vec::with_capacity(xv.len());
        for row in xv.chunks(width) {
            let mean = row.iter().sum::<f64>() / width as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / width as f64;
            let r = 1.0 / (var + eps).sqrt();
            rstd.push(r);
            for (i, v) in row.iter().enumerate() {
                let h = (v - mean) * r;
                xhat.push(h);
                out.push(h * gv[i] + bv[i]);
            }
        }
        let shape = self.shape(x).to_vec();
        let cache = LayerNormCache {
            x,
            gamma,
            beta,
            xhat,
            rstd,
        };
        Ok(self.push(shape, out, Op::LayerNorm(cache), &[x, gamma, beta]))
    }

    /// Multi-head scaled dot-product attention restricted to segments.
    ///
    /// `q`, `k`, `v` are `(t, d)`. Each `(start, len)` segment is a block of
    /// rows that attend only to each other; rows outside every segment
    /// neither attend nor are attended to and produce zero output.
    pub fn attention(
        &mut self,
        q: Var,
        k: Var,
        v: Var,
        segments: &[(usize, usize)],
        heads: usize,
    ) -> Result<Var> {
        let (t, d) = match self.shape(q) {
            [t, d] => (*t, *d),
            s => return shape_err("attention", &[s]),
        };
        if self.shape(k) != [t, d] || self.shape(v) != [t, d] {
            return shape_err("attention", &[self.shape(q), self.shape(k), self.shape(v)]);
        }
        if heads == 0 || d % heads != 0 {
            return contract("attention", format!("width {d} not divisible by {heads} heads"));
        }
        let mut covered = vec![false; t];
        for &(start, len) in segments {
            if len == 0 || start + len > t {
                return contract("attention", format!("segment ({start}, {len}) outside {t} rows"));
            }
            for c in &mut covered[start..start + len] {
                if std::mem::replace(c, true) {
                    return contract("attention", "overlapping segments");
                }
            }
        }
        let dh = d / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let (qv, kv, vv) = (self.value(q), self.value(k), self.value(v));
        let mut out = vec![0.0; t * d];
        let mut probs = Vec::new();
        for &(start, len) in segments {
            for h in 0..heads {
                let off = h * dh;
                let base = probs.len();
                probs.resize(base + len * len, 0.0);
                let p = &mut probs[base..];
                for a in 0..len {
                    let qrow = &qv[(start + a) * d + off..(start + a) * d + off + dh];
                    let prow = &mut p[a * len..(a + 1) * len];
                    for (b, s) in prow.iter_mut().enumerate() {
                        let krow = &kv[(start + b) * d + off..(start + b) * d + off + dh];
                        *s = qrow.iter().zip(krow).map(|(x, y)| x * y).sum::<f64>() * scale;
                    }
                    softmax_in_place(prow);
                    let orow = &mut out[(start + a) * d + off..(start + a) * d + off + dh];
                    for (b, &w) in prow.iter().enumerate() {
                        let vrow = &vv[(start + b) * d + off..(start + b) * d + off + dh];
                        for (o, x) in orow.iter_mut().zip(vrow) {
                            *o += w * x;
                        }
                    }
                }
            }
        }
        let cache = AttentionCache {
            q,
            k,
            v,
            segments: segments.to_vec(),
            heads,
            probs,
        };
        Ok(self.push(vec![t, d], out, Op::Attention(cache), &[q, k, v]))
    }
}

pub(crate) fn backward(op: &Op, out_shape: &[usize], g: &[f64], sink: &mut GradSink<'_, '_>) {
    match op {
        Op::LayerNorm(c) => layer_norm_backward(c, out_shape, g, sink),
        Op::Attention(c) => attention_backward(c, out_shape, g, sink),
        _ => unreachable!("not an nn op"),
    }
}

fn layer_norm_backward(c: &LayerNormCache, shape: &[usize], g: &[f64], sink: &mut GradSink<'_, '_>) {
    let width = *shape.last().unwrap();
    let gamma = sink.value(c.gamma);
    if let Some(dg) = sink.slot(c.gamma) {
        for (grow, hrow) in g.chunks(width).zip(c.xhat.chunks(width)) {
            for ((d, gv), h) in dg.iter_mut().zip(grow).zip(hrow) {
                *d += gv * h;
            }
        }
    }
    if let Some(db) = sink.slot(c.beta) {
        for grow in g.chunks(width) {
            for (d, gv) in db.iter_mut().zip(grow) {
                *d += gv;
            }
        }
    }
    if let Some(dx) = sink.slot(c.x) {
        let n = width as f64;
        for (((dxrow, grow), hrow), &r) in dx
            .chunks_mut(width)
            .zip(g.chunks(width))
            .zip(c.xhat.chunks(width))
            .zip(&c.rstd)
        {
            let mut mean_dh = 0.0;
            let mut mean_dh_h = 0.0;
            for i in 0..width {
                let dh = grow[i] * gamma[i];
                mean_dh += dh;
                mean_dh_h += dh * hrow[i];
            }
            mean_dh /= n;
            mean_dh_h /= n;
            for i in 0..width {
                let dh = grow[i] * gamma[i];
                dxrow[i] += r * (dh - mean_dh - hrow[i] * mean_dh_h);
            }
        }
    }
}

fn attention_backward(c: &AttentionCache, shape: &[usize], g: &[f64], sink: &mut GradSink<'_, '_>) {
    let d = shape[1];
    let dh = d / c.heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let (qv, kv, vv) = (sink.value(c.q), sink.value(c.k), sink.value(c.v));
    let t = shape[0];
    let mut dq = vec![0.0; t * d];
    let mut dk = vec![0.0; t * d];
    let mut dv = vec![0.0; t * d];
    let mut base = 0;
    for &(start, len) in &c.segments {
        for h in 0..c.heads {
            let off = h * dh;
            let p = &c.probs[base..base + len * len];
            base += len * len;
            let row = |i: usize| (start + i) * d + off;
            let mut ds = vec![0.0; len * len];
            for a in 0..len {
                let ga = &g[row(a)..row(a) + dh];
                let mut dot = 0.0;
                for b in 0..len {
                    let vb = &vv[row(b)..row(b) + dh];
                    let dp: f64 = ga.iter().zip(vb).map(|(x, y)| x * y).sum();
                    ds[a * len + b] = dp;
                    dot += dp * p[a * len + b];
                    let w = p[a * len + b];
                    let o = row(b);
                    for (dvv, gv) in dv[o..o + dh].iter_mut().zip(ga) {
                        *dvv += w * gv;
                    }
                }
                for b in 0..len {
                    let pv = p[a * len + b];
                    ds[a * len + b] = pv * (ds[a * len + b] - dot) * scale;
                }
            }
            for a in 0..len {
                for b in 0..len {
                    let s = ds[a * len + b];
                    if s == 0.0 {
                        continue;
                    }
                    let (ra, rb) = (row(a), row(b));
                    for i in 0..dh {
                        dq[ra + i] += s * kv[rb + i];
                        dk[rb + i] += s * qv[ra + i];
                    }
                }
            }
        }
    }
    sink.add(c.q, &dq);
    sink.add(c.k, &dk);
    sink.add(c.v, &dv);
}

//! Gated recurrent unit recurrence as a single graph node.
//!
//! The input projection `x·W + b` is computed by ordinary graph ops and
//! passed in as a `(len, 3h)` matrix laid out as `[update | reset | candidate]`.
//! Per step, with `h` the previous state:
//!
//! ```text
//! z  = σ(a_z + h·U_z)
//! r  = σ(a_r + h·U_r)
//! n  = tanh(a_n + (r ⊙ h)·U_n)
//! h' = z ⊙ h + (1 − z) ⊙ n
//! ```
//!
//! `U_z` and `U_r` are stored side by side as `u_gates: (h, 2h)`.

use crate::error::{shape_err, Result};
use crate::graph::{GradSink, Graph, Op, Var};
use crate::ops::activation::sigmoid;

pub(crate) struct GruCache {
    inputs: Var,
    u_gates: Var,
    u_cand: Var,
    reverse: bool,
    /// Per processed step: z, r, n, previous state, each of width h.
    z: Vec<f64>,
    r: Vec<f64>,
    n: Vec<f64>,
    prev: Vec<f64>,
}

/// Positions in processing order.
fn order(len: usize, reverse: bool) -> Box<dyn Iterator<Item = usize>> {
    if reverse {
        Box::new((0..len).rev())
    } else {
        Box::new(0..len)
    }
}

impl Graph<'_> {
    /// Runs the recurrence from a zero state. The output row `t` is the state
    /// after consuming position `t`; with `reverse` the sequence is consumed
    /// from the last position to the first.
    pub fn gru(&mut self, inputs: Var, u_gates: Var, u_cand: Var, reverse: bool) -> Result<Var> {
        let (len, h) = match (self.shape(inputs), self.shape(u_gates), self.shape(u_cand)) {
            ([l, w], [h1, w2], [h2, h3])
                if *w == 3 * *h1 && *w2 == 2 * *h1 && h2 == h1 && h3 == h1 && *l > 0 =>
            {
                (*l, *h1)
            }
            (a, b, c) => return shape_err("gru", &[a, b, c]),
        };
        let (a, ug, uc) = (self.value(inputs), self.value(u_gates), self.value(u_cand));
        let mut out = vec![0.0; len * h];
        let mut z = Vec::with_capacity(len * h);
        let mut r = Vec::with_capacity(len * h);
        let mut n = Vec::with_capacity(len * h);
        let mut prev = Vec::with_capacity(len * h);
        let mut state = vec![0.0; h];
        let mut gates = vec![0.0; 2 * h];
        let mut rh = vec![0.0; h];
        let mut cand = vec![0.0; h];
        for t in order(len, reverse) {
            let at = &a[t * 3 * h..(t + 1) * 3 * h];
            gates.copy_from_slice(&at[..2 * h]);
            for (i, &s) in state.iter().enumerate() {
                if s == 0.0 {
                    continue;
                }
                for (gv, &u) in gates.iter_mut().zip(&ug[i * 2 * h..(i + 1) * 2 * h]) {
                    *gv += s * u;
                }
            }
            let zt: Vec<f64> = gates[..h].iter().map(|&v| sigmoid(v)).collect();
            let rt: Vec<f64> = gates[h..].iter().map(|&v| sigmoid(v)).collect();
            for i in 0..h {
                rh[i] = rt[i] * state[i];
            }
            cand.copy_from_slice(&at[2 * h..]);
            for (i, &s) in rh.iter().enumerate() {
                if s == 0.0 {
                    continue;
                }
                for (c, &u) in cand.iter_mut().zip(&uc[i * h..(i + 1) * h]) {
                    *c += s * u;
                }
            }
            cand.iter_mut().for_each(|c| *c = c.tanh());
            prev.extend_from_slice(&state);
            for i in 0..h {
                state[i] = zt[i] * state[i] + (1.0 - zt[i]) * cand[i];
            }
            out[t * h..(t + 1) * h].copy_from_slice(&state);
            z.extend_from_slice(&zt);
            r.extend_from_slice(&rt);
            n.extend_from_slice(&cand);
        }
        let cache = GruCache {
            inputs,
            u_gates,
            u_cand,
            reverse,
            z,
            r,
            n,
            prev,
        };
        Ok(self.push(vec![len, h], out, Op::Gru(cache), &[inputs, u_gates, u_cand]))
    }
}

pub(crate) fn backward(c: &GruCache, out_shape: &[usize], g: &[f64], sink: &mut GradSink<'_, '_>) {
    let (len, h) = (out_shape[0], out_shape[1]);
    let (ug, uc) = (sink.value(c.u_gates), sink.value(c.u_cand));
    let mut da = vec![0.0; len * 3 * h];
    let mut dug = vec![0.0; h * 2 * h];
    let mut duc = vec![0.0; h * h];
    let mut carry = vec![0.0; h];
    let positions: Vec<usize> = order(len, c.reverse).collect();
    for (k, &t) in positions.iter().enumerate().rev() {
        let z = &c.z[k * h..(k + 1) * h];
        let r = &c.r[k * h..(k + 1) * h];
        let n = &c.n[k * h..(k + 1) * h];
        let hp = &c.prev[k * h..(k + 1) * h];
        let dh: Vec<f64> = (0..h).map(|i| g[t * h + i] + carry[i]).collect();
        let mut next = vec![0.0; h];
        let mut dgates = vec![0.0; 2 * h];
        let mut dn_pre = vec![0.0; h];
        for i in 0..h {
            let dz = dh[i] * (hp[i] - n[i]);
            let dn = dh[i] * (1.0 - z[i]);
            next[i] = dh[i] * z[i];
            dn_pre[i] = dn * (1.0 - n[i] * n[i]);
            dgates[i] = dz * z[i] * (1.0 - z[i]);
        }
        // Candidate path: d(r ⊙ h) = dn_pre · U_nᵀ.
        for i in 0..h {
            let urow = &uc[i * h..(i + 1) * h];
            let drh: f64 = urow.iter().zip(&dn_pre).map(|(u, d)| u * d).sum();
            let rh = r[i] * hp[i];
            if rh != 0.0 {
                for (d, &dp) in duc[i * h..(i + 1) * h].iter_mut().zip(&dn_pre) {
                    *d += rh * dp;
                }
            }
            dgates[h + i] = drh * hp[i] * r[i] * (1.0 - r[i]);
            next[i] += drh * r[i];
        }
        // Gate path: d(h) += dgates · U_gᵀ.
        for i in 0..h {
            let urow = &ug[i * 2 * h..(i + 1) * 2 * h];
            next[i] += urow.iter().zip(&dgates).map(|(u, d)| u * d).sum::<f64>();
            if hp[i] != 0.0 {
                for (d, &dg) in dug[i * 2 * h..(i + 1) * 2 * h].iter_mut().zip(&dgates) {
                    *d += hp[i] * dg;
                }
            }
        }
        let row = &mut da[t * 3 * h..(t + 1) * 3 * h];
        row[..2 * h].copy_from_slice(&dgates);
        row[2 * h..].copy_from_slice(&dn_pre);
        carry = next;
    }
    sink.add(c.inputs, &da);
    sink.add(c.u_gates, &dug);
    sink.add(c.u_cand, &duc);
}

use crate::error::{contract, shape_err, Result};
use crate::graph::{GradSink, Graph, Op, Var};
use crate::ops::activation::{sigmoid, softmax_in_place};

pub(crate) struct CrossEntropyCache {
    logits: Var,
    targets: Vec<Option<usize>>,
    probs: Vec<f64>,
    count: usize,
}

pub(crate) struct BceCache {
    logits: Var,
    targets: Vec<Option<f64>>,
    count: usize,
}

impl Graph<'_> {
    /// Mean categorical cross-entropy over the rows of `(r, c)` logits whose
    /// target is present. Rows with `None` contribute nothing.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[Option<usize>]) -> Result<Var> {
        let (rows, classes) = match self.shape(logits) {
            [r, c] if *r == targets.len() && *c > 0 => (*r, *c),
            s => return shape_err("cross_entropy", &[s, &[targets.len()]]),
        };
        if let Some(bad) = targets.iter().flatten().find(|&&t| t >= classes) {
            return contract("cross_entropy", format!("target {bad} out of {classes} classes"));
        }
        let count = targets.iter().filter(|t| t.is_some()).count();
        if count == 0 {
            return contract("cross_entropy", "no targets present");
        }
        let mut probs = self.value(logits).to_vec();
        let mut total = 0.0;
        for (r, row) in probs.chunks_mut(classes).enumerate() {
            let Some(t) = targets[r] else { continue };
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            total += lse - row[t];
            softmax_in_place(row);
        }
        debug_assert_eq!(probs.len(), rows * classes);
        let cache = CrossEntropyCache {
            logits,
            targets: targets.to_vec(),
            probs,
            count,
        };
        Ok(self.push(
            Vec::new(),
            vec![total / count as f64],
            Op::CrossEntropy(cache),
            &[logits],
        ))
    }

    /// Mean sigmoid cross-entropy over the logits whose 0/1 target is present.
    pub fn bce_with_logits(&mut self, logits: Var, targets: &[Option<f64>]) -> Result<Var> {
        if self.value(logits).len() != targets.len() {
            return shape_err("bce_with_logits", &[self.shape(logits), &[targets.len()]]);
        }
        let count = targets.iter().filter(|t| t.is_some()).count();
        if count == 0 {
            return contract("bce_with_logits", "no targets present");
        }
        let total: f64 = self
            .value(logits)
            .iter()
            .zip(targets)
            .filter_map(|(&x, t)| t.map(|t| x.max(0.0) - x * t + (-x.abs()).exp().ln_1p()))
            .sum();
        let cache = BceCache {
            logits,
            targets: targets.to_vec(),
            count,
        };
        Ok(self.push(
            Vec::new(),
            vec![total / count as f64],
            Op::BceWithLogits(cache),
            &[logits],
        ))
    }
}

pub(crate) fn backward(op: &Op, g: &[f64], sink: &mut GradSink<'_, '_>) {
    match op {
        Op::CrossEntropy(c) => {
            let classes = c.probs.len() / c.targets.len();
            let scale = g[0] / c.count as f64;
            if let Some(dx) = sink.slot(c.logits) {
                for (r, t) in c.targets.iter().enumerate() {
                    let Some(t) = *t else { continue };
                    let row = &c.probs[r * classes..(r + 1) * classes];
                    for (j, p) in row.iter().enumerate() {
                        let onehot = if j == t { 1.0 } else { 0.0 };
                        dx[r * classes + j] += scale * (p - onehot);
                    }
                }
            }
        }
        Op::BceWithLogits(c) => {
            let xv = sink.value(c.logits);
            let scale = g[0] / c.count as f64;
            if let Some(dx) = sink.slot(c.logits) {
                for ((d, &x), t) in dx.iter_mut().zip(xv).zip(&c.targets) {
                    if let Some(t) = t {
                        *d += scale * (sigmoid(x) - t);
                    }
                }
            }
        }
        _ => unreachable!("not a loss op"),
    }
}

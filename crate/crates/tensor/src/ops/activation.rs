use crate::error::{shape_err, Result};
use crate::graph::{GradSink, Graph, Op, Var};

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_K: f64 = 0.044_715;

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_K * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + GELU_K * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_K * x * x)
}

impl Graph<'_> {
    fn unary(&mut self, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let out = self.value(x).iter().map(|&v| f(v)).collect();
        let shape = self.shape(x).to_vec();
        self.push(shape, out, op, &[x])
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, sigmoid, Op::Sigmoid(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, f64::tanh, Op::Tanh(x))
    }

    /// Tanh-approximated GELU.
    pub fn gelu(&mut self, x: Var) -> Var {
        self.unary(x, gelu, Op::Gelu(x))
    }

    /// Softmax over the last axis.
    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        let width = match self.shape(x).last() {
            Some(&w) if w > 0 => w,
            _ => return shape_err("softmax", &[self.shape(x)]),
        };
        let mut out = self.value(x).to_vec();
        out.chunks_mut(width).for_each(softmax_in_place);
        let shape = self.shape(x).to_vec();
        Ok(self.push(shape, out, Op::Softmax(x), &[x]))
    }
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in row.iter_mut() {
        *v /= total;
    }
}

pub(crate) fn backward(
    op: &Op,
    out_shape: &[usize],
    out: &[f64],
    g: &[f64],
    sink: &mut GradSink<'_, '_>,
) {
    match op {
        Op::Sigmoid(x) => {
            if let Some(dx) = sink.slot(*x) {
                for ((d, &y), &gv) in dx.iter_mut().zip(out).zip(g) {
                    *d += gv * y * (1.0 - y);
                }
            }
        }
        Op::Tanh(x) => {
            if let Some(dx) = sink.slot(*x) {
                for ((d, &y), &gv) in dx.iter_mut().zip(out).zip(g) {
                    *d += gv * (1.0 - y * y);
                }
            }
        }
        Op::Gelu(x) => {
            let xv = sink.value(*x);
            if let Some(dx) = sink.slot(*x) {
                for ((d, &v), &gv) in dx.iter_mut().zip(xv).zip(g) {
                    *d += gv * gelu_grad(v);
                }
            }
        }
        Op::Softmax(x) => {
            let width = *out_shape.last().unwrap();
            if let Some(dx) = sink.slot(*x) {
                for ((drow, yrow), grow) in dx
                    .chunks_mut(width)
                    .zip(out.chunks(width))
                    .zip(g.chunks(width))
                {
                    let dot: f64 = yrow.iter().zip(grow).map(|(y, g)| y * g).sum();
                    for ((d, &y), &gv) in drow.iter_mut().zip(yrow).zip(grow) {
                        *d += y * (gv - dot);
                    }
                }
            }
        }
        _ => unreachable!("not an activation op"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Tensor;

    #[test]
    fn softmax_of_equal_logits_is_uniform() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::vector(vec![0.0, 0.0, 0.0]));
        let y = g.softmax(x).unwrap();
        for v in g.value(y) {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_is_stable_for_large_logits() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::vector(vec![1000.0, 1000.0]));
        let y = g.softmax(x).unwrap();
        assert_eq!(g.value(y), &[0.5, 0.5]);
    }

    #[test]
    fn sigmoid_is_symmetric() {
        for x in [-40.0, -3.0, 0.0, 2.5, 40.0] {
            assert!((sigmoid(x) + sigmoid(-x) - 1.0).abs() < 1e-15);
        }
        assert_eq!(sigmoid(0.0), 0.5);
    }

    #[test]
    fn gelu_matches_reference_points() {
        assert_eq!(gelu(0.0), 0.0);
        assert!((gelu(1.0) - 0.841_191_990_607_477_2).abs() < 1e-12);
        assert!((gelu_grad(0.0) - 0.5).abs() < 1e-15);
    }
}

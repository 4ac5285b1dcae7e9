pub(crate) mod activation;
pub(crate) mod basic;
pub(crate) mod loss;
pub(crate) mod nn;
pub(crate) mod recurrent;

use crate::graph::{GradSink, Node, Op};

pub(crate) fn backward(node: &Node<'_>, g: &[f64], sink: &mut GradSink<'_, '_>) {
    let shape = &node.shape;
    match &node.op {
        Op::Leaf => {}
        Op::Sigmoid(_) | Op::Tanh(_) | Op::Gelu(_) | Op::Softmax(_) => {
            activation::backward(&node.op, shape, &node.value, g, sink)
        }
        Op::LayerNorm(_) | Op::Attention(_) => nn::backward(&node.op, shape, g, sink),
        Op::CrossEntropy(_) | Op::BceWithLogits(_) => loss::backward(&node.op, g, sink),
        Op::Gru(c) => recurrent::backward(c, shape, g, sink),
        Op::Custom(inputs, f) => {
            let values: Vec<&[f64]> = inputs.iter().map(|&v| sink.value(v)).collect();
            let deltas = f(&values, &node.value, g);
            for (&v, d) in inputs.iter().zip(&deltas) {
                sink.add(v, d);
            }
        }
        op => basic::backward(op, shape, g, sink),
    }
}

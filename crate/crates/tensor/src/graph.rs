use std::borrow::Cow;
use std::fmt;

use crate::error::{Result, TensorError};
use crate::ops;
use crate::tensor::Tensor;

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Backward closure of a user-defined op: `(inputs, output, output_grad)` to
/// one gradient per input.
pub type CustomBackward =
    Box<dyn Fn(&[&[f64]], &[f64], &[f64]) -> Vec<Vec<f64>> + Send + Sync + 'static>;

pub(crate) enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceRows(Var, usize),
    SliceCols(Var, usize),
    GatherRows(Var, Vec<usize>),
    ScatterRows(Var, Vec<usize>),
    Sigmoid(Var),
    Tanh(Var),
    Gelu(Var),
    Softmax(Var),
    LayerNorm(ops::nn::LayerNormCache),
    Attention(ops::nn::AttentionCache),
    Sum(Var),
    MaskedMean(Var, Vec<bool>),
    CrossEntropy(ops::loss::CrossEntropyCache),
    BceWithLogits(ops::loss::BceCache),
    Gru(ops::recurrent::GruCache),
    Custom(Vec<Var>, CustomBackward),
}

pub(crate) struct Node<'a> {
    pub(crate) shape: Vec<usize>,
    pub(crate) value: Cow<'a, [f64]>,
    pub(crate) op: Op,
    pub(crate) tracked: bool,
}

/// Define-by-run record of executed operations.
///
/// Nodes are appended in execution order, so every node comes after the
/// producers of its inputs and reverse index order is a valid backward
/// schedule. Leaves borrow their data from the caller's tensors.
pub struct Graph<'a> {
    pub(crate) nodes: Vec<Node<'a>>,
    grad_enabled: bool,
}

impl Default for Graph<'_> {
    fn default() -> Self {
        Self::new()
    }
}

impl fmt::Debug for Graph<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Graph")
            .field("nodes", &self.nodes.len())
            .field("grad_enabled", &self.grad_enabled)
            .finish()
    }
}

impl<'a> Graph<'a> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            grad_enabled: true,
        }
    }

    /// A graph that never tracks gradients, for evaluation passes.
    pub fn inference() -> Self {
        Self {
            nodes: Vec::new(),
            grad_enabled: false,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Registers a borrowed tensor. Tracked iff the tensor requires grad.
    pub fn leaf(&mut self, t: &'a Tensor) -> Var {
        let tracked = self.grad_enabled && t.requires_grad();
        self.nodes.push(Node {
            shape: t.shape().to_vec(),
            value: Cow::Borrowed(t.data()),
            op: Op::Leaf,
            tracked,
        });
        Var(self.nodes.len() - 1)
    }

    /// Registers an owned value that never receives a gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        let shape = t.shape().to_vec();
        self.nodes.push(Node {
            shape,
            value: Cow::Owned(t.into_data()),
            op: Op::Leaf,
            tracked: false,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[0]
    }

    pub fn is_tracked(&self, v: Var) -> bool {
        self.nodes[v.0].tracked
    }

    pub fn to_tensor(&self, v: Var) -> Tensor {
        let n = &self.nodes[v.0];
        Tensor::new(n.shape.clone(), n.value.to_vec()).expect("node shape is consistent")
    }

    pub(crate) fn push(&mut self, shape: Vec<usize>, value: Vec<f64>, op: Op, inputs: &[Var]) -> Var {
        debug_assert_eq!(shape.iter().product::<usize>(), value.len());
        let tracked = self.grad_enabled && inputs.iter().any(|v| self.nodes[v.0].tracked);
        self.nodes.push(Node {
            shape,
            value: Cow::Owned(value),
            op,
            tracked,
        });
        Var(self.nodes.len() - 1)
    }

    /// Records an op whose forward value is computed by the caller and whose
    /// vector-Jacobian product is given by `backward`.
    pub fn custom(
        &mut self,
        inputs: &[Var],
        shape: Vec<usize>,
        value: Vec<f64>,
        backward: CustomBackward,
    ) -> Result<Var> {
        if shape.iter().product::<usize>() != value.len() {
            return crate::error::shape_err("custom", &[&shape, &[value.len()]]);
        }
        Ok(self.push(shape, value, Op::Custom(inputs.to_vec(), backward), inputs))
    }

    /// Reverse sweep from a scalar root. Returns the gradient of the root
    /// with respect to every tracked node it reaches.
    pub fn backward(&self, root: Var) -> Result<Gradients> {
        let root_node = &self.nodes[root.0];
        if root_node.value.len() != 1 {
            return Err(TensorError::NonScalarRoot(root_node.shape.clone()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = Vec::new();
        grads.resize_with(root.0 + 1, || None);
        if !root_node.tracked {
            return Ok(Gradients { grads });
        }
        grads[root.0] = Some(vec![1.0]);
        for i in (0..=root.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.tracked {
                continue;
            }
            let mut sink = GradSink {
                grads: &mut grads,
                nodes: &self.nodes,
            };
            ops::backward(node, &g, &mut sink);
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }
}

/// Accumulates input gradients during the reverse sweep.
pub(crate) struct GradSink<'g, 'a> {
    grads: &'g mut Vec<Option<Vec<f64>>>,
    nodes: &'g [Node<'a>],
}

impl<'g> GradSink<'g, '_> {
    pub(crate) fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].tracked
    }

    pub(crate) fn value(&self, v: Var) -> &'g [f64] {
        let nodes: &'g [Node<'_>] = self.nodes;
        &nodes[v.0].value
    }

    pub(crate) fn shape(&self, v: Var) -> &'g [usize] {
        let nodes: &'g [Node<'_>] = self.nodes;
        &nodes[v.0].shape
    }

    /// Mutable gradient buffer for `v`, or `None` if `v` is untracked.
    pub(crate) fn slot(&mut self, v: Var) -> Option<&mut [f64]> {
        if !self.nodes[v.0].tracked {
            return None;
        }
        let n = self.nodes[v.0].value.len();
        Some(self.grads[v.0].get_or_insert_with(|| vec![0.0; n]))
    }

    pub(crate) fn add(&mut self, v: Var, delta: &[f64]) {
        if let Some(g) = self.slot(v) {
            for (a, d) in g.iter_mut().zip(delta) {
                *a += d;
            }
        }
    }
}

/// Result of [`Graph::backward`].
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// Gradient for `v`, or `None` when the root does not depend on it.
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Adds the gradient of `v` into the accumulator of `t`. Returns whether
    /// a gradient reached `v`.
    pub fn accumulate_into(&self, v: Var, t: &mut Tensor) -> Result<bool> {
        match self.get(v) {
            Some(g) => {
                t.accumulate_grad(g)?;
                Ok(true)
            }
            None => Ok(false),
        }
    }
}


use super::{numel, ParamId, ParamStore, Real, Result, TensorError};
use alloc::vec;
use alloc::vec::Vec;

/// Handle to a node on a [`Graph`]. Only meaningful for the graph that issued it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(pub(crate) usize);

#[derive(Debug, Clone)]
pub(crate) enum Op<F> {
    Leaf,
    Add(Var, Var),
    MulScalar(Var, F),
    AddBias { x: Var, bias: Var },
    Relu(Var),
    Sigmoid(Var),
    Square(Var),
    LogEps(Var, F),
    Matmul(Var, Var),
    Reshape(Var),
    Concat { a: Var, b: Var },
    Conv1d { x: Var, w: Var, stride: usize, padding: usize },
    ConvTranspose1d { x: Var, w: Var, stride: usize, padding: usize },
    Conv2d { x: Var, w: Var },
    InstanceNorm { x: Var, gain: Var, bias: Var, mean: Vec<F>, inv_std: Vec<F> },
    MaxPool { x: Var, argmax: Vec<usize> },
    Frames { x: Var, win: usize, hop: usize },
    Sum(Var),
    Mean(Var),
    L1(Var, Var),
    Bce { p: Var, targets: Vec<F> },
}

#[derive(Debug, Clone)]
pub(crate) struct Node<F> {
    pub shape: Vec<usize>,
    pub value: Vec<F>,
    pub op: Op<F>,
    pub requires_grad: bool,
    /// Accumulated gradient; only leaves keep one across backward calls.
    pub grad: Option<Vec<F>>,
}

/// Tape of tensor operations for one forward/backward pass.
#[derive(Debug, Clone, Default)]
pub struct Graph<F> {
    pub(crate) nodes: Vec<Node<F>>,
    bound: Vec<(Var, ParamId)>,
}

impl<F: Real> Graph<F> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            bound: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub(crate) fn node(&self, v: Var) -> &Node<F> {
        &self.nodes[v.0]
    }

    /// Appends a node after checking every value is finite.
    pub(crate) fn push(
        &mut self,
        op_name: &'static str,
        shape: Vec<usize>,
        value: Vec<F>,
        op: Op<F>,
        parents: &[Var],
    ) -> Result<Var> {
        debug_assert_eq!(value.len(), numel(&shape));
        if value.iter().any(|v| !v.is_finite()) {
            return Err(TensorError::NonFinite { op: op_name });
        }
        let requires_grad = parents.iter().any(|p| self.nodes[p.0].requires_grad);
        self.nodes.push(Node {
            shape,
            value,
            op,
            requires_grad,
            grad: None,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn leaf(&mut self, shape: &[usize], data: Vec<F>, requires_grad: bool) -> Result<Var> {
        if data.len() != numel(shape) {
            return Err(TensorError::DataLength {
                len: data.len(),
                shape: shape.to_vec(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(TensorError::NonFinite { op: "leaf" });
        }
        self.nodes.push(Node {
            shape: shape.to_vec(),
            value: data,
            op: Op::Leaf,
            requires_grad,
            grad: None,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn constant(&mut self, shape: &[usize], data: Vec<F>) -> Result<Var> {
        self.leaf(shape, data, false)
    }

    /// Brings a stored parameter onto the tape. A non-trainable binding is a
    /// constant: gradients still flow through the ops that use it but stop here.
    pub fn bind(&mut self, store: &ParamStore<F>, id: ParamId, trainable: bool) -> Var {
        let e = store.get(id);
        self.nodes.push(Node {
            shape: e.shape.clone(),
            value: e.value.clone(),
            op: Op::Leaf,
            requires_grad: trainable,
            grad: None,
        });
        let v = Var(self.nodes.len() - 1);
        if trainable {
            self.bound.push((v, id));
        }
        v
    }

    /// Same values, cut from the gradient flow.
    pub fn detach(&mut self, v: Var) -> Var {
        let n = &self.nodes[v.0];
        let node = Node {
            shape: n.shape.clone(),
            value: n.value.clone(),
            op: Op::Leaf,
            requires_grad: false,
            grad: None,
        };
        self.nodes.push(node);
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &[F] {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn scalar(&self, v: Var) -> F {
        self.nodes[v.0].value[0]
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Accumulated gradient of a leaf after [`Graph::backward`].
    pub fn grad(&self, v: Var) -> Option<&[F]> {
        self.nodes[v.0].grad.as_deref()
    }

    /// Clears accumulated leaf gradients.
    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
    }

    /// Reverse sweep from a scalar root. Leaf gradients add to whatever a
    /// previous call left there until [`Graph::zero_grad`].
    pub fn backward(&mut self, root: Var) -> Result<()> {
        let root_shape = &self.nodes[root.0].shape;
        if numel(root_shape) != 1 {
            return Err(TensorError::NotScalar(root_shape.clone()));
        }
        let mut grads: Vec<Option<Vec<F>>> = vec![None; root.0 + 1];
        grads[root.0] = Some(vec![F::one()]);
        let mut leaf_grads = Vec::new();
        for i in (0..=root.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if !self.nodes[i].requires_grad {
                continue;
            }
            if matches!(self.nodes[i].op, Op::Leaf) {
                leaf_grads.push((i, g));
            } else {
                self.backward_op(i, &g, &mut grads);
            }
        }
        for (i, g) in leaf_grads {
            match &mut self.nodes[i].grad {
                Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += *b),
                slot @ None => *slot = Some(g),
            }
        }
        Ok(())
    }

    /// Adds the gradients of every trainable binding into the store.
    pub fn accumulate_param_grads(&self, store: &mut ParamStore<F>) {
        for &(v, id) in &self.bound {
            let entry = store.get_mut(id);
            entry.has_grad = true;
            if let Some(g) = &self.nodes[v.0].grad {
                entry.grad.iter_mut().zip(g).for_each(|(a, b)| *a += *b);
            }
        }
    }

    /// Gradient slot of `v`, allocated as zeros on first use.
    pub(crate) fn slot<'a>(&self, grads: &'a mut [Option<Vec<F>>], v: Var) -> Option<&'a mut [F]> {
        if !self.nodes[v.0].requires_grad {
            return None;
        }
        let len = self.nodes[v.0].value.len();
        Some(grads[v.0].get_or_insert_with(|| vec![F::zero(); len]))
    }
}

use super::{numel, Real, Result, TensorError};
use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamEntry<F> {
    pub name: String,
    pub shape: Vec<usize>,
    pub value: Vec<F>,
    pub grad: Vec<F>,
    /// Set when a backward pass deposits a gradient, cleared by `zero_grad`.
    pub has_grad: bool,
}

/// Named learnable arrays. Names are unique and stable; checkpoints key on them.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore<F> {
    entries: Vec<ParamEntry<F>>,
    index: BTreeMap<String, usize>,
}

impl<F: Real> ParamStore<F> {
    pub fn new() -> Self {
        Self {
            entries: Vec::new(),
            index: BTreeMap::new(),
        }
    }

    /// Registers a parameter. Panics on a duplicate name, which is a model wiring bug.
    pub fn add(&mut self, name: &str, shape: &[usize], value: Vec<F>) -> Result<ParamId> {
        if value.len() != numel(shape) {
            return Err(TensorError::DataLength {
                len: value.len(),
                shape: shape.to_vec(),
            });
        }
        assert!(!self.index.contains_key(name), "duplicate parameter {name}");
        let id = self.entries.len();
        self.entries.push(ParamEntry {
            name: name.to_string(),
            shape: shape.to_vec(),
            grad: vec![F::zero(); value.len()],
            value,
            has_grad: false,
        });
        self.index.insert(name.to_string(), id);
        Ok(ParamId(id))
    }

    pub fn zeros(&mut self, name: &str, shape: &[usize]) -> Result<ParamId> {
        self.add(name, shape, vec![F::zero(); numel(shape)])
    }

    pub fn get(&self, id: ParamId) -> &ParamEntry<F> {
        &self.entries[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut ParamEntry<F> {
        &mut self.entries[id.0]
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).map(|&i| ParamId(i))
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        (0..self.entries.len()).map(ParamId)
    }

    /// Parameters whose name starts with `prefix`, in registration order.
    pub fn ids_with_prefix<'a>(&'a self, prefix: &'a str) -> impl Iterator<Item = ParamId> + 'a {
        self.entries
            .iter()
            .enumerate()
            .filter(move |(_, e)| e.name.starts_with(prefix))
            .map(|(i, _)| ParamId(i))
    }

    pub fn entries(&self) -> &[ParamEntry<F>] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.entries.iter().map(|e| e.value.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        for e in &mut self.entries {
            e.grad.iter_mut().for_each(|g| *g = F::zero());
            e.has_grad = false;
        }
    }

    pub fn scale_grads(&mut self, s: F) {
        for e in &mut self.entries {
            e.grad.iter_mut().for_each(|g| *g *= s);
        }
    }

    pub fn grad_norm(&self, ids: &[ParamId]) -> f64 {
        let sq: f64 = ids
            .iter()
            .flat_map(|&id| self.entries[id.0].grad.iter())
            .map(|g| {
                let g = g.as_f64();
                g * g
            })
            .sum();
        libm::sqrt(sq)
    }

    /// Rescales gradients of `ids` so their joint L2 norm is at most `max_norm`.
    /// Returns the norm before clipping.
    pub fn clip_grad_norm(&mut self, ids: &[ParamId], max_norm: f64) -> f64 {
        let norm = self.grad_norm(ids);
        if norm > max_norm {
            let s = F::from_f64(max_norm / norm);
            for &id in ids {
                self.entries[id.0].grad.iter_mut().for_each(|g| *g *= s);
            }
        }
        norm
    }

    /// Copies values of every parameter present in both stores (same name and shape).
    /// Returns the number of parameters copied.
    pub fn copy_matching(&mut self, other: &ParamStore<F>, prefix: &str) -> usize {
        let mut copied = 0;
        for src in other.entries.iter().filter(|e| e.name.starts_with(prefix)) {
            if let Some(&i) = self.index.get(&src.name) {
                if self.entries[i].shape == src.shape {
                    self.entries[i].value.clone_from(&src.value);
                    copied += 1;
                }
            }
        }
        copied
    }

    pub fn snapshot(&self) -> Vec<Vec<F>> {
        self.entries.iter().map(|e| e.value.clone()).collect()
    }

    pub fn restore(&mut self, snapshot: &[Vec<F>]) {
        for (e, v) in self.entries.iter_mut().zip(snapshot) {
            e.value.clone_from(v);
        }
    }
}

//! Minimal dense numerical core: matrices, softmax and cross-entropy,
//! seeded randomness, named gradients and parameter updates.
//!
//! Everything is 64-bit and deterministic. There is no computation
//! graph; the model module backpropagates through its fixed topology
//! by hand and accumulates into [`Gradients`].

pub mod matrix;
pub mod optim;
pub mod rng;

use std::collections::BTreeMap;

pub use matrix::{cross_entropy, gemm, sigmoid, softmax, softmax_inplace, Matrix, PROB_FLOOR};
pub use optim::{OptimConfig, OptimKind, Optimizer, CLIP_NORM};
pub use rng::{derive_seed, Rng};

/// Named gradient tensors, one per parameter, in deterministic
/// (sorted) iteration order.
#[derive(Debug, Clone, Default)]
pub struct Gradients {
    map: BTreeMap<String, Matrix>,
}

impl Gradients {
    pub fn new() -> Gradients {
        Gradients::default()
    }

    pub fn get(&self, name: &str) -> Option<&Matrix> {
        self.map.get(name)
    }

    /// Gradient tensor for `name`, created as zeros of the given shape
    /// on first use.
    pub fn entry(&mut self, name: &str, rows: usize, cols: usize) -> &mut Matrix {
        self.map
            .entry(name.to_string())
            .or_insert_with(|| Matrix::zeros(rows, cols))
    }

    pub fn insert(&mut self, name: &str, m: Matrix) {
        self.map.insert(name.to_string(), m);
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Matrix)> {
        self.map.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Matrix)> {
        self.map.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn global_norm(&self) -> f64 {
        self.map
            .values()
            .map(Matrix::frob_norm_sq)
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale_all(&mut self, s: f64) {
        for m in self.map.values_mut() {
            m.scale(s);
        }
    }
}

/// Visitation over a model's named parameter tensors in a fixed order.
/// The optimizer, serialization and the finite-difference audit all
/// address parameters through this trait.
pub trait Parameters {
    fn visit(&self, f: &mut dyn FnMut(&str, &Matrix));
    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Matrix));

    fn param_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        self.visit(&mut |name, _| names.push(name.to_string()));
        names
    }

    fn param_count(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |_, m| n += m.data().len());
        n
    }
}

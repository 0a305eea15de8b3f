use rand::Rng;
use serde::{Deserialize, Serialize};

/// A flat parameter buffer with its accumulated gradient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamTensor {
    pub values: Vec<f64>,
    pub shape: Vec<usize>,
    #[serde(skip)]
    pub grad: Vec<f64>,
}

impl ParamTensor {
    pub fn zeros(shape: &[usize]) -> Self {
        assert!(
            shape.iter().all(|&d| d > 0),
            "tensor dimensions must be positive: {shape:?}"
        );
        let len = shape.iter().product();
        Self {
            values: vec![0.0; len],
            shape: shape.to_vec(),
            grad: vec![0.0; len],
        }
    }

    pub fn from_values(shape: &[usize], values: Vec<f64>) -> Self {
        let mut t = Self::zeros(shape);
        assert_eq!(t.values.len(), values.len(), "shape/value length mismatch");
        t.values = values;
        t
    }

    /// Uniform in `[-bound, bound]`.
    pub fn uniform<R: Rng + ?Sized>(shape: &[usize], bound: f64, rng: &mut R) -> Self {
        let mut t = Self::zeros(shape);
        for v in &mut t.values {
            *v = rng.gen_range(-bound..=bound);
        }
        t
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn zero_grad(&mut self) {
        // Deserialized tensors arrive without a gradient buffer.
        if self.grad.len() != self.values.len() {
            self.grad = vec![0.0; self.values.len()];
        } else {
            self.grad.iter_mut().for_each(|g| *g = 0.0);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Anything that owns trainable tensors.
pub trait Parameterized {
    fn params_mut(&mut self) -> Vec<&mut ParamTensor>;

    fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }
}

//! Named parameter store with Adam updates.
//!
//! Parameters are kept in insertion order so checkpoint serialization and
//! optimizer sweeps are deterministic. Each entry carries its gradient and
//! the Adam first/second moment estimates.

use std::collections::HashMap;

use super::tensor::Tensor;
use crate::Error;

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

#[derive(Clone)]
pub struct ParamEntry {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
    m: Tensor,
    v: Tensor,
}

/// Ordered collection of named trainable tensors.
#[derive(Clone, Default)]
pub struct ParamStore {
    entries: Vec<ParamEntry>,
    index: HashMap<String, usize>,
    step: u64,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Register a new parameter; names must be unique.
    pub fn insert(&mut self, name: &str, value: Tensor) -> Result<(), Error> {
        if self.index.contains_key(name) {
            return Err(Error::Invalid(format!("duplicate parameter name {name:?}")));
        }
        let shape = value.shape().to_vec();
        self.index.insert(name.to_string(), self.entries.len());
        self.entries.push(ParamEntry {
            name: name.to_string(),
            value,
            grad: Tensor::zeros(&shape),
            m: Tensor::zeros(&shape),
            v: Tensor::zeros(&shape),
        });
        Ok(())
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn entry(&self, idx: usize) -> &ParamEntry {
        &self.entries[idx]
    }

    pub fn entry_mut(&mut self, idx: usize) -> &mut ParamEntry {
        &mut self.entries[idx]
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.index_of(name).map(|i| &self.entries[i].value)
    }

    pub fn grad(&self, name: &str) -> Option<&Tensor> {
        self.index_of(name).map(|i| &self.entries[i].grad)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries in insertion order.
    pub fn iter(&self) -> impl Iterator<Item = &ParamEntry> {
        self.entries.iter()
    }

    /// Total number of scalar parameters.
    pub fn scalar_count(&self) -> usize {
        self.entries.iter().map(|e| e.value.len()).sum()
    }

    pub fn zero_grads(&mut self) {
        for e in &mut self.entries {
            for g in e.grad.data_mut() {
                *g = 0.0;
            }
        }
    }

    /// L2 norm over all gradients, treated as one flat vector.
    pub fn global_grad_norm(&self) -> f64 {
        self.entries
            .iter()
            .map(|e| e.grad.data().iter().map(|g| g * g).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }

    /// Scale all gradients so the global norm is at most `max_norm`.
    /// Returns the norm before clipping.
    pub fn clip_global_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self.global_grad_norm();
        if norm > max_norm && norm > 0.0 {
            let s = max_norm / norm;
            for e in &mut self.entries {
                for g in e.grad.data_mut() {
                    *g *= s;
                }
            }
        }
        norm
    }

    /// One Adam update (bias-corrected, beta1=0.9, beta2=0.999, eps=1e-8)
    /// over every parameter, consuming and zeroing the gradients.
    ///
    /// Errors if any gradient is non-finite; parameters are untouched in
    /// that case.
    pub fn adam_step(&mut self, lr: f64, clip_norm: Option<f64>) -> Result<(), Error> {
        for e in &self.entries {
            if !e.grad.all_finite() {
                return Err(Error::Runtime(format!(
                    "non-finite gradient in parameter {:?}",
                    e.name
                )));
            }
        }
        if let Some(max) = clip_norm {
            self.clip_global_norm(max);
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - BETA1.powi(t);
        let bc2 = 1.0 - BETA2.powi(t);
        for e in &mut self.entries {
            let (value, grad, m, v) =
                (e.value.data_mut(), e.grad.data_mut(), e.m.data_mut(), e.v.data_mut());
            for i in 0..value.len() {
                let g = grad[i];
                m[i] = BETA1 * m[i] + (1.0 - BETA1) * g;
                v[i] = BETA2 * v[i] + (1.0 - BETA2) * g * g;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                value[i] -= lr * m_hat / (v_hat.sqrt() + EPS);
                grad[i] = 0.0;
            }
        }
        Ok(())
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_matches_closed_form() {
        // With m=v=0, g=1: m_hat = g, v_hat = g^2, so the update is
        // lr * 1 / (1 + eps) regardless of history.
        let mut s = ParamStore::new();
        s.insert("w", Tensor::scalar(0.0)).unwrap();
        s.entry_mut(0).grad = Tensor::scalar(1.0);
        s.adam_step(1e-3, None).unwrap();
        let expect = -1e-3 / (1.0 + EPS);
        assert!((s.get("w").unwrap().item() - expect).abs() < 1e-15);
    }

    #[test]
    fn gradients_zeroed_after_step() {
        let mut s = ParamStore::new();
        s.insert("w", Tensor::full(&[2, 2], 1.0)).unwrap();
        s.entry_mut(0).grad = Tensor::full(&[2, 2], 0.5);
        s.adam_step(1e-2, None).unwrap();
        assert!(s.grad("w").unwrap().data().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn duplicate_name_rejected() {
        let mut s = ParamStore::new();
        s.insert("w", Tensor::scalar(0.0)).unwrap();
        assert!(s.insert("w", Tensor::scalar(1.0)).is_err());
    }

    #[test]
    fn converges_on_quadratic() {
        // Minimize (w - 3)^2 by feeding the analytic gradient 2(w - 3).
        let mut s = ParamStore::new();
        s.insert("w", Tensor::scalar(0.0)).unwrap();
        for _ in 0..2000 {
            let w = s.get("w").unwrap().item();
            s.entry_mut(0).grad = Tensor::scalar(2.0 * (w - 3.0));
            s.adam_step(0.05, None).unwrap();
        }
        assert!((s.get("w").unwrap().item() - 3.0).abs() < 1e-2);
    }

    #[test]
    fn clip_rescales_to_max_norm() {
        let mut s = ParamStore::new();
        s.insert("a", Tensor::scalar(0.0)).unwrap();
        s.insert("b", Tensor::scalar(0.0)).unwrap();
        s.entry_mut(0).grad = Tensor::scalar(3.0);
        s.entry_mut(1).grad = Tensor::scalar(4.0);
        let before = s.clip_global_norm(1.0);
        assert!((before - 5.0).abs() < 1e-12);
        assert!((s.grad("a").unwrap().item() - 0.6).abs() < 1e-12);
        assert!((s.grad("b").unwrap().item() - 0.8).abs() < 1e-12);
        assert!((s.global_grad_norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn clip_leaves_small_gradients_alone() {
        let mut s = ParamStore::new();
        s.insert("a", Tensor::scalar(0.0)).unwrap();
        s.entry_mut(0).grad = Tensor::scalar(0.5);
        s.clip_global_norm(1.0);
        assert_eq!(s.grad("a").unwrap().item(), 0.5);
    }

    #[test]
    fn non_finite_gradient_is_an_error() {
        let mut s = ParamStore::new();
        s.insert("w", Tensor::scalar(1.0)).unwrap();
        s.entry_mut(0).grad = Tensor::scalar(f64::NAN);
        let err = s.adam_step(1e-3, None).unwrap_err();
        assert!(err.to_string().contains("w"), "error should name the parameter: {err}");
        // Parameter untouched.
        assert_eq!(s.get("w").unwrap().item(), 1.0);
    }

    #[test]
    fn insertion_order_is_stable() {
        let mut s = ParamStore::new();
        for name in ["zeta", "alpha", "mid"] {
            s.insert(name, Tensor::scalar(0.0)).unwrap();
        }
        let names: Vec<&str> = s.iter().map(|e| e.name.as_str()).collect();
        assert_eq!(names, ["zeta", "alpha", "mid"]);
    }
}

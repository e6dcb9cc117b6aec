use std::collections::HashMap;

use super::{NnError, Tensor};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Named parameter arrays plus Adam moment accumulators.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Tensor>,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
    index: HashMap<String, usize>,
    step: u64,
    adam: AdamConfig,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_adam(adam: AdamConfig) -> Self {
        Self {
            adam,
            ..Self::default()
        }
    }

    pub fn add(&mut self, name: &str, value: Tensor) -> Result<(), NnError> {
        if self.index.contains_key(name) {
            return Err(NnError::DuplicateParam(name.to_string()));
        }
        self.index.insert(name.to_string(), self.names.len());
        self.names.push(name.to_string());
        self.first.push(Tensor::zeros(value.dim()));
        self.second.push(Tensor::zeros(value.dim()));
        self.values.push(value);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.index_of(name).map(|i| &self.values[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.index_of(name).map(move |i| &mut self.values[i])
    }

    pub(crate) fn value_at(&self, idx: usize) -> &Tensor {
        &self.values[idx]
    }

    pub(crate) fn value_at_mut(&mut self, idx: usize) -> &mut Tensor {
        &mut self.values[idx]
    }

    /// Number of Adam steps taken.
    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(self.values.iter())
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(|v| v.len()).sum()
    }

    /// One bias-corrected Adam update. Missing gradients count as zero.
    ///
    /// Nothing is modified if any gradient is non-finite.
    pub fn adam_step(&mut self, grads: &[Option<Tensor>], lr: f64) -> Result<(), NnError> {
        if grads.len() != self.len() {
            return Err(NnError::Shape(format!(
                "{} gradients for {} parameters",
                grads.len(),
                self.len()
            )));
        }
        for (i, g) in grads.iter().enumerate() {
            if let Some(g) = g {
                if g.dim() != self.values[i].dim() {
                    return Err(NnError::Shape(format!(
                        "gradient for {} has shape {:?}, expected {:?}",
                        self.names[i],
                        g.dim(),
                        self.values[i].dim()
                    )));
                }
                if !g.iter().all(|v| v.is_finite()) {
                    return Err(NnError::Diverged(format!(
                        "non-finite gradient for {}",
                        self.names[i]
                    )));
                }
            }
        }
        self.step += 1;
        let AdamConfig { beta1, beta2, eps } = self.adam;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        for (i, g) in grads.iter().enumerate() {
            let m = &mut self.first[i];
            let v = &mut self.second[i];
            match g {
                Some(g) => {
                    ndarray::Zip::from(&mut *m).and(g).for_each(|m, &g| *m = beta1 * *m + (1.0 - beta1) * g);
                    ndarray::Zip::from(&mut *v)
                        .and(g)
                        .for_each(|v, &g| *v = beta2 * *v + (1.0 - beta2) * g * g);
                }
                None => {
                    m.mapv_inplace(|m| beta1 * m);
                    v.mapv_inplace(|v| beta2 * v);
                }
            }
            ndarray::Zip::from(&mut self.values[i])
                .and(&*m)
                .and(&*v)
                .for_each(|w, &m, &v| {
                    let m_hat = m / bc1;
                    let v_hat = v / bc2;
                    *w -= lr * m_hat / (v_hat.sqrt() + eps);
                });
        }
        Ok(())
    }

    /// Copies values (not moments) from `other` for every matching name.
    pub fn copy_values_from(&mut self, other: &ParamStore) {
        for (i, name) in self.names.iter().enumerate() {
            if let Some(v) = other.get(name) {
                if v.dim() == self.values[i].dim() {
                    self.values[i].assign(v);
                }
            }
        }
    }
}

/// Multiplies the learning rate by `factor` each time the best observed loss
/// has gone `patience` consecutive evaluations without improving.
#[derive(Debug, Clone, PartialEq)]
pub struct PlateauScheduler {
    lr: f64,
    factor: f64,
    patience: usize,
    best: f64,
    bad_evals: usize,
}

impl PlateauScheduler {
    pub fn new(base_lr: f64, patience: usize, factor: f64) -> Self {
        Self {
            lr: base_lr,
            factor,
            patience,
            best: f64::INFINITY,
            bad_evals: 0,
        }
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    /// Records one validation loss and returns the learning rate to use next.
    pub fn observe(&mut self, loss: f64) -> f64 {
        if loss < self.best {
            self.best = loss;
            self.bad_evals = 0;
        } else {
            self.bad_evals += 1;
            if self.bad_evals >= self.patience {
                self.lr *= self.factor;
                self.bad_evals = 0;
            }
        }
        self.lr
    }

    /// Learning rate after replaying a whole validation history.
    pub fn replay(base_lr: f64, patience: usize, factor: f64, history: &[f64]) -> f64 {
        let mut s = Self::new(base_lr, patience, factor);
        for &l in history {
            s.observe(l);
        }
        s.lr()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut s = ParamStore::new();
        s.add("w", array![[1.0, -2.0]]).unwrap();
        s.adam_step(&[Some(array![[0.0, 0.0]])], 1e-3).unwrap();
        assert_eq!(s.get("w").unwrap(), &array![[1.0, -2.0]]);
        assert_eq!(s.step(), 1);
        s.adam_step(&[None], 1e-3).unwrap();
        assert_eq!(s.get("w").unwrap(), &array![[1.0, -2.0]]);
    }

    #[test]
    fn first_step_moves_by_lr_against_sign() {
        let mut s = ParamStore::new();
        s.add("w", array![[0.0, 0.0, 0.0]]).unwrap();
        s.adam_step(&[Some(array![[3.0, -0.5, 1e-3]])], 1e-3).unwrap();
        let w = s.get("w").unwrap();
        assert!((w[[0, 0]] + 1e-3).abs() < 1e-9);
        assert!((w[[0, 1]] - 1e-3).abs() < 1e-9);
        assert!((w[[0, 2]] + 1e-3).abs() < 1e-7);
    }

    #[test]
    fn converges_on_quadratic() {
        let mut s = ParamStore::new();
        s.add("w", array![[0.0]]).unwrap();
        for _ in 0..200 {
            let w = s.get("w").unwrap()[[0, 0]];
            s.adam_step(&[Some(array![[2.0 * (w - 3.0)]])], 0.1).unwrap();
        }
        assert!((s.get("w").unwrap()[[0, 0]] - 3.0).abs() < 1e-2);
    }

    #[test]
    fn non_finite_gradient_is_rejected_without_update() {
        let mut s = ParamStore::new();
        s.add("w", array![[1.0]]).unwrap();
        let err = s.adam_step(&[Some(array![[f64::NAN]])], 1e-3).unwrap_err();
        assert!(matches!(err, NnError::Diverged(_)));
        assert_eq!(s.step(), 0);
        assert_eq!(s.get("w").unwrap()[[0, 0]], 1.0);
    }

    #[test]
    fn duplicate_names_rejected() {
        let mut s = ParamStore::new();
        s.add("w", array![[1.0]]).unwrap();
        assert!(matches!(s.add("w", array![[1.0]]), Err(NnError::DuplicateParam(_))));
    }

    #[test]
    fn plateau_schedule() {
        let decreasing: Vec<f64> = (0..30).map(|i| 10.0 - i as f64 * 0.1).collect();
        assert_eq!(PlateauScheduler::replay(1e-3, 8, 0.7, &decreasing), 1e-3);
        assert_eq!(PlateauScheduler::replay(1e-3, 8, 0.7, &[1.0; 8]), 1e-3);
        assert!((PlateauScheduler::replay(1e-3, 8, 0.7, &[1.0; 9]) - 0.7e-3).abs() < 1e-15);
        assert!((PlateauScheduler::replay(1e-3, 8, 0.7, &[1.0; 17]) - 0.49e-3).abs() < 1e-15);
        // improvement resets the counter
        let mut h = vec![1.0; 8];
        h.push(0.5);
        h.extend([0.6; 7]);
        assert_eq!(PlateauScheduler::replay(1e-3, 8, 0.7, &h), 1e-3);
    }
}

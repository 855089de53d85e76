use super::{ParamId, ParamStore, Real, Result, TensorError};
use alloc::vec;
use alloc::vec::Vec;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Bias-corrected Adam over a fixed subset of a parameter store.
#[derive(Debug, Clone)]
pub struct Adam {
    config: AdamConfig,
    ids: Vec<ParamId>,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new<F: Real>(config: AdamConfig, store: &ParamStore<F>, ids: Vec<ParamId>) -> Self {
        let m = ids.iter().map(|&id| vec![0.0; store.get(id).value.len()]).collect::<Vec<_>>();
        let v = m.clone();
        Self {
            config,
            ids,
            step: 0,
            m,
            v,
        }
    }

    pub fn ids(&self) -> &[ParamId] {
        &self.ids
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn step<F: Real>(&mut self, store: &mut ParamStore<F>) -> Result<()> {
        if let Some(&id) = self.ids.iter().find(|&&id| !store.get(id).has_grad) {
            return Err(TensorError::MissingGrad(store.get(id).name.clone()));
        }
        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - libm::pow(beta1, t as f64);
        let c2 = 1.0 - libm::pow(beta2, t as f64);
        for (slot, &id) in self.ids.iter().enumerate() {
            let entry = store.get_mut(id);
            let (m, v) = (&mut self.m[slot], &mut self.v[slot]);
            for i in 0..entry.value.len() {
                let g = entry.grad[i].as_f64();
                m[i] = beta1 * m[i] + (1.0 - beta1) * g;
                v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                let update = lr * m_hat / (libm::sqrt(v_hat) + eps);
                entry.value[i] = F::from_f64(entry.value[i].as_f64() - update);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store_with(value: f64, grad: f64) -> (ParamStore<f64>, ParamId) {
        let mut s = ParamStore::new();
        let id = s.add("w", &[1], vec![value]).unwrap();
        s.get_mut(id).grad[0] = grad;
        s.get_mut(id).has_grad = true;
        (s, id)
    }

    #[test]
    fn first_step_moves_by_lr() {
        let (mut s, id) = store_with(1.0, 0.37);
        let mut adam = Adam::new(AdamConfig::default(), &s, vec![id]);
        adam.step(&mut s).unwrap();
        assert!((s.get(id).value[0] - (1.0 - 0.001)).abs() < 1e-9);
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let (mut s, id) = store_with(2.5, 0.0);
        let mut adam = Adam::new(AdamConfig::default(), &s, vec![id]);
        adam.step(&mut s).unwrap();
        assert_eq!(s.get(id).value[0], 2.5);
    }

    #[test]
    fn two_steps_follow_the_moment_recursion() {
        let g = 0.2;
        let (mut s, id) = store_with(0.0, g);
        let mut adam = Adam::new(AdamConfig::default(), &s, vec![id]);
        adam.step(&mut s).unwrap();
        adam.step(&mut s).unwrap();

        let (b1, b2, lr, eps) = (0.9f64, 0.999f64, 1e-3, 1e-8);
        let mut p = 0.0;
        let (mut m, mut v) = (0.0, 0.0);
        for t in 1..=2 {
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let mh = m / (1.0 - libm::pow(b1, t as f64));
            let vh = v / (1.0 - libm::pow(b2, t as f64));
            p -= lr * mh / (libm::sqrt(vh) + eps);
        }
        assert!((s.get(id).value[0] - p).abs() < 1e-10);
    }

    #[test]
    fn missing_gradient_is_an_error() {
        let (mut s, id) = store_with(0.0, 1.0);
        s.zero_grad();
        let mut adam = Adam::new(AdamConfig::default(), &s, vec![id]);
        assert!(matches!(adam.step(&mut s), Err(TensorError::MissingGrad(_))));
    }
}

use std::collections::BTreeMap;

use super::store::ParameterStore;
use super::tensor::Tensor;

/// Adam with per-parameter first/second moment state.
///
/// `step` consumes the gradients currently accumulated in the store and
/// zeroes them afterwards, so there is no hidden state between batches.
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: BTreeMap<String, Vec<f64>>,
    v: BTreeMap<String, Vec<f64>>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }

    pub fn step(&mut self, store: &mut ParameterStore) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        let names: Vec<String> = store.names().cloned().collect();
        for name in names {
            let p = store.get(&name).expect("param");
            let grad = p.grad.data().to_vec();
            let shape = p.value.shape().to_vec();
            let m = self
                .m
                .entry(name.clone())
                .or_insert_with(|| vec![0.0; grad.len()]);
            let v = self
                .v
                .entry(name.clone())
                .or_insert_with(|| vec![0.0; grad.len()]);
            let mut value = p.value.data().to_vec();
            for i in 0..grad.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * grad[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                value[i] -= self.lr * mhat / (vhat.sqrt() + self.eps);
            }
            store
                .set_value(&name, Tensor::new(shape, value).expect("shape"))
                .expect("set");
        }
        store.zero_grads();
    }
}

/// Scale all gradients so their global L2 norm is at most `max_norm`.
/// Returns the pre-clip norm.
pub fn clip_global_norm(store: &mut ParameterStore, max_norm: f64) -> f64 {
    let norm = store.grad_global_norm();
    if norm > max_norm && norm > 0.0 {
        store.scale_grads(max_norm / norm);
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clip_scales_by_half_when_norm_is_double() {
        let mut s = ParameterStore::new(0);
        s.insert_zeros("w", &[4]);
        s.accumulate_grad("w", &[2.0, 2.0, 2.0, 2.0]).unwrap(); // norm 4
        let pre = clip_global_norm(&mut s, 2.0);
        assert_eq!(pre, 4.0);
        assert_eq!(s.get("w").unwrap().grad.data(), &[1.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn clip_leaves_small_gradients_alone() {
        let mut s = ParameterStore::new(0);
        s.insert_zeros("w", &[2]);
        s.accumulate_grad("w", &[0.3, 0.4]).unwrap(); // norm 0.5
        clip_global_norm(&mut s, 2.0);
        assert_eq!(s.get("w").unwrap().grad.data(), &[0.3, 0.4]);
    }

    #[test]
    fn adam_moves_against_gradient_and_zeroes() {
        let mut s = ParameterStore::new(0);
        s.insert_zeros("w", &[2]);
        s.accumulate_grad("w", &[1.0, -1.0]).unwrap();
        let mut opt = Adam::new(0.1);
        opt.step(&mut s);
        let w = s.get("w").unwrap();
        assert!(w.value.data()[0] < 0.0);
        assert!(w.value.data()[1] > 0.0);
        assert_eq!(w.grad.data(), &[0.0, 0.0]);
    }
}

use std::collections::BTreeMap;

use rand::Rng;

use super::rng::rng_for;
use super::tensor::Tensor;
use super::NumericsError;

/// A named trainable tensor with a persistent gradient slot.
#[derive(Clone, Debug)]
pub struct Parameter {
    pub value: Tensor,
    pub grad: Tensor,
}

/// Name-keyed collection of parameters. Iteration order is sorted by name,
/// which keeps initialization, clipping, and optimizer sweeps deterministic.
#[derive(Clone, Debug)]
pub struct ParameterStore {
    params: BTreeMap<String, Parameter>,
    pub rng_seed: u64,
}

impl ParameterStore {
    pub fn new(rng_seed: u64) -> Self {
        ParameterStore {
            params: BTreeMap::new(),
            rng_seed,
        }
    }

    /// Insert a parameter initialized uniformly on (-scale, scale). The draw
    /// is seeded per name, so adding or reordering other parameters does not
    /// disturb existing initializations.
    pub fn insert_uniform(&mut self, name: &str, shape: &[usize], scale: f64) {
        if scale == 0.0 {
            self.insert_zeros(name, shape);
            return;
        }
        let mut rng = rng_for(self.rng_seed, name, 0);
        let numel: usize = shape.iter().product();
        let data: Vec<f64> = (0..numel).map(|_| rng.gen_range(-scale..scale)).collect();
        self.insert_tensor(name, Tensor::new(shape.to_vec(), data).expect("shape"));
    }

    pub fn insert_zeros(&mut self, name: &str, shape: &[usize]) {
        self.insert_tensor(name, Tensor::zeros(shape));
    }

    pub fn insert_tensor(&mut self, name: &str, value: Tensor) {
        let grad = Tensor::zeros(value.shape());
        self.params
            .insert(name.to_string(), Parameter { value, grad });
    }

    pub fn get(&self, name: &str) -> Option<&Parameter> {
        self.params.get(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    pub fn set_value(&mut self, name: &str, value: Tensor) -> Result<(), NumericsError> {
        let p = self
            .params
            .get_mut(name)
            .ok_or_else(|| NumericsError::UnknownParam(name.to_string()))?;
        p.value = value;
        Ok(())
    }

    pub fn accumulate_grad(&mut self, name: &str, grad: &[f64]) -> Result<(), NumericsError> {
        let p = self
            .params
            .get_mut(name)
            .ok_or_else(|| NumericsError::UnknownParam(name.to_string()))?;
        let mut data = p.grad.data().to_vec();
        for (a, b) in data.iter_mut().zip(grad) {
            *a += b;
        }
        p.grad = Tensor::new(p.grad.shape().to_vec(), data).expect("grad shape");
        Ok(())
    }

    pub fn zero_grads(&mut self) {
        for p in self.params.values_mut() {
            p.grad = Tensor::zeros(p.grad.shape());
        }
    }

    /// Sorted-by-name iteration.
    pub fn iter(&self) -> impl Iterator<Item = (&String, &Parameter)> {
        self.params.iter()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.params.keys()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn num_values(&self) -> usize {
        self.params.values().map(|p| p.value.numel()).sum()
    }

    /// L2 norm over all gradients (the global norm used for clipping).
    pub fn grad_global_norm(&self) -> f64 {
        self.params
            .values()
            .flat_map(|p| p.grad.data().iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale_grads(&mut self, factor: f64) {
        for p in self.params.values_mut() {
            let data: Vec<f64> = p.grad.data().iter().map(|v| v * factor).collect();
            p.grad = Tensor::new(p.grad.shape().to_vec(), data).expect("grad shape");
        }
    }

    /// Flatten all parameter values into one vector (sorted-name order).
    pub fn pack_values(&self) -> Vec<f64> {
        self.params
            .values()
            .flat_map(|p| p.value.data().iter().copied())
            .collect()
    }

    /// Inverse of [`ParameterStore::pack_values`].
    pub fn unpack_values(&mut self, flat: &[f64]) -> Result<(), NumericsError> {
        let expected = self.num_values();
        if flat.len() != expected {
            return Err(NumericsError::BadShape {
                shape: vec![expected],
                len: flat.len(),
            });
        }
        let mut off = 0;
        for p in self.params.values_mut() {
            let n = p.value.numel();
            p.value = Tensor::new(p.value.shape().to_vec(), flat[off..off + n].to_vec())
                .expect("shape");
            off += n;
        }
        Ok(())
    }

    /// Flatten all gradients (same order as `pack_values`).
    pub fn pack_grads(&self) -> Vec<f64> {
        self.params
            .values()
            .flat_map(|p| p.grad.data().iter().copied())
            .collect()
    }
}

use std::collections::HashMap;
use std::path::Path;

use candle_core::{DType, Device, Tensor, Var};
use indexmap::IndexMap;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::error::{Error, Result};

/// Named trainable tensors with seeded initialization.
///
/// Candle's own random initializers draw from an unseeded generator, so all
/// parameters are created here from a ChaCha stream instead.
#[derive(Debug)]
pub struct ParamStore {
    vars: IndexMap<String, Var>,
    rng: ChaCha8Rng,
    prefix: Vec<String>,
}

impl ParamStore {
    pub fn new(seed: u64) -> Self {
        Self {
            vars: IndexMap::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            prefix: Vec::new(),
        }
    }

    pub fn device(&self) -> &Device {
        &Device::Cpu
    }

    fn full_name(&self, name: &str) -> String {
        let mut parts = self.prefix.clone();
        parts.push(name.to_string());
        parts.join(".")
    }

    /// Runs `f` with `name` pushed onto the parameter-name prefix.
    pub fn scoped<T>(&mut self, name: &str, f: impl FnOnce(&mut Self) -> Result<T>) -> Result<T> {
        self.prefix.push(name.to_string());
        let out = f(self);
        self.prefix.pop();
        out
    }

    pub fn insert(&mut self, name: &str, value: Tensor) -> Result<Tensor> {
        let full = self.full_name(name);
        if self.vars.contains_key(&full) {
            return Err(Error::Checkpoint(format!("parameter `{full}` defined twice")));
        }
        let var = Var::from_tensor(&value.to_dtype(DType::F32)?)?;
        let t = var.as_tensor().clone();
        self.vars.insert(full, var);
        Ok(t)
    }

    pub fn from_vec(&mut self, name: &str, data: Vec<f32>, shape: &[usize]) -> Result<Tensor> {
        let t = Tensor::from_vec(data, shape, &Device::Cpu)?;
        self.insert(name, t)
    }

    pub fn zeros(&mut self, name: &str, shape: &[usize]) -> Result<Tensor> {
        let n = shape.iter().product();
        self.from_vec(name, vec![0.0; n], shape)
    }

    pub fn ones(&mut self, name: &str, shape: &[usize]) -> Result<Tensor> {
        let n = shape.iter().product();
        self.from_vec(name, vec![1.0; n], shape)
    }

    /// `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    pub fn uniform_fan_in(&mut self, name: &str, shape: &[usize], fan_in: usize) -> Result<Tensor> {
        let bound = 1.0 / (fan_in.max(1) as f32).sqrt();
        let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
        let n = shape.iter().product();
        let data = (0..n).map(|_| dist.sample(&mut self.rng)).collect();
        self.from_vec(name, data, shape)
    }

    pub fn normal(&mut self, name: &str, shape: &[usize], std: f32) -> Result<Tensor> {
        let n = shape.iter().product();
        let data = self.normal_values(n, std);
        self.from_vec(name, data, shape)
    }

    pub fn normal_values(&mut self, n: usize, std: f32) -> Vec<f32> {
        let dist = Normal::new(0.0, std).expect("std is positive");
        (0..n).map(|_| dist.sample(&mut self.rng)).collect()
    }

    pub fn vars(&self) -> Vec<Var> {
        self.vars.values().cloned().collect()
    }

    pub fn get(&self, name: &str) -> Option<&Var> {
        self.vars.get(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.vars.keys().map(String::as_str)
    }

    pub fn num_params(&self) -> usize {
        self.vars.values().map(|v| v.elem_count()).sum()
    }

    /// Detached copies of every parameter.
    pub fn snapshot(&self) -> Result<Vec<Tensor>> {
        self.vars
            .values()
            .map(|v| Ok(v.as_tensor().copy()?.detach()))
            .collect()
    }

    pub fn restore(&self, snapshot: &[Tensor]) -> Result<()> {
        if snapshot.len() != self.vars.len() {
            return Err(Error::Checkpoint("snapshot does not match the parameter set".into()));
        }
        for (var, t) in self.vars.values().zip(snapshot) {
            var.set(t)?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let map: HashMap<String, Tensor> = self
            .vars
            .iter()
            .map(|(k, v)| (k.clone(), v.as_tensor().clone()))
            .collect();
        candle_core::safetensors::save(&map, path)?;
        Ok(())
    }

    /// Overwrites every parameter with the tensor of the same name in a
    /// safetensors file.
    pub fn load(&self, path: &Path) -> Result<()> {
        let tensors = candle_core::safetensors::load(path, &Device::Cpu)?;
        self.assign(&tensors, |name| name.to_string())
    }

    /// Sets parameters from `tensors`, looking each parameter up under
    /// `key(name)`. Missing keys and shape mismatches are errors.
    pub fn assign(&self, tensors: &HashMap<String, Tensor>, key: impl Fn(&str) -> String) -> Result<()> {
        for (name, var) in &self.vars {
            let k = key(name);
            let t = tensors
                .get(&k)
                .ok_or_else(|| Error::Checkpoint(format!("missing tensor `{k}`")))?;
            if t.dims() != var.dims() {
                return Err(Error::Checkpoint(format!(
                    "tensor `{k}` has shape {:?}, expected {:?}",
                    t.dims(),
                    var.dims()
                )));
            }
            var.set(&t.to_dtype(DType::F32)?)?;
        }
        Ok(())
    }
}

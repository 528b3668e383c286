//! Named parameter store with seeded initialization, freezing by prefix,
//! hashing and safetensors checkpoints.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use candle_core::{DType, Device, Shape, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sha2::{Digest, Sha256};

use crate::error::{validation, Error, Result};

#[derive(Debug, Clone)]
pub enum Init {
    Zeros,
    /// Uniform in `[-bound, bound]`.
    Uniform(f64),
    Normal(f64),
    /// Explicit row-major values.
    Values(Vec<f64>),
}

/// Ordered map from module path to trainable variable. Creating a parameter
/// that already exists (e.g. after loading a checkpoint) returns the stored
/// value, so modules are rebuilt against loaded weights by construction.
pub struct ParamStore {
    vars: BTreeMap<String, Var>,
    dtype: DType,
    rng: ChaCha8Rng,
}

impl std::fmt::Debug for ParamStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ParamStore").field("params", &self.vars.len()).field("dtype", &self.dtype).finish()
    }
}

impl ParamStore {
    pub fn new(dtype: DType, seed: u64) -> Self {
        Self { vars: BTreeMap::new(), dtype, rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn dtype(&self) -> DType {
        self.dtype
    }

    pub fn param(&mut self, name: &str, shape: impl Into<Shape>, init: Init) -> Result<Tensor> {
        let shape: Shape = shape.into();
        if let Some(v) = self.vars.get(name) {
            if v.shape() != &shape {
                return Err(Error::Checkpoint(format!(
                    "parameter {name}: stored shape {:?} differs from expected {:?}",
                    v.dims(),
                    shape.dims()
                )));
            }
            return Ok(v.as_tensor().clone());
        }
        let n = shape.elem_count();
        let data: Vec<f64> = match init {
            Init::Zeros => vec![0.0; n],
            Init::Uniform(b) => (0..n).map(|_| self.rng.random_range(-b..=b)).collect(),
            Init::Normal(s) => (0..n)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut self.rng);
                    s * z
                })
                .collect(),
            Init::Values(v) => {
                if v.len() != n {
                    return Err(validation(format!("{name}: {} values for {n} elements", v.len())));
                }
                v
            }
        };
        let t = Tensor::from_vec(data, shape, &Device::Cpu)?.to_dtype(self.dtype)?;
        let var = Var::from_tensor(&t)?;
        let out = var.as_tensor().clone();
        self.vars.insert(name.to_string(), var);
        Ok(out)
    }

    /// Kaiming-uniform style initialization for a weight with `fan_in` inputs.
    pub fn weight(&mut self, name: &str, shape: impl Into<Shape>, fan_in: usize) -> Result<Tensor> {
        self.param(name, shape, Init::Uniform((1.0 / fan_in.max(1) as f64).sqrt()))
    }

    /// Uniform values in `[-amp, amp]` from the store's seeded stream.
    pub fn uniform_values(&mut self, n: usize, amp: f64) -> Vec<f64> {
        if amp == 0.0 {
            return vec![0.0; n];
        }
        (0..n).map(|_| self.rng.random_range(-amp..=amp)).collect()
    }

    pub fn get(&self, name: &str) -> Option<&Var> {
        self.vars.get(name)
    }

    pub fn set(&self, name: &str, value: &Tensor) -> Result<()> {
        let v = self.vars.get(name).ok_or_else(|| validation(format!("no parameter named {name}")))?;
        v.set(&value.to_dtype(self.dtype)?)?;
        Ok(())
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.vars.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.vars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vars.is_empty()
    }

    fn matching<'a>(&'a self, prefixes: &'a [&str]) -> impl Iterator<Item = (&'a String, &'a Var)> + 'a {
        self.vars.iter().filter(move |(k, _)| prefixes.iter().any(|p| k.starts_with(p)))
    }

    pub fn vars_with_prefixes(&self, prefixes: &[&str]) -> Vec<Var> {
        self.matching(prefixes).map(|(_, v)| v.clone()).collect()
    }

    pub fn names_with_prefixes(&self, prefixes: &[&str]) -> Vec<String> {
        self.matching(prefixes).map(|(k, _)| k.clone()).collect()
    }

    pub fn count_with_prefixes(&self, prefixes: &[&str]) -> usize {
        self.matching(prefixes).map(|(_, v)| v.elem_count()).sum()
    }

    /// Copies the values of every parameter matching `prefixes` from
    /// `other`; shapes must agree. Returns the number copied.
    pub fn copy_from(&self, other: &ParamStore, prefixes: &[&str]) -> Result<usize> {
        let mut n = 0;
        for (k, v) in other.matching(prefixes) {
            self.set(k, v.as_tensor())?;
            n += 1;
        }
        Ok(n)
    }

    /// Detached copy of the parameters matching `prefixes`.
    pub fn snapshot(&self, prefixes: &[&str]) -> Result<ParamStore> {
        let mut out = ParamStore::new(self.dtype, 0);
        for (k, v) in self.matching(prefixes) {
            out.vars.insert(k.clone(), Var::from_tensor(&v.as_tensor().copy()?)?);
        }
        Ok(out)
    }

    /// SHA-256 over names, shapes and f64 values of the matching parameters.
    pub fn hash_prefixes(&self, prefixes: &[&str]) -> Result<String> {
        let mut h = Sha256::new();
        for (k, v) in self.matching(prefixes) {
            h.update(k.as_bytes());
            for d in v.dims() {
                h.update((*d as u64).to_le_bytes());
            }
            for x in v.as_tensor().to_dtype(DType::F64)?.flatten_all()?.to_vec1::<f64>()? {
                h.update(x.to_le_bytes());
            }
        }
        Ok(hex::encode(h.finalize()))
    }

    /// Writes all parameters plus string metadata; the file is replaced
    /// atomically.
    pub fn save(&self, path: &Path, metadata: HashMap<String, String>) -> Result<()> {
        let bytes = safetensors::serialize(self.vars.iter().map(|(k, v)| (k.clone(), v.as_tensor())), Some(metadata))?;
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, bytes)?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    /// Loads a checkpoint into a fresh store of the given dtype, returning
    /// the metadata.
    pub fn load(path: &Path, dtype: DType) -> Result<(Self, HashMap<String, String>)> {
        let bytes = std::fs::read(path)?;
        let (_, meta) = safetensors::SafeTensors::read_metadata(&bytes)?;
        let metadata = meta.metadata().clone().unwrap_or_default();
        let tensors = candle_core::safetensors::load_buffer(&bytes, &Device::Cpu)?;
        let mut store = Self::new(dtype, 0);
        for (k, t) in tensors {
            store.vars.insert(k, Var::from_tensor(&t.to_dtype(dtype)?)?);
        }
        Ok((store, metadata))
    }
}

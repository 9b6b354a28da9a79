use std::collections::BTreeSet;
use std::sync::{Arc, Mutex, RwLock};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, TensorError};
use crate::scalar::Scalar;
use crate::tensor::{numel, Tensor};

struct ParamInner<S: Scalar> {
    name: String,
    value: RwLock<Tensor<S>>,
}

/// A named trainable tensor. Cloning shares the same slot.
pub struct Parameter<S: Scalar> {
    inner: Arc<ParamInner<S>>,
}

impl<S: Scalar> Clone for Parameter<S> {
    fn clone(&self) -> Self {
        Parameter {
            inner: Arc::clone(&self.inner),
        }
    }
}

impl<S: Scalar> std::fmt::Debug for Parameter<S> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Parameter({}, {:?})", self.name(), self.shape())
    }
}

impl<S: Scalar> Parameter<S> {
    pub fn new(name: impl Into<String>, data: Vec<S>, shape: &[usize]) -> Result<Self> {
        Ok(Parameter {
            inner: Arc::new(ParamInner {
                name: name.into(),
                value: RwLock::new(Tensor::leaf(data, shape)?),
            }),
        })
    }

    pub fn name(&self) -> &str {
        &self.inner.name
    }

    /// Current value as a gradient-tracking leaf.
    pub fn tensor(&self) -> Tensor<S> {
        self.inner.value.read().expect("param lock").clone()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.tensor().shape().to_vec()
    }

    /// Replaces the value; the new leaf gets a fresh identity.
    pub fn set_data(&self, data: Vec<S>) -> Result<()> {
        let shape = self.shape();
        if numel(&shape) != data.len() {
            return Err(TensorError::Shape {
                op: "Parameter::set_data",
                lhs: shape,
                rhs: vec![data.len()],
            });
        }
        *self.inner.value.write().expect("param lock") = Tensor::leaf(data, &shape)?;
        Ok(())
    }
}

/// A named non-trainable tensor (running statistics).
pub struct Buffer<S: Scalar> {
    name: String,
    shape: Vec<usize>,
    data: Mutex<Vec<S>>,
}

impl<S: Scalar> Buffer<S> {
    pub fn new(name: impl Into<String>, data: Vec<S>, shape: &[usize]) -> Arc<Self> {
        Arc::new(Buffer {
            name: name.into(),
            shape: shape.to_vec(),
            data: Mutex::new(data),
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn get(&self) -> Vec<S> {
        self.data.lock().expect("buffer lock").clone()
    }

    pub fn set(&self, v: Vec<S>) -> Result<()> {
        if v.len() != numel(&self.shape) {
            return Err(TensorError::Shape {
                op: "Buffer::set",
                lhs: self.shape.clone(),
                rhs: vec![v.len()],
            });
        }
        *self.data.lock().expect("buffer lock") = v;
        Ok(())
    }
}

/// Registry of every parameter and buffer of a model, in creation order,
/// plus the seeded generator used for initialization.
pub struct ParamStore<S: Scalar> {
    params: Vec<Parameter<S>>,
    buffers: Vec<Arc<Buffer<S>>>,
    names: BTreeSet<String>,
    rng: ChaCha8Rng,
}

impl<S: Scalar> ParamStore<S> {
    pub fn new(seed: u64) -> Self {
        ParamStore {
            params: Vec::new(),
            buffers: Vec::new(),
            names: BTreeSet::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    fn claim(&mut self, name: &str) -> Result<()> {
        if !self.names.insert(name.to_string()) {
            return Err(TensorError::Usage(format!(
                "duplicate parameter name {name}"
            )));
        }
        Ok(())
    }

    /// Uniform(−√(1/fan_in), √(1/fan_in)).
    pub fn uniform(&mut self, name: &str, shape: &[usize], fan_in: usize) -> Result<Parameter<S>> {
        let bound = (1.0 / fan_in.max(1) as f64).sqrt();
        let data: Vec<S> = (0..numel(shape))
            .map(|_| S::of(self.rng.gen_range(-bound..bound)))
            .collect();
        self.push(name, data, shape)
    }

    pub fn constant(&mut self, name: &str, shape: &[usize], value: f64) -> Result<Parameter<S>> {
        self.push(name, vec![S::of(value); numel(shape)], shape)
    }

    pub fn push(&mut self, name: &str, data: Vec<S>, shape: &[usize]) -> Result<Parameter<S>> {
        self.claim(name)?;
        let p = Parameter::new(name, data, shape)?;
        self.params.push(p.clone());
        Ok(p)
    }

    pub fn buffer(&mut self, name: &str, shape: &[usize], value: f64) -> Result<Arc<Buffer<S>>> {
        self.claim(name)?;
        let b = Buffer::new(name, vec![S::of(value); numel(shape)], shape);
        self.buffers.push(Arc::clone(&b));
        Ok(b)
    }

    pub fn params(&self) -> &[Parameter<S>] {
        &self.params
    }

    pub fn buffers(&self) -> &[Arc<Buffer<S>>] {
        &self.buffers
    }

    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.tensor().numel()).sum()
    }

    /// Every parameter then every buffer as (name, tensor).
    pub fn named_tensors(&self) -> Vec<(String, Tensor<S>)> {
        let mut out: Vec<(String, Tensor<S>)> = self
            .params
            .iter()
            .map(|p| (p.name().to_string(), p.tensor().detach()))
            .collect();
        for b in &self.buffers {
            out.push((
                b.name().to_string(),
                Tensor::from_vec(b.get(), b.shape()).expect("buffer shape"),
            ));
        }
        out
    }

    /// Loads values by name. Every name must be present with the same shape.
    pub fn load_named(&self, entries: &[(String, Tensor<S>)]) -> Result<()> {
        let find = |name: &str| entries.iter().find(|(n, _)| n == name).map(|(_, t)| t);
        if entries.len() != self.params.len() + self.buffers.len() {
            return Err(TensorError::Incompatible(format!(
                "checkpoint has {} tensors, model has {}",
                entries.len(),
                self.params.len() + self.buffers.len()
            )));
        }
        for p in &self.params {
            let t = find(p.name())
                .ok_or_else(|| TensorError::Incompatible(format!("missing {}", p.name())))?;
            if t.shape() != p.shape().as_slice() {
                return Err(TensorError::Incompatible(format!(
                    "{}: checkpoint shape {:?}, model shape {:?}",
                    p.name(),
                    t.shape(),
                    p.shape()
                )));
            }
            p.set_data(t.to_vec())?;
        }
        for b in &self.buffers {
            let t = find(b.name())
                .ok_or_else(|| TensorError::Incompatible(format!("missing {}", b.name())))?;
            if t.shape() != b.shape() {
                return Err(TensorError::Incompatible(format!(
                    "{}: checkpoint shape {:?}, model shape {:?}",
                    b.name(),
                    t.shape(),
                    b.shape()
                )));
            }
            b.set(t.to_vec())?;
        }
        Ok(())
    }
}

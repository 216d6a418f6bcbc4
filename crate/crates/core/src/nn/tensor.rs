use std::collections::HashMap;

use rand::Rng;

use crate::error::{Error, Result};

/// Dense row-major `f64` array.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; n],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::Shape(format!(
                "shape {shape:?} needs {n} values, got {}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("Tensor::from_vec"));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn vector(data: Vec<f64>) -> Result<Self> {
        Self::from_vec(&[data.len()], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    /// Row `r` of a 2-D tensor.
    pub fn row(&self, r: usize) -> &[f64] {
        let cols = self.shape[1];
        &self.data[r * cols..(r + 1) * cols]
    }
}

/// Handle to a parameter tensor in a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

/// How a new parameter is filled.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Init {
    Zeros,
    /// Uniform on `[-scale, scale]`.
    Uniform(f64),
}

/// Default initialization range for weights.
pub const INIT_SCALE: f64 = 0.08;

/// Parameter values, addressed by [`ParamId`]. Read-only during a forward pass.
#[derive(Clone, Debug, Default)]
pub struct Params {
    names: Vec<String>,
    values: Vec<Tensor>,
}

impl Params {
    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.values[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Gradient accumulators matching [`Params`] one-to-one.
#[derive(Clone, Debug, Default)]
pub struct Grads {
    values: Vec<Tensor>,
}

impl Grads {
    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.values[id.0]
    }

    pub fn zero(&mut self) {
        self.values.iter_mut().for_each(|g| g.fill(0.0));
    }

    pub fn l2_norm(&self) -> f64 {
        self.values
            .iter()
            .flat_map(|g| g.data().iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }
}

/// First and second moment estimates for the Adam-style update.
#[derive(Clone, Debug, Default)]
pub(crate) struct Moments {
    pub(crate) step: u64,
    pub(crate) first: Vec<Tensor>,
    pub(crate) second: Vec<Tensor>,
}

/// Named parameters, their gradients, and optimizer state.
///
/// Gradients always have the shape of their parameter and start at zero.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    params: Params,
    grads: Grads,
    by_name: HashMap<String, ParamId>,
    pub(crate) moments: Moments,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add<R: Rng + ?Sized>(&mut self, name: &str, shape: &[usize], init: Init, rng: &mut R) -> ParamId {
        assert!(!self.by_name.contains_key(name), "duplicate parameter name {name}");
        let mut t = Tensor::zeros(shape);
        if let Init::Uniform(s) = init {
            for v in t.data_mut() {
                *v = rng.gen_range(-s..=s);
            }
        }
        let id = ParamId(self.params.values.len());
        self.params.names.push(name.to_string());
        self.params.values.push(t);
        self.grads.values.push(Tensor::zeros(shape));
        self.by_name.insert(name.to_string(), id);
        id
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied()
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn grads(&self) -> &Grads {
        &self.grads
    }

    pub fn grads_mut(&mut self) -> &mut Grads {
        &mut self.grads
    }

    /// Borrows parameters for a forward pass and gradients for the matching backward pass.
    pub fn split(&mut self) -> (&Params, &mut Grads) {
        (&self.params, &mut self.grads)
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        self.params.get(id)
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.params.values[id.0]
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.values.len()).map(ParamId)
    }

    pub fn zero_grad(&mut self) {
        self.grads.zero();
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.params.values.iter().map(Tensor::len).sum()
    }

    /// Resets every parameter with `init` and clears gradients and optimizer state.
    pub fn reinitialize<R: Rng + ?Sized>(&mut self, init: Init, rng: &mut R) {
        for t in &mut self.params.values {
            match init {
                Init::Zeros => t.fill(0.0),
                Init::Uniform(s) => {
                    for v in t.data_mut() {
                        *v = rng.gen_range(-s..=s);
                    }
                }
            }
        }
        self.grads.zero();
        self.moments = Moments::default();
    }

    pub(crate) fn params_and_grads_mut(&mut self) -> (&mut [Tensor], &Grads, &mut Moments) {
        (&mut self.params.values, &self.grads, &mut self.moments)
    }
}

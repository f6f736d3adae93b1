//! Parameter declarations and the small layers shared by both networks.

use std::collections::HashMap;

use rand::Rng;

use crate::backend::Backend;
use crate::error::{Error, Result};
use crate::kernels::NormAxis;
use crate::tensor::Tensor;

/// How a parameter tensor is initialised.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    Zeros,
    Ones,
    /// Uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    FanIn(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: Init,
}

impl ParamSpec {
    pub fn new(name: impl Into<String>, shape: impl Into<Vec<usize>>, init: Init) -> Self {
        ParamSpec {
            name: name.into(),
            shape: shape.into(),
            init,
        }
    }

    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn initialise<R: Rng + ?Sized>(&self, rng: &mut R) -> Tensor {
        match self.init {
            Init::Zeros => Tensor::zeros(self.shape.clone()),
            Init::Ones => Tensor::full(self.shape.clone(), 1.0),
            Init::FanIn(fan_in) => {
                let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
                Tensor::uniform(self.shape.clone(), -bound, bound, rng)
            }
        }
    }
}

/// Named parameter handles living on a backend.
#[derive(Debug, Clone)]
pub struct Scope<V> {
    vars: HashMap<String, V>,
}

impl<V: Clone> Scope<V> {
    pub fn new() -> Self {
        Scope { vars: HashMap::new() }
    }

    /// Put every `(name, tensor)` pair on the backend as a leaf.
    pub fn bind<'a, B, I>(backend: &mut B, tensors: I) -> Self
    where
        B: Backend<Var = V>,
        I: IntoIterator<Item = (&'a str, Tensor)>,
    {
        let vars = tensors
            .into_iter()
            .map(|(name, t)| (name.to_owned(), backend.leaf(t)))
            .collect();
        Scope { vars }
    }

    pub fn insert(&mut self, name: impl Into<String>, v: V) {
        self.vars.insert(name.into(), v);
    }

    pub fn get(&self, name: &str) -> Result<V> {
        self.vars
            .get(name)
            .cloned()
            .ok_or_else(|| Error::MissingParam(name.to_owned()))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &V)> {
        self.vars.iter().map(|(k, v)| (k.as_str(), v))
    }
}

impl<V: Clone> Default for Scope<V> {
    fn default() -> Self {
        Self::new()
    }
}

/// Square-kernel convolution with bias, "same" padding.
#[derive(Debug, Clone)]
pub struct Conv<V> {
    pub weight: V,
    pub bias: V,
}

impl<V: Clone> Conv<V> {
    pub fn specs(prefix: &str, cin: usize, cout: usize, k: usize, zero: bool) -> Vec<ParamSpec> {
        let (wi, bi) = if zero {
            (Init::Zeros, Init::Zeros)
        } else {
            (Init::FanIn(cin * k * k), Init::FanIn(cin * k * k))
        };
        vec![
            ParamSpec::new(format!("{prefix}.weight"), vec![cout, cin, k, k], wi),
            ParamSpec::new(format!("{prefix}.bias"), vec![cout], bi),
        ]
    }

    pub fn bind(scope: &Scope<V>, prefix: &str) -> Result<Self> {
        Ok(Conv {
            weight: scope.get(&format!("{prefix}.weight"))?,
            bias: scope.get(&format!("{prefix}.bias"))?,
        })
    }

    pub fn forward<B: Backend<Var = V>>(&self, b: &mut B, x: &V) -> V {
        b.conv2d(x, &self.weight, Some(&self.bias))
    }
}

/// Per-pixel normalisation over channels with a learnable affine.
#[derive(Debug, Clone)]
pub struct LayerNorm<V> {
    pub gamma: V,
    pub beta: V,
}

pub const LAYER_NORM_EPS: f64 = 1e-5;

impl<V: Clone> LayerNorm<V> {
    pub fn specs(prefix: &str, width: usize) -> Vec<ParamSpec> {
        vec![
            ParamSpec::new(format!("{prefix}.gamma"), vec![width], Init::Ones),
            ParamSpec::new(format!("{prefix}.beta"), vec![width], Init::Zeros),
        ]
    }

    pub fn bind(scope: &Scope<V>, prefix: &str) -> Result<Self> {
        Ok(LayerNorm {
            gamma: scope.get(&format!("{prefix}.gamma"))?,
            beta: scope.get(&format!("{prefix}.beta"))?,
        })
    }

    /// `x` is `C x H x W`; statistics per pixel over channels.
    pub fn forward<B: Backend<Var = V>>(&self, b: &mut B, x: &V) -> V {
        let n = b.normalize(x, NormAxis::Channel, LAYER_NORM_EPS);
        let s = b.mul_channels(&n, &self.gamma);
        b.add_channels(&s, &self.beta)
    }
}

pub(crate) fn check_channels<B: Backend>(b: &B, x: &B::Var, expected: usize, what: &str) -> Result<()> {
    let shape = b.value(x).shape();
    if shape.len() != 3 || shape[0] != expected {
        return Err(Error::shape(format!(
            "{what} expects {expected} x H x W input, got {shape:?}"
        )));
    }
    Ok(())
}

pub(crate) fn check_finite<B: Backend>(b: &B, x: &B::Var, what: &str) -> Result<()> {
    if b.value(x).is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite(what.to_owned()))
    }
}

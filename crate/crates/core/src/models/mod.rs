//! TreeGCN generator and PointNet discriminator.
//!
//! Both models own a [`ParamStore`] and run their forward pass on a caller's
//! tape from the variables returned by [`ParamStore::bind`], so the same
//! code serves plain inference, training and gradient checks.

mod discriminator;
mod generator;

pub use discriminator::{DiscOutput, DiscVariant, DiscriminatorConfig, PointNetDiscriminator};
pub use generator::{GeneratorConfig, TreeGcnGenerator, TreeLayer};

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::Result;
use crate::tensor::{Element, ParamStore, Tensor, Var};

/// Slope of every LeakyReLU in both networks.
pub const LEAKY_SLOPE: f64 = 0.2;

/// Std of the normal used for TreeGCN branch embeddings.
pub const BRANCH_INIT_STD: f64 = 0.01;

/// Xavier-uniform `[fan_in, fan_out]` matrix.
pub fn xavier_uniform<T: Element, R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> Tensor<T> {
    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..fan_in * fan_out)
        .map(|_| T::from_f64(rng.random_range(-a..=a)))
        .collect();
    Tensor::new([fan_in, fan_out], data).expect("shape matches length")
}

pub(crate) fn normal_tensor<T: Element, R: Rng + ?Sized>(shape: [usize; 2], std: f64, rng: &mut R) -> Tensor<T> {
    let dist = Normal::new(0.0, std).expect("positive std");
    let data = (0..shape[0] * shape[1])
        .map(|_| T::from_f64(dist.sample(rng)))
        .collect();
    Tensor::new(shape, data).expect("shape matches length")
}

/// Dense layer `x W + b` over the rows of a rank-2 input.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Linear {
    pub weight: usize,
    pub bias: Option<usize>,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl Linear {
    pub fn new<T: Element, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        rng: &mut R,
        name: &str,
        fan_in: usize,
        fan_out: usize,
        bias: bool,
    ) -> Self {
        let weight = store.add(format!("{name}.weight"), xavier_uniform(fan_in, fan_out, rng));
        let bias = bias.then(|| store.add(format!("{name}.bias"), Tensor::zeros([fan_out])));
        Linear {
            weight,
            bias,
            fan_in,
            fan_out,
        }
    }

    pub fn forward<'t, T: Element>(&self, p: &[Var<'t, T>], x: &Var<'t, T>) -> Result<Var<'t, T>> {
        let y = x.matmul(&p[self.weight])?;
        match self.bias {
            Some(b) => y.add(&p[b]),
            None => Ok(y),
        }
    }

    /// Same computation on plain tensors.
    pub fn apply<T: Element>(&self, store: &ParamStore<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
        let y = x.matmul(&store.get(self.weight).value)?;
        match self.bias {
            Some(b) => y.add(&store.get(b).value),
            None => Ok(y),
        }
    }
}

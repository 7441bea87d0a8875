//! Trainable low-rank modules.
//!
//! [`LoraLayer`] is the plain `x·(W_pre + s·BA)` baseline. [`CapaBoostLayer`]
//! evaluates `d` masked, weight-tied copies of the same factors, either summed
//! linearly (mergeable into `W_pre`) or through a nonlinearity (adapter form).
//! Inputs are row vectors stacked into a `batch × d1` matrix.

mod activation;
mod capaboost;
mod lora;

pub use activation::Nonlinearity;
pub use capaboost::{CapaBoostLayer, ForwardTrace, Masking};
pub use lora::LoraLayer;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Matrix, RngStream};
use crate::masks::{MaskPattern, MaskPolicy, PolicyKind};

/// Gradients of a scalar loss with respect to the trainable tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradients {
    pub d_b: Matrix,
    pub d_a: Matrix,
    pub d_bias: Option<Vec<f64>>,
}

impl LayerGradients {
    /// Flat views in the order used by [`CapaBoostLayer::trainable_mut`].
    pub fn flat(&self) -> Vec<&[f64]> {
        let mut out = vec![self.d_b.as_slice(), self.d_a.as_slice()];
        if let Some(db) = &self.d_bias {
            out.push(db.as_slice());
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.d_b.is_finite()
            && self.d_a.is_finite()
            && self
                .d_bias
                .as_ref()
                .is_none_or(|b| b.iter().all(|v| v.is_finite()))
    }
}

/// How `B` is initialized. `A` is always Gaussian with standard deviation `1/√r`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitScheme {
    /// `B = 0`: training starts exactly at the pre-trained function.
    #[default]
    ZeroB,
    /// `B` standard normal: generic factors for rank studies.
    Gaussian,
}

fn default_d() -> usize {
    1
}
fn default_pattern() -> MaskPattern {
    MaskPattern::bernoulli(0.5)
}
fn default_policy() -> PolicyKind {
    PolicyKind::DiffMask
}
fn default_scale() -> f64 {
    1.0
}

/// Serializable description of a layer; see [`LayerConfig::build`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerConfig {
    pub d1: usize,
    pub d2: usize,
    pub r: usize,
    #[serde(default = "default_d")]
    pub d: usize,
    #[serde(default = "default_policy")]
    pub policy: PolicyKind,
    #[serde(default = "default_pattern")]
    pub pattern: MaskPattern,
    #[serde(default)]
    pub mask_seed: u64,
    #[serde(default)]
    pub nonlinearity: Nonlinearity,
    #[serde(default)]
    pub init: InitScheme,
    #[serde(default)]
    pub init_seed: u64,
    #[serde(default = "default_scale")]
    pub scale: f64,
    #[serde(default)]
    pub bias: bool,
}

impl LayerConfig {
    /// CapaBoost-LoRA with DiffMask Bernoulli masks of the given density.
    pub fn capaboost(d1: usize, d2: usize, r: usize, d: usize, density: f64) -> Self {
        Self {
            d1,
            d2,
            r,
            d,
            policy: PolicyKind::DiffMask,
            pattern: MaskPattern::bernoulli(density),
            mask_seed: 0,
            nonlinearity: Nonlinearity::None,
            init: InitScheme::ZeroB,
            init_seed: 0,
            scale: 1.0,
            bias: false,
        }
    }

    /// Plain LoRA expressed as a single all-ones module.
    pub fn lora(d1: usize, d2: usize, r: usize) -> Self {
        Self::capaboost(d1, d2, r, 1, 1.0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.d1 == 0 || self.d2 == 0 {
            return Err(Error::config("layer dimensions must be positive"));
        }
        if self.r == 0 || self.r > self.d1.min(self.d2) {
            return Err(Error::config(format!(
                "rank r = {} must lie in 1..={}",
                self.r,
                self.d1.min(self.d2)
            )));
        }
        if self.d == 0 {
            return Err(Error::config("number of tied modules d must be >= 1"));
        }
        if !self.scale.is_finite() {
            return Err(Error::config("scale must be finite"));
        }
        self.pattern.validate()
    }

    pub fn mask_policy(&self) -> MaskPolicy {
        MaskPolicy::from_base(self.policy, self.mask_seed, self.d)
    }

    /// Initializes a layer on top of the frozen weight `w_pre` (d1×d2).
    ///
    /// One stream seeded with `init_seed` draws `A` and then, for the Gaussian
    /// scheme, `B`.
    pub fn build(&self, w_pre: Matrix) -> Result<CapaBoostLayer> {
        self.validate()?;
        if w_pre.shape() != (self.d1, self.d2) {
            return Err(Error::Shape {
                op: "LayerConfig::build",
                lhs: (self.d1, self.d2),
                rhs: w_pre.shape(),
            });
        }
        let mut rng = RngStream::new(self.init_seed);
        let a = Matrix::gaussian(self.r, self.d2, &mut rng).scale(1.0 / (self.r as f64).sqrt());
        let b = match self.init {
            InitScheme::ZeroB => Matrix::zeros(self.d1, self.r),
            InitScheme::Gaussian => Matrix::gaussian(self.d1, self.r, &mut rng),
        };
        let mut layer = CapaBoostLayer::new(
            w_pre,
            b,
            a,
            self.d,
            self.mask_policy(),
            self.pattern,
            self.nonlinearity,
        )?
        .with_scale(self.scale);
        if self.bias {
            layer = layer.with_bias(vec![0.0; self.d2])?;
        }
        Ok(layer)
    }

    /// [`build`](Self::build) with a zero frozen weight.
    pub fn build_zero_base(&self) -> Result<CapaBoostLayer> {
        self.build(Matrix::zeros(self.d1, self.d2))
    }
}

//! Parameter and FLOP accounting.
//!
//! Counts are per input token for the incremental path. One multiply-accumulate
//! is two FLOPs. "Stored" parameters are the factor entries kept by at least one
//! mask; the optimizer still holds `B` and `A` densely, which is reported
//! separately as `optimizer_state_params`.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::layers::{CapaBoostLayer, LayerConfig, Masking};
use crate::masks::{self, PolicyKind};

pub const FLOP_CONVENTION: &str =
    "per input token, incremental path only; 1 multiply-accumulate = 2 FLOPs";

/// Reference configuration the relative factors are quoted against.
pub const DEFAULT_REFERENCE_RANK: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Train,
    Infer,
}

/// Dense factor size `d1·r + r·d2`.
pub fn dense_factor_params(d1: usize, d2: usize, r: usize) -> u64 {
    (d1 * r + r * d2) as u64
}

/// Closed-form expected stored factor entries for a configuration.
pub fn expected_stored_params(cfg: &LayerConfig) -> f64 {
    let dense = dense_factor_params(cfg.d1, cfg.d2, cfg.r) as f64;
    let rho = cfg.pattern.density();
    match cfg.policy {
        PolicyKind::DiffMask => dense * masks::expected_stored_fraction(1.0 - rho, cfg.d),
        PolicyKind::SameMask => dense * rho,
        // fresh masks every step eventually touch every entry
        PolicyKind::Dropout => dense,
    }
}

/// Expected training MACs per token: every branch multiplies density-ρ factors.
pub fn expected_train_macs(cfg: &LayerConfig) -> f64 {
    cfg.d as f64 * cfg.pattern.density() * dense_factor_params(cfg.d1, cfg.d2, cfg.r) as f64
}

/// Exact FLOPs per token of `layer` in `mode`, counted from its realized masks.
///
/// Training evaluates all `d` branches. Inference uses the unmerged branch path:
/// static masks as in training (a shared mask is evaluated once), dropout by a
/// single dense branch with mean-scaled factors.
pub fn flop_count(layer: &CapaBoostLayer, mode: Mode) -> Result<u64> {
    let (d1, d2) = layer.dims();
    let dense = dense_factor_params(d1, d2, layer.r());
    let macs = match (mode, layer.policy().kind()) {
        (Mode::Infer, PolicyKind::Dropout) => dense,
        (Mode::Infer, PolicyKind::SameMask) => {
            let (mb, ma) = layer.masks(Masking::Step(0))?;
            nnz(&mb[0]) + nnz(&ma[0])
        }
        _ => {
            let (mb, ma) = layer.masks(Masking::Step(0))?;
            mb.iter().chain(&ma).map(nnz).sum()
        }
    };
    Ok(2 * macs)
}

fn nnz(m: &crate::linalg::Matrix) -> u64 {
    m.as_slice().iter().filter(|&&v| v != 0.0).count() as u64
}

/// Exact stored factor entries of `layer`: the union of its masks per factor.
pub fn realized_stored_params(layer: &CapaBoostLayer) -> Result<u64> {
    if layer.policy().kind() == PolicyKind::Dropout {
        let (d1, d2) = layer.dims();
        return Ok(dense_factor_params(d1, d2, layer.r()));
    }
    let (mb, ma) = layer.masks(Masking::Step(0))?;
    Ok((masks::union_count(&mb)? + masks::union_count(&ma)?) as u64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelativeFactors {
    /// Expected stored parameters over the reference's dense count.
    pub params: f64,
    /// Realized stored parameters over the reference's dense count.
    pub params_realized: f64,
    pub train_flops: f64,
    pub train_flops_realized: f64,
    pub infer_flops: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccountingReport {
    pub convention: String,
    pub d1: usize,
    pub d2: usize,
    pub r: usize,
    pub d: usize,
    pub policy: PolicyKind,
    pub density: f64,
    pub reference_r: usize,
    pub dense_factor_params: u64,
    pub expected_stored_params: f64,
    /// Union of kept factor entries.
    pub stored_params: u64,
    /// Stored factor entries plus the bias.
    pub trainable_params: u64,
    pub optimizer_state_params: u64,
    pub expected_train_flops_per_token: f64,
    pub train_flops_per_token: u64,
    pub infer_flops_per_token: u64,
    /// Cost of the merged dense weight; identical to the frozen layer alone.
    pub merged_infer_flops_per_token: u64,
    pub relative_to_reference: RelativeFactors,
}

impl AccountingReport {
    /// Report for `layer` built from `cfg`, relative to LoRA of rank `reference_r`.
    pub fn for_layer(cfg: &LayerConfig, layer: &CapaBoostLayer, reference_r: usize) -> Result<Self> {
        let dense = dense_factor_params(cfg.d1, cfg.d2, cfg.r);
        let bias = if cfg.bias { cfg.d2 as u64 } else { 0 };
        let stored = realized_stored_params(layer)?;
        let train = flop_count(layer, Mode::Train)?;
        let infer = flop_count(layer, Mode::Infer)?;
        let expected_stored = expected_stored_params(cfg);
        let expected_train_macs = expected_train_macs(cfg);

        let ref_dense = dense_factor_params(cfg.d1, cfg.d2, reference_r) as f64;
        let ref_flops = 2.0 * ref_dense;
        Ok(Self {
            convention: FLOP_CONVENTION.to_string(),
            d1: cfg.d1,
            d2: cfg.d2,
            r: cfg.r,
            d: cfg.d,
            policy: cfg.policy,
            density: cfg.pattern.density(),
            reference_r,
            dense_factor_params: dense,
            expected_stored_params: expected_stored,
            stored_params: stored,
            trainable_params: stored + bias,
            optimizer_state_params: dense + bias,
            expected_train_flops_per_token: 2.0 * expected_train_macs,
            train_flops_per_token: train,
            infer_flops_per_token: infer,
            merged_infer_flops_per_token: 2 * (cfg.d1 * cfg.d2) as u64,
            relative_to_reference: RelativeFactors {
                params: expected_stored / ref_dense,
                params_realized: stored as f64 / ref_dense,
                train_flops: 2.0 * expected_train_macs / ref_flops,
                train_flops_realized: train as f64 / ref_flops,
                infer_flops: infer as f64 / ref_flops,
            },
        })
    }

    /// Builds the layer on a zero base and reports on it.
    pub fn for_config(cfg: &LayerConfig, reference_r: usize) -> Result<Self> {
        let layer = cfg.build_zero_base()?;
        Self::for_layer(cfg, &layer, reference_r)
    }
}

/// Expected stored-parameter factor relative to LoRA of rank `reference_r`.
pub fn param_factor(cfg: &LayerConfig, reference_r: usize) -> f64 {
    expected_stored_params(cfg) / dense_factor_params(cfg.d1, cfg.d2, reference_r) as f64
}

/// Expected training FLOP factor relative to LoRA of rank `reference_r`.
pub fn train_flop_factor(cfg: &LayerConfig, reference_r: usize) -> f64 {
    expected_train_macs(cfg) / dense_factor_params(cfg.d1, cfg.d2, reference_r) as f64
}

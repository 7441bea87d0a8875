//! WebAssembly bindings for the browser demo. Every export takes plain numbers
//! and returns a JSON string; the `*_json` functions are the same operations
//! callable natively.

use capaboost::layers::{InitScheme, LayerConfig, Masking};
use capaboost::linalg::{product_singular_values, rank_from_values, DEFAULT_RANK_TOL};
use capaboost::masks::{expected_stored_fraction, masks_for_policy, union_stored_fraction, MaskPattern, MaskPolicy, PolicyKind};
use capaboost::rankcheck::{rank_additivity_trials, RankTrialConfig};
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Largest layer side the demo accepts, to keep the page responsive.
pub const MAX_DIM: usize = 512;
pub const MAX_TRIALS: usize = 5000;

#[derive(Serialize)]
struct Spectrum {
    singular_values: Vec<f64>,
    rank: usize,
    expected_rank: usize,
    stored_params: usize,
    dense_params: usize,
}

fn check_dim(name: &str, v: usize) -> Result<(), String> {
    if v == 0 || v > MAX_DIM {
        Err(format!("{name} must lie in 1..={MAX_DIM}"))
    } else {
        Ok(())
    }
}

/// Singular values of the effective weight of a Gaussian-initialized layer.
pub fn rank_spectrum_json(dim: usize, r: usize, d: usize, density: f64, policy: &str, seed: u64) -> Result<String, String> {
    check_dim("dim", dim)?;
    if d == 0 || d > 16 {
        return Err("d must lie in 1..=16".into());
    }
    let kind: PolicyKind = policy.parse().map_err(|e: capaboost::Error| e.to_string())?;
    let mut cfg = LayerConfig::capaboost(dim, dim, r, d, density);
    cfg.policy = kind;
    cfg.init = InitScheme::Gaussian;
    cfg.init_seed = seed;
    cfg.mask_seed = seed;
    let layer = cfg.build_zero_base().map_err(|e| e.to_string())?;
    let (left, right) = layer.effective_factors(Masking::Step(0)).map_err(|e| e.to_string())?;
    let values = product_singular_values(&left, &right).map_err(|e| e.to_string())?;
    let report = capaboost::accounting::AccountingReport::for_layer(&cfg, &layer, r).map_err(|e| e.to_string())?;
    let out = Spectrum {
        rank: rank_from_values(&values, DEFAULT_RANK_TOL),
        expected_rank: match kind {
            PolicyKind::DiffMask => (d * r).min(dim),
            _ => r,
        },
        singular_values: values,
        stored_params: report.stored_params as usize,
        dense_params: report.dense_factor_params as usize,
    };
    serde_json::to_string(&out).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct MaskGrid {
    rows: usize,
    cols: usize,
    /// One string of `0`/`1` per module, row-major.
    masks: Vec<String>,
    union_fraction: f64,
    expected_union_fraction: f64,
}

/// The `d` masks a policy yields at `step`, with their union density.
pub fn mask_grid_json(rows: usize, cols: usize, d: usize, density: f64, policy: &str, seed: u64, step: u64) -> Result<String, String> {
    check_dim("rows", rows)?;
    check_dim("cols", cols)?;
    if d == 0 || d > 16 {
        return Err("d must lie in 1..=16".into());
    }
    let kind: PolicyKind = policy.parse().map_err(|e: capaboost::Error| e.to_string())?;
    let pattern = MaskPattern::bernoulli(density);
    pattern.validate().map_err(|e| e.to_string())?;
    let masks = masks_for_policy(&MaskPolicy::from_base(kind, seed, d), pattern, d, (rows, cols), step)
        .map_err(|e| e.to_string())?;
    let union = union_stored_fraction(&masks).map_err(|e| e.to_string())?;
    let expected = match kind {
        PolicyKind::DiffMask | PolicyKind::Dropout => expected_stored_fraction(1.0 - density, d),
        PolicyKind::SameMask => density,
    };
    let out = MaskGrid {
        rows,
        cols,
        masks: masks
            .iter()
            .map(|m| m.as_slice().iter().map(|&v| if v != 0.0 { '1' } else { '0' }).collect())
            .collect(),
        union_fraction: union,
        expected_union_fraction: expected,
    };
    serde_json::to_string(&out).map_err(|e| e.to_string())
}

/// Monte-Carlo rank additivity report (histogram of `rank(X + Y)`).
pub fn theorem_trials_json(d_dim: usize, r: usize, trials: usize, seed: u64) -> Result<String, String> {
    check_dim("d_dim", d_dim)?;
    if trials > MAX_TRIALS {
        return Err(format!("at most {MAX_TRIALS} trials"));
    }
    let report = rank_additivity_trials(&RankTrialConfig::new(d_dim, r, trials, seed)).map_err(|e| e.to_string())?;
    serde_json::to_string(&report).map_err(|e| e.to_string())
}

fn js(r: Result<String, String>) -> Result<String, JsValue> {
    r.map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn rank_spectrum(dim: usize, r: usize, d: usize, density: f64, policy: &str, seed: u32) -> Result<String, JsValue> {
    js(rank_spectrum_json(dim, r, d, density, policy, seed.into()))
}

#[wasm_bindgen]
pub fn mask_grid(rows: usize, cols: usize, d: usize, density: f64, policy: &str, seed: u32, step: u32) -> Result<String, JsValue> {
    js(mask_grid_json(rows, cols, d, density, policy, seed.into(), step.into()))
}

#[wasm_bindgen]
pub fn theorem_trials(d_dim: usize, r: usize, trials: usize, seed: u32) -> Result<String, JsValue> {
    js(theorem_trials_json(d_dim, r, trials, seed.into()))
}

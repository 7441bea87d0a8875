//! Empirical rank checks.
//!
//! [`rank_additivity_trials`] samples two independent rank-`r` products of
//! Gaussian factors in `R^{n×n}` and tests `rank(X + Y) = rank(X) + rank(Y)`.
//! For `2r < n` this holds with probability one; the boundary and violating
//! regimes are measured and reported but not expected to be additive.
//!
//! [`layer_rank_sweep`] measures the rank of CapaBoost effective weights over
//! a grid of `(r, d)` cells.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::accounting;
use crate::error::{Error, Result};
use crate::layers::{InitScheme, LayerConfig, Masking};
use crate::linalg::{numerical_rank, singular_values, rank_from_values, Matrix, RngStream, DEFAULT_RANK_TOL};
use crate::masks::{MaskPattern, PolicyKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RankTrialConfig {
    /// Ambient dimension `n` of the `n×n` matrices.
    pub d_dim: usize,
    pub r: usize,
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_tol")]
    pub rel_tol: f64,
}

fn default_tol() -> f64 {
    DEFAULT_RANK_TOL
}

impl RankTrialConfig {
    pub fn new(d_dim: usize, r: usize, trials: usize, seed: u64) -> Self {
        Self {
            d_dim,
            r,
            trials,
            seed,
            rel_tol: DEFAULT_RANK_TOL,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_dim == 0 {
            return Err(Error::config("d_dim must be positive"));
        }
        if self.trials == 0 {
            return Err(Error::config("trials must be >= 1"));
        }
        if !(self.rel_tol > 0.0 && self.rel_tol < 1.0) {
            return Err(Error::config(format!("rel_tol must lie in (0, 1), got {}", self.rel_tol)));
        }
        if self.r > self.d_dim {
            return Err(Error::config(format!("r = {} exceeds d_dim = {}", self.r, self.d_dim)));
        }
        Ok(())
    }

    pub fn regime(&self) -> Regime {
        Regime::of(self.d_dim, self.r)
    }
}

/// Position of `2r` relative to the ambient dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// `2r < n`: additivity is expected almost surely.
    Additive,
    /// `2r = n`.
    Boundary,
    /// `2r > n`: `rank(X + Y) ≤ n < 2r`, additivity impossible.
    Violating,
}

impl Regime {
    pub fn of(n: usize, r: usize) -> Self {
        match (2 * r).cmp(&n) {
            std::cmp::Ordering::Less => Regime::Additive,
            std::cmp::Ordering::Equal => Regime::Boundary,
            std::cmp::Ordering::Greater => Regime::Violating,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub rank_x: usize,
    pub rank_y: usize,
    pub rank_sum: usize,
}

impl TrialOutcome {
    pub fn additive(&self) -> bool {
        self.rank_sum == self.rank_x + self.rank_y
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankTrialReport {
    pub config: RankTrialConfig,
    pub regime: Regime,
    pub trials_run: usize,
    /// Trials with `rank(X + Y) == rank(X) + rank(Y)`.
    pub successes: usize,
    /// Trials whose rank of `X` and of `Y` both equal `r`.
    pub full_factor_rank: usize,
    /// Trials whose singular value computation failed; not counted as failures of additivity.
    pub numeric_errors: usize,
    /// Observed `rank(X + Y)` → count.
    pub sum_rank_histogram: BTreeMap<usize, usize>,
}

impl RankTrialReport {
    pub fn success_rate(&self) -> f64 {
        let judged = self.trials_run - self.numeric_errors;
        if judged == 0 {
            0.0
        } else {
            self.successes as f64 / judged as f64
        }
    }

    /// All judged trials additive, no numeric errors, in the additive regime.
    pub fn theorem_holds(&self) -> bool {
        self.regime == Regime::Additive
            && self.numeric_errors == 0
            && self.successes == self.trials_run
    }

    pub fn summary(&self) -> String {
        format!(
            "n={} r={} regime={:?}: {}/{} additive, {} with rank(X)=rank(Y)=r, {} numeric errors, rank(X+Y) histogram {:?}",
            self.config.d_dim,
            self.config.r,
            self.regime,
            self.successes,
            self.trials_run,
            self.full_factor_rank,
            self.numeric_errors,
            self.sum_rank_histogram
        )
    }
}

/// One trial with its own stream seeded `base_seed + index`.
pub fn rank_additivity_trial(cfg: &RankTrialConfig, index: usize) -> Result<TrialOutcome> {
    let n = cfg.d_dim;
    if cfg.r == 0 {
        return Ok(TrialOutcome {
            rank_x: 0,
            rank_y: 0,
            rank_sum: 0,
        });
    }
    let mut rng = RngStream::new(cfg.seed.wrapping_add(index as u64));
    let x_col = Matrix::gaussian(n, cfg.r, &mut rng);
    let x_row = Matrix::gaussian(cfg.r, n, &mut rng);
    let y_col = Matrix::gaussian(n, cfg.r, &mut rng);
    let y_row = Matrix::gaussian(cfg.r, n, &mut rng);
    let x = x_col.matmul(&x_row)?;
    let y = y_col.matmul(&y_row)?;
    let sum = x.add(&y)?;
    Ok(TrialOutcome {
        rank_x: numerical_rank(&x, cfg.rel_tol)?,
        rank_y: numerical_rank(&y, cfg.rel_tol)?,
        rank_sum: numerical_rank(&sum, cfg.rel_tol)?,
    })
}

/// Runs `cfg.trials` independent trials (concurrently with the `parallel` feature).
pub fn rank_additivity_trials(cfg: &RankTrialConfig) -> Result<RankTrialReport> {
    cfg.validate()?;
    let outcomes: Vec<Result<TrialOutcome>> = map_indices(cfg.trials, |t| rank_additivity_trial(cfg, t));

    let mut report = RankTrialReport {
        config: cfg.clone(),
        regime: cfg.regime(),
        trials_run: cfg.trials,
        successes: 0,
        full_factor_rank: 0,
        numeric_errors: 0,
        sum_rank_histogram: BTreeMap::new(),
    };
    for outcome in outcomes {
        match outcome {
            Ok(o) => {
                if o.additive() {
                    report.successes += 1;
                }
                if o.rank_x == cfg.r && o.rank_y == cfg.r {
                    report.full_factor_rank += 1;
                }
                *report.sum_rank_histogram.entry(o.rank_sum).or_default() += 1;
            }
            Err(Error::Numeric(_)) => report.numeric_errors += 1,
            Err(e) => return Err(e),
        }
    }
    Ok(report)
}

#[cfg(feature = "parallel")]
pub(crate) fn map_indices<T: Send>(n: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn map_indices<T: Send>(n: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    (0..n).map(f).collect()
}

/// How the rank of an effective weight is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankMethod {
    /// Singular values of the materialized `d1 × d2` matrix.
    #[default]
    Dense,
    /// Singular values of the product from QR factors of `[B⊙m_b…]` and `[A⊙m_a…]`.
    Factored,
}

fn default_r_values() -> Vec<usize> {
    vec![8, 16, 32, 64]
}
fn default_d_values() -> Vec<usize> {
    vec![1, 2, 4]
}
fn default_density() -> f64 {
    0.5
}
fn default_seeds() -> Vec<u64> {
    vec![0, 1, 2]
}
fn default_dim() -> usize {
    768
}
fn default_reference_r() -> usize {
    accounting::DEFAULT_REFERENCE_RANK
}
fn default_policy() -> PolicyKind {
    PolicyKind::DiffMask
}

/// Grid for [`layer_rank_sweep`]. Cells with `d = 1` are plain LoRA (all-ones mask).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RankSweepConfig {
    #[serde(default = "default_dim")]
    pub d1: usize,
    #[serde(default = "default_dim")]
    pub d2: usize,
    #[serde(default = "default_r_values")]
    pub r_values: Vec<usize>,
    #[serde(default = "default_d_values")]
    pub d_values: Vec<usize>,
    #[serde(default = "default_policy")]
    pub policy: PolicyKind,
    #[serde(default = "default_density")]
    pub density: f64,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_tol")]
    pub rel_tol: f64,
    #[serde(default)]
    pub method: RankMethod,
    #[serde(default = "default_reference_r")]
    pub reference_r: usize,
}

impl Default for RankSweepConfig {
    fn default() -> Self {
        Self {
            d1: default_dim(),
            d2: default_dim(),
            r_values: default_r_values(),
            d_values: default_d_values(),
            policy: default_policy(),
            density: default_density(),
            seeds: default_seeds(),
            rel_tol: DEFAULT_RANK_TOL,
            method: RankMethod::default(),
            reference_r: default_reference_r(),
        }
    }
}

impl RankSweepConfig {
    /// Layer configuration of one cell. Rank studies use Gaussian `B`.
    pub fn layer_config(&self, r: usize, d: usize, seed: u64) -> LayerConfig {
        let density = if d == 1 { 1.0 } else { self.density };
        let mut cfg = LayerConfig::capaboost(self.d1, self.d2, r, d, density);
        cfg.policy = self.policy;
        cfg.pattern = MaskPattern::bernoulli(density);
        cfg.init = InitScheme::Gaussian;
        cfg.init_seed = seed;
        cfg.mask_seed = seed.wrapping_mul(1_000_003);
        cfg
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankCell {
    pub r: usize,
    pub d: usize,
    /// Measured rank per seed, in `seeds` order.
    pub ranks: Vec<usize>,
    /// `min(d·r, d1, d2)`.
    pub expected_rank: usize,
    pub params_factor: f64,
    pub params_factor_realized: f64,
}

impl RankCell {
    pub fn consistent(&self) -> bool {
        self.ranks.iter().all(|&k| k == self.ranks[0])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankTable {
    pub config: RankSweepConfig,
    pub cells: Vec<RankCell>,
}

impl RankTable {
    pub fn cell(&self, r: usize, d: usize) -> Option<&RankCell> {
        self.cells.iter().find(|c| c.r == r && c.d == d)
    }
}

/// Rank of the effective weight of a layer built from `cfg`.
pub fn effective_weight_rank(cfg: &LayerConfig, method: RankMethod, rel_tol: f64) -> Result<usize> {
    let layer = cfg.build_zero_base()?;
    match method {
        RankMethod::Factored => layer.effective_rank(Masking::Step(0), rel_tol),
        RankMethod::Dense => {
            let e = layer.effective_weight(0)?;
            Ok(rank_from_values(&singular_values(&e)?, rel_tol))
        }
    }
}

/// Measured effective-weight ranks over the `(r, d)` grid.
pub fn layer_rank_sweep(cfg: &RankSweepConfig) -> Result<RankTable> {
    if cfg.seeds.is_empty() || cfg.r_values.is_empty() || cfg.d_values.is_empty() {
        return Err(Error::config("rank sweep needs seeds, r values and d values"));
    }
    let jobs: Vec<(usize, usize, u64)> = cfg
        .d_values
        .iter()
        .flat_map(|&d| {
            cfg.r_values
                .iter()
                .flat_map(move |&r| cfg.seeds.iter().map(move |&s| (r, d, s)))
        })
        .collect();
    let ranks = map_indices(jobs.len(), |j| {
        let (r, d, seed) = jobs[j];
        effective_weight_rank(&cfg.layer_config(r, d, seed), cfg.method, cfg.rel_tol)
    });
    let ranks = ranks.into_iter().collect::<Result<Vec<_>>>()?;

    let mut cells = Vec::new();
    for (k, chunk) in ranks.chunks(cfg.seeds.len()).enumerate() {
        let (r, d, _) = jobs[k * cfg.seeds.len()];
        let layer_cfg = cfg.layer_config(r, d, cfg.seeds[0]);
        let report = accounting::AccountingReport::for_config(&layer_cfg, cfg.reference_r)?;
        cells.push(RankCell {
            r,
            d,
            ranks: chunk.to_vec(),
            expected_rank: (d * r).min(cfg.d1).min(cfg.d2),
            params_factor: report.relative_to_reference.params,
            params_factor_realized: report.relative_to_reference.params_realized,
        });
    }
    Ok(RankTable {
        config: cfg.clone(),
        cells,
    })
}

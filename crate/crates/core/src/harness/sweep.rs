use serde::{Deserialize, Serialize};

use super::train::{run_experiment, ExperimentConfig, ExperimentResult};
use crate::error::{Error, Result};
use crate::masks::{MaskPattern, PolicyKind};
use crate::rankcheck::map_indices;

fn all_policies() -> Vec<PolicyKind> {
    PolicyKind::ALL.to_vec()
}

fn default_density() -> f64 {
    0.5
}

/// Final loss vs mask density for each mask policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensitySweepConfig {
    /// Template run; the sweep overrides density, policy and seeds.
    pub base: ExperimentConfig,
    pub densities: Vec<f64>,
    #[serde(default = "all_policies")]
    pub policies: Vec<PolicyKind>,
    pub seeds: Vec<u64>,
}

/// Final loss over an `(r, d)` grid at fixed density and policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DimensionSweepConfig {
    pub base: ExperimentConfig,
    pub r_values: Vec<usize>,
    pub d_values: Vec<usize>,
    #[serde(default = "default_density")]
    pub density: f64,
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "sweep", rename_all = "snake_case")]
pub enum SweepSpec {
    Density(DensitySweepConfig),
    Dimension(DimensionSweepConfig),
}

impl SweepSpec {
    pub fn configs(&self) -> Result<Vec<ExperimentConfig>> {
        match self {
            SweepSpec::Density(c) => c.configs(),
            SweepSpec::Dimension(c) => c.configs(),
        }
    }

    pub fn run(&self) -> Result<Vec<ExperimentResult>> {
        run_all(&self.configs()?)
    }
}

/// Points `cfg` at seed `seed` for data, initialization and masks alike, so
/// runs that differ only in the swept axis share task and starting point.
pub fn with_seed(cfg: &ExperimentConfig, seed: u64) -> ExperimentConfig {
    let mut out = cfg.clone();
    out.data_seed = seed;
    out.layer.init_seed = seed;
    out.layer.mask_seed = seed;
    out
}

impl DensitySweepConfig {
    pub fn configs(&self) -> Result<Vec<ExperimentConfig>> {
        if self.densities.is_empty() || self.policies.is_empty() || self.seeds.is_empty() {
            return Err(Error::config("density sweep needs densities, policies and seeds"));
        }
        if let Some(bad) = self.densities.iter().find(|&&p| !(p > 0.0 && p <= 1.0)) {
            return Err(Error::config(format!("sweep density {bad} outside (0, 1]")));
        }
        let mut out = Vec::new();
        for &density in &self.densities {
            for &policy in &self.policies {
                for &seed in &self.seeds {
                    let mut cfg = with_seed(&self.base, seed);
                    cfg.layer.pattern = MaskPattern::bernoulli(density);
                    cfg.layer.policy = policy;
                    out.push(cfg);
                }
            }
        }
        Ok(out)
    }

    pub fn run(&self) -> Result<Vec<ExperimentResult>> {
        run_all(&self.configs()?)
    }
}

impl DimensionSweepConfig {
    pub fn configs(&self) -> Result<Vec<ExperimentConfig>> {
        if self.r_values.is_empty() || self.d_values.is_empty() || self.seeds.is_empty() {
            return Err(Error::config("dimension sweep needs r values, d values and seeds"));
        }
        let mut out = Vec::new();
        for &d in &self.d_values {
            for &r in &self.r_values {
                for &seed in &self.seeds {
                    let mut cfg = with_seed(&self.base, seed);
                    cfg.layer.r = r;
                    cfg.layer.d = d;
                    cfg.layer.pattern = MaskPattern::bernoulli(self.density);
                    out.push(cfg);
                }
            }
        }
        Ok(out)
    }

    pub fn run(&self) -> Result<Vec<ExperimentResult>> {
        run_all(&self.configs()?)
    }
}

/// Runs independent experiments (concurrently with the `parallel` feature),
/// returning results in input order.
pub fn run_all(configs: &[ExperimentConfig]) -> Result<Vec<ExperimentResult>> {
    for cfg in configs {
        cfg.validate()?;
    }
    map_indices(configs.len(), |i| run_experiment(&configs[i]))
        .into_iter()
        .collect()
}

/// Median of a nonempty slice; NaN for an empty one.
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Per-cell medians over seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub policy: PolicyKind,
    pub d: usize,
    pub r: usize,
    pub density: f64,
    pub runs: usize,
    pub median_final_train_loss: f64,
    pub median_final_eval_loss: f64,
    pub max_final_rank: Option<usize>,
    pub params_factor: f64,
    pub stored_params: u64,
}

/// Groups results by (policy, d, r, density) in first-seen order and takes medians.
pub fn summarize(results: &[ExperimentResult]) -> Vec<CellSummary> {
    let mut cells: Vec<(CellSummary, Vec<f64>, Vec<f64>)> = Vec::new();
    for res in results {
        let l = &res.config.layer;
        let density = l.pattern.density();
        let pos = cells.iter().position(|(c, _, _)| {
            c.policy == l.policy && c.d == l.d && c.r == l.r && c.density == density
        });
        let idx = match pos {
            Some(i) => i,
            None => {
                cells.push((
                    CellSummary {
                        policy: l.policy,
                        d: l.d,
                        r: l.r,
                        density,
                        runs: 0,
                        median_final_train_loss: f64::NAN,
                        median_final_eval_loss: f64::NAN,
                        max_final_rank: None,
                        params_factor: res.accounting.relative_to_reference.params,
                        stored_params: res.accounting.stored_params,
                    },
                    Vec::new(),
                    Vec::new(),
                ));
                cells.len() - 1
            }
        };
        let (cell, train, eval) = &mut cells[idx];
        cell.runs += 1;
        train.push(res.final_train_loss());
        eval.push(res.final_eval_loss());
        cell.max_final_rank = match (cell.max_final_rank, res.final_rank) {
            (Some(a), Some(b)) => Some(a.max(b)),
            (a, b) => a.or(b),
        };
    }
    cells
        .into_iter()
        .map(|(mut cell, train, eval)| {
            cell.median_final_train_loss = median(&train);
            cell.median_final_eval_loss = median(&eval);
            cell
        })
        .collect()
}

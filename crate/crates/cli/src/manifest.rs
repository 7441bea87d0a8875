use std::path::{Path, PathBuf};

use capaboost::accounting::DEFAULT_REFERENCE_RANK;
use capaboost::harness::{ExperimentConfig, SweepSpec};
use capaboost::layers::LayerConfig;
use capaboost::rankcheck::{RankSweepConfig, RankTrialConfig};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const MANIFEST_VERSION: u32 = 1;

/// A run description. `seed` is added to every seed inside `command`, so one
/// manifest can be replayed under a different global seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub version: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    pub command: Command,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Theorem1(Theorem1Command),
    RankTable(RankSweepConfig),
    Accounting(AccountingCommand),
    Sweep(SweepSpec),
    TrainOne(ExperimentConfig),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Theorem1(_) => "theorem1",
            Command::RankTable(_) => "rank-table",
            Command::Accounting(_) => "accounting",
            Command::Sweep(_) => "sweep",
            Command::TrainOne(_) => "train-one",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Theorem1Command {
    pub configs: Vec<RankTrialConfig>,
}

fn default_reference_r() -> usize {
    DEFAULT_REFERENCE_RANK
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AccountingCommand {
    pub configs: Vec<LayerConfig>,
    #[serde(default = "default_reference_r")]
    pub reference_r: usize,
}

impl AccountingCommand {
    /// LoRA and CapaBoost-LoRA (d = 2, 4; density 0.5) at 768×768 for
    /// r in {8, 16, 32, 64}, plus a half-bottleneck d = 2 adapter.
    pub fn paper_grid() -> Self {
        let mut configs = Vec::new();
        for d in [1, 2, 4] {
            for r in [8, 16, 32, 64] {
                let density = if d == 1 { 1.0 } else { 0.5 };
                configs.push(LayerConfig::capaboost(768, 768, r, d, density));
            }
        }
        let mut adapter = LayerConfig::capaboost(768, 768, DEFAULT_REFERENCE_RANK / 2, 2, 0.5);
        adapter.nonlinearity = capaboost::layers::Nonlinearity::Relu;
        configs.push(adapter);
        Self {
            configs,
            reference_r: DEFAULT_REFERENCE_RANK,
        }
    }
}

impl Manifest {
    pub fn new(command: Command) -> Self {
        Self {
            version: MANIFEST_VERSION,
            seed: 0,
            output_dir: None,
            command,
        }
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let m: Manifest = serde_json::from_str(text)
            .map_err(|e| CliError::Usage(format!("invalid manifest: {e}")))?;
        if m.version != MANIFEST_VERSION {
            return Err(CliError::Usage(format!(
                "unsupported manifest version {} (expected {MANIFEST_VERSION})",
                m.version
            )));
        }
        Ok(m)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read manifest {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// The command with the global seed folded into its own seeds.
    pub fn seeded_command(&self) -> Command {
        let g = self.seed;
        let mut cmd = self.command.clone();
        match &mut cmd {
            Command::Theorem1(t) => {
                for c in &mut t.configs {
                    c.seed = c.seed.wrapping_add(g);
                }
            }
            Command::RankTable(t) => {
                for s in &mut t.seeds {
                    *s = s.wrapping_add(g);
                }
            }
            Command::Accounting(a) => {
                for c in &mut a.configs {
                    c.mask_seed = c.mask_seed.wrapping_add(g);
                    c.init_seed = c.init_seed.wrapping_add(g);
                }
            }
            Command::Sweep(SweepSpec::Density(s)) => {
                for x in &mut s.seeds {
                    *x = x.wrapping_add(g);
                }
            }
            Command::Sweep(SweepSpec::Dimension(s)) => {
                for x in &mut s.seeds {
                    *x = x.wrapping_add(g);
                }
            }
            Command::TrainOne(e) => {
                e.data_seed = e.data_seed.wrapping_add(g);
                e.layer.init_seed = e.layer.init_seed.wrapping_add(g);
                e.layer.mask_seed = e.layer.mask_seed.wrapping_add(g);
            }
        }
        cmd
    }
}

use capaboost::accounting::AccountingReport;
use capaboost::harness::{run_experiment, summarize, ExperimentConfig, SweepSpec};
use capaboost::rankcheck::{layer_rank_sweep, rank_additivity_trials, RankSweepConfig, Regime};
use capaboost::report;

use crate::error::CliError;
use crate::manifest::{AccountingCommand, Command, Manifest, Theorem1Command};
use crate::output::OutputDir;

/// What a command produced: a human-readable summary and whether every
/// checked property held.
#[derive(Debug)]
pub struct Outcome {
    pub summary: String,
    pub ok: bool,
}

impl Outcome {
    fn ok(summary: String) -> Self {
        Self { summary, ok: true }
    }
}

/// Runs `manifest` and writes its outputs into `out`.
pub fn execute(manifest: &Manifest, out: &mut OutputDir) -> Result<Outcome, CliError> {
    out.write_json("manifest.json", manifest)?;
    match manifest.seeded_command() {
        Command::Theorem1(cmd) => theorem1(&cmd, out),
        Command::RankTable(cfg) => rank_table(&cfg, out),
        Command::Accounting(cmd) => accounting(&cmd, out),
        Command::Sweep(spec) => sweep(&spec, out),
        Command::TrainOne(cfg) => train_one(&cfg, out),
    }
}

fn theorem1(cmd: &Theorem1Command, out: &mut OutputDir) -> Result<Outcome, CliError> {
    if cmd.configs.is_empty() {
        return Err(CliError::Usage("theorem1 needs at least one configuration".into()));
    }
    let mut reports = Vec::new();
    for cfg in &cmd.configs {
        reports.push(rank_additivity_trials(cfg)?);
    }
    out.write("theorem1.jsonl", &report::to_jsonl(&reports)?)?;
    let summary: String = reports.iter().map(report::theorem_summary).collect::<Vec<_>>().join("\n");
    out.write("theorem1.txt", &summary)?;
    let ok = reports.iter().all(|r| {
        r.numeric_errors == 0 && (r.regime != Regime::Additive || r.theorem_holds())
    });
    Ok(Outcome { summary, ok })
}

fn rank_table(cfg: &RankSweepConfig, out: &mut OutputDir) -> Result<Outcome, CliError> {
    let table = layer_rank_sweep(cfg)?;
    let md = report::rank_table_markdown(&table);
    out.write("rank_table.md", &md)?;
    out.write("rank_table.csv", &report::rank_table_csv(&table))?;
    out.write_json("rank_table.json", &table)?;
    let mismatched: Vec<String> = table
        .cells
        .iter()
        .filter(|c| c.ranks.iter().any(|&k| k != c.expected_rank))
        .map(|c| format!("r={} d={} ranks {:?} expected {}", c.r, c.d, c.ranks, c.expected_rank))
        .collect();
    let mut summary = md;
    for m in &mismatched {
        summary.push_str(&format!("mismatch: {m}\n"));
    }
    Ok(Outcome {
        summary,
        ok: mismatched.is_empty(),
    })
}

fn accounting(cmd: &AccountingCommand, out: &mut OutputDir) -> Result<Outcome, CliError> {
    let reports = cmd
        .configs
        .iter()
        .map(|c| AccountingReport::for_config(c, cmd.reference_r))
        .collect::<Result<Vec<_>, _>>()?;
    out.write("accounting.jsonl", &report::to_jsonl(&reports)?)?;
    out.write("accounting.csv", &report::accounting_csv(&reports))?;
    let md = report::accounting_markdown(&reports);
    out.write("accounting.md", &md)?;
    Ok(Outcome::ok(md))
}

fn sweep(spec: &SweepSpec, out: &mut OutputDir) -> Result<Outcome, CliError> {
    let results = spec.run()?;
    out.write("results.jsonl", &report::to_jsonl(&results)?)?;
    out.write("results.csv", &report::results_csv(&results))?;
    let cells = summarize(&results);
    let summary = report::summary_csv(&cells);
    out.write("summary.csv", &summary)?;
    for res in &results {
        out.write(&format!("curves/{}", report::curve_file_name(res)), &report::curve_csv(res))?;
    }
    let diverged = results.iter().filter(|r| !r.completed()).count();
    Ok(Outcome::ok(format!(
        "{} runs, {diverged} diverged\n{summary}",
        results.len()
    )))
}

fn train_one(cfg: &ExperimentConfig, out: &mut OutputDir) -> Result<Outcome, CliError> {
    let res = run_experiment(cfg)?;
    out.write_json("result.json", &res)?;
    out.write("curve.csv", &report::curve_csv(&res))?;
    let summary = format!(
        "{}: status {:?}, final train loss {}, final eval loss {}, final rank {:?}",
        res.key,
        res.status,
        res.final_train_loss(),
        res.final_eval_loss(),
        res.final_rank
    );
    Ok(Outcome {
        summary,
        ok: res.completed() && res.frozen_base_intact,
    })
}

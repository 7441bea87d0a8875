//! Plain-text renderings of results: JSON lines, CSV and markdown.

use std::fmt::Write as _;

use serde::Serialize;

use crate::accounting::AccountingReport;
use crate::error::{Error, Result};
use crate::harness::{CellSummary, ExperimentResult, RunStatus};
use crate::rankcheck::{RankCell, RankTable, RankTrialReport};

/// One compact JSON object per line, newline-terminated.
pub fn to_jsonl<T: Serialize>(items: &[T]) -> Result<String> {
    let mut out = String::new();
    for item in items {
        let line = serde_json::to_string(item).map_err(|e| Error::Numeric(e.to_string()))?;
        out.push_str(&line);
        out.push('\n');
    }
    Ok(out)
}

/// Factor with at most four decimals and no trailing zeros, e.g. `0.75x`, `1x`.
pub fn format_factor(f: f64) -> String {
    let s = format!("{f:.4}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    format!("{s}x")
}

fn rank_entry(cell: &RankCell) -> String {
    if cell.consistent() {
        cell.ranks[0].to_string()
    } else {
        cell.ranks
            .iter()
            .map(usize::to_string)
            .collect::<Vec<_>>()
            .join("/")
    }
}

fn method_label(d: usize) -> String {
    if d == 1 {
        "LoRA".to_string()
    } else {
        format!("CapaBoost-LoRA (d={d})")
    }
}

/// Rank table in the layout of rows per `d` (rank row, then `#Param` row)
/// and one column per `r`. Seeds that disagree are shown as `a/b/c`.
pub fn rank_table_markdown(table: &RankTable) -> String {
    let cfg = &table.config;
    let mut out = String::new();
    let _ = write!(out, "| Rank of method |");
    for r in &cfg.r_values {
        let _ = write!(out, " r={r} |");
    }
    out.push('\n');
    out.push_str("|---|");
    for _ in &cfg.r_values {
        out.push_str("---|");
    }
    out.push('\n');
    for &d in &cfg.d_values {
        let cells: Vec<&RankCell> = cfg
            .r_values
            .iter()
            .filter_map(|&r| table.cell(r, d))
            .collect();
        let _ = write!(out, "| {} |", method_label(d));
        for c in &cells {
            let _ = write!(out, " {} |", rank_entry(c));
        }
        out.push('\n');
        out.push_str("| #Param |");
        for c in &cells {
            let _ = write!(out, " {} |", format_factor(c.params_factor));
        }
        out.push('\n');
    }
    out
}

/// One row per cell: `r,d,expected_rank,rank_seed_<s>...,params_factor,params_factor_realized`.
pub fn rank_table_csv(table: &RankTable) -> String {
    let mut out = String::from("r,d,expected_rank");
    for s in &table.config.seeds {
        let _ = write!(out, ",rank_seed_{s}");
    }
    out.push_str(",params_factor,params_factor_realized\n");
    for c in &table.cells {
        let _ = write!(out, "{},{},{}", c.r, c.d, c.expected_rank);
        for k in &c.ranks {
            let _ = write!(out, ",{k}");
        }
        let _ = writeln!(out, ",{},{}", c.params_factor, c.params_factor_realized);
    }
    out
}

pub fn theorem_summary(report: &RankTrialReport) -> String {
    let mut out = String::new();
    let cfg = &report.config;
    let _ = writeln!(out, "d_dim={} r={} trials={} seed={} rel_tol={:e}", cfg.d_dim, cfg.r, cfg.trials, cfg.seed, cfg.rel_tol);
    let _ = writeln!(out, "regime: {:?}", report.regime);
    let _ = writeln!(out, "{}", report.summary());
    let _ = writeln!(out, "rank(X+Y) histogram:");
    for (k, n) in &report.sum_rank_histogram {
        let _ = writeln!(out, "  {k}: {n}");
    }
    out
}

const ACCOUNTING_COLUMNS: &str = "d1,d2,r,d,policy,density,reference_r,dense_factor_params,expected_stored_params,stored_params,trainable_params,optimizer_state_params,train_flops_per_token,infer_flops_per_token,merged_infer_flops_per_token,params_factor,params_factor_realized,train_flops_factor,train_flops_factor_realized,infer_flops_factor";

pub fn accounting_csv(reports: &[AccountingReport]) -> String {
    let mut out = format!("{ACCOUNTING_COLUMNS}\n");
    for a in reports {
        let f = &a.relative_to_reference;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            a.d1,
            a.d2,
            a.r,
            a.d,
            a.policy,
            a.density,
            a.reference_r,
            a.dense_factor_params,
            a.expected_stored_params,
            a.stored_params,
            a.trainable_params,
            a.optimizer_state_params,
            a.train_flops_per_token,
            a.infer_flops_per_token,
            a.merged_infer_flops_per_token,
            f.params,
            f.params_realized,
            f.train_flops,
            f.train_flops_realized,
            f.infer_flops
        );
    }
    out
}

pub fn accounting_markdown(reports: &[AccountingReport]) -> String {
    let mut out = String::from(
        "| policy | d | r | density | #Param | #Param (realized) | train FLOPs | infer FLOPs |\n|---|---|---|---|---|---|---|---|\n",
    );
    for a in reports {
        let f = &a.relative_to_reference;
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {} | {} | {} | {} |",
            a.policy,
            a.d,
            a.r,
            a.density,
            format_factor(f.params),
            format_factor(f.params_realized),
            format_factor(f.train_flops),
            format_factor(f.infer_flops)
        );
    }
    out
}

fn status_label(status: RunStatus) -> String {
    match status {
        RunStatus::Completed => "completed".to_string(),
        RunStatus::Diverged { epoch } => format!("diverged@{epoch}"),
    }
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// One row per run. Wall time is left out so reruns compare byte-for-byte.
pub fn results_csv(results: &[ExperimentResult]) -> String {
    let mut out = String::from(
        "policy,d,r,density,seed,status,epochs_run,final_train_loss,final_eval_loss,eval_accuracy,final_rank,stored_params,params_factor,train_flops_factor\n",
    );
    for res in results {
        let l = &res.config.layer;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            l.policy,
            l.d,
            l.r,
            l.pattern.density(),
            res.seed,
            status_label(res.status),
            res.train_loss.len(),
            res.final_train_loss(),
            res.final_eval_loss(),
            opt(res.eval_accuracy),
            opt(res.final_rank),
            res.accounting.stored_params,
            res.accounting.relative_to_reference.params,
            res.accounting.relative_to_reference.train_flops
        );
    }
    out
}

pub fn summary_csv(cells: &[CellSummary]) -> String {
    let mut out = String::from(
        "policy,d,r,density,runs,median_final_train_loss,median_final_eval_loss,max_final_rank,stored_params,params_factor\n",
    );
    for c in cells {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            c.policy,
            c.d,
            c.r,
            c.density,
            c.runs,
            c.median_final_train_loss,
            c.median_final_eval_loss,
            opt(c.max_final_rank),
            c.stored_params,
            c.params_factor
        );
    }
    out
}

/// `epoch,train_loss,eval_loss`, epochs counted from 1.
pub fn curve_csv(result: &ExperimentResult) -> String {
    let mut out = String::from("epoch,train_loss,eval_loss\n");
    for (i, (t, e)) in result.train_loss.iter().zip(&result.eval_loss).enumerate() {
        let _ = writeln!(out, "{},{t},{e}", i + 1);
    }
    out
}

/// File-name-safe version of a result key.
pub fn curve_file_name(result: &ExperimentResult) -> String {
    let l = &result.config.layer;
    format!(
        "curve_{}_d{}_r{}_rho{}_seed{}.csv",
        l.policy,
        l.d,
        l.r,
        l.pattern.density(),
        result.seed
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rankcheck::{layer_rank_sweep, RankSweepConfig};

    #[test]
    fn factor_formatting() {
        assert_eq!(format_factor(1.0), "1x");
        assert_eq!(format_factor(0.75), "0.75x");
        assert_eq!(format_factor(0.9375), "0.9375x");
        assert_eq!(format_factor(7.5), "7.5x");
    }

    #[test]
    fn markdown_and_csv_agree_cell_for_cell() {
        let cfg = RankSweepConfig {
            d1: 32,
            d2: 32,
            r_values: vec![2, 4, 16],
            d_values: vec![1, 2, 4],
            ..RankSweepConfig::default()
        };
        let table = layer_rank_sweep(&cfg).unwrap();
        let md = rank_table_markdown(&table);
        let csv = rank_table_csv(&table);

        let md_rows: Vec<Vec<String>> = md
            .lines()
            .skip(2)
            .map(|l| l.trim_matches('|').split('|').map(|c| c.trim().to_string()).collect())
            .collect();
        let csv_rows: Vec<Vec<String>> = csv
            .lines()
            .skip(1)
            .map(|l| l.split(',').map(str::to_string).collect())
            .collect();
        assert_eq!(csv_rows.len(), 9);
        for row in &csv_rows {
            let r: usize = row[0].parse().unwrap();
            let d: usize = row[1].parse().unwrap();
            let di = cfg.d_values.iter().position(|&x| x == d).unwrap();
            let ri = cfg.r_values.iter().position(|&x| x == r).unwrap();
            let rank_row = &md_rows[2 * di];
            let param_row = &md_rows[2 * di + 1];
            let ranks = &row[3..3 + cfg.seeds.len()];
            assert!(ranks.iter().all(|k| k == &rank_row[ri + 1]), "r={r} d={d}");
            let factor: f64 = row[3 + cfg.seeds.len()].parse().unwrap();
            assert_eq!(format_factor(factor), param_row[ri + 1]);
            assert_eq!(row[2], rank_row[ri + 1]);
        }
        assert!(md.contains("| CapaBoost-LoRA (d=2) | 4 | 8 | 32 |"));
    }

    #[test]
    fn jsonl_one_object_per_line() {
        let s = to_jsonl(&[1, 2, 3]).unwrap();
        assert_eq!(s, "1\n2\n3\n");
    }
}

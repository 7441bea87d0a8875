//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use capaboost::accounting::{param_factor, train_flop_factor, AccountingReport};
use capaboost::harness::{median, run_all, with_seed, ExperimentConfig, ExperimentResult, OptimizerConfig, TaskSpec};
use capaboost::layers::{CapaBoostLayer, LayerConfig, LoraLayer, Masking, Nonlinearity};
use capaboost::linalg::{numerical_rank, DEFAULT_RANK_TOL};
use capaboost::masks::{generate, MaskPattern, MaskPolicy, MaskSpec, PolicyKind};
use capaboost::rankcheck::{layer_rank_sweep, rank_additivity_trials, RankMethod, RankSweepConfig, RankTrialConfig};
use capaboost::{Matrix, RngStream};
use serde_json::{json, Value};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn within(limit: Duration, started: Instant) -> (bool, String) {
    let t = started.elapsed();
    (t < limit, format!("{:.1}s of {}s", t.as_secs_f64(), limit.as_secs()))
}

fn theorem_reproduction() -> Verdict {
    let started = Instant::now();
    let mut notes = Vec::new();
    let mut pass = true;
    for (n, r) in [(64, 4), (64, 8), (64, 16), (128, 32)] {
        let rep = rank_additivity_trials(&RankTrialConfig::new(n, r, 1000, 0)).unwrap();
        let all_2r = rep.sum_rank_histogram.len() == 1 && rep.sum_rank_histogram.get(&(2 * r)) == Some(&1000);
        let ok = rep.successes == 1000 && rep.full_factor_rank == 1000 && rep.numeric_errors == 0 && all_2r;
        pass &= ok && rep.success_rate() == 1.0;
        notes.push(format!("({n},{r}) {}/1000", rep.successes));
    }
    let (fast, t) = within(Duration::from_secs(60), started);
    verdict(pass && fast, format!("{}; {t}", notes.join(", ")))
}

fn rank_table() -> Verdict {
    let started = Instant::now();
    let cfg = RankSweepConfig::default();
    assert_eq!(cfg.method, RankMethod::Dense);
    let table = layer_rank_sweep(&cfg).unwrap();
    let mut bad = Vec::new();
    let mut cells = 0;
    for &d in &[1usize, 2, 4] {
        for &r in &[8usize, 16, 32, 64] {
            let cell = table.cell(r, d).unwrap();
            cells += 1;
            let expected = (d * r).min(768);
            if cell.ranks.len() < 3 || cell.ranks.iter().any(|&k| k != expected) {
                bad.push(format!("d={d} r={r} {:?}", cell.ranks));
            }
        }
    }
    // cross-check with the factored route
    let factored = layer_rank_sweep(&RankSweepConfig {
        method: RankMethod::Factored,
        ..cfg.clone()
    })
    .unwrap();
    let routes_agree = factored.cells.iter().zip(&table.cells).all(|(a, b)| a.ranks == b.ranks);
    let (fast, t) = within(Duration::from_secs(300), started);
    verdict(
        bad.is_empty() && cells == 12 && routes_agree && fast,
        format!("{cells} cells x {} seeds, mismatches {bad:?}, dense/factored agree {routes_agree}; {t}", cfg.seeds.len()),
    )
}

fn union_fraction(masks: &[Matrix]) -> f64 {
    let n = masks[0].as_slice().len();
    let covered = (0..n).filter(|&i| masks.iter().any(|m| m.as_slice()[i] != 0.0)).count();
    covered as f64 / n as f64
}

fn parameter_factors() -> Verdict {
    let mut pass = true;
    let mut notes = Vec::new();
    for (d, expected) in [(2usize, 0.75), (4, 0.9375)] {
        let cfg = LayerConfig::capaboost(768, 768, 8, d, 0.5);
        let closed = 1.0 - 0.5f64.powi(d as i32);
        let factor = param_factor(&cfg, 8);
        let report = AccountingReport::for_config(&cfg, 8).unwrap();
        pass &= (factor - expected).abs() < 1e-12 && (closed - expected).abs() < 1e-12;
        pass &= (report.relative_to_reference.params - expected).abs() < 1e-12;

        let masks: Vec<Matrix> = (0..d as u64)
            .map(|s| {
                generate(&MaskSpec {
                    pattern: MaskPattern::bernoulli(0.5),
                    rows: 768,
                    cols: 768,
                    seed: 1000 + s,
                })
                .unwrap()
            })
            .collect();
        let realized = union_fraction(&masks);
        pass &= (realized - closed).abs() <= 0.01;
        pass &= (report.relative_to_reference.params_realized - expected).abs() <= 0.01;
        notes.push(format!(
            "d={d}: {factor}x, 768x768 union {realized:.4}, layer realized {:.4}x",
            report.relative_to_reference.params_realized
        ));
    }
    verdict(pass, notes.join("; "))
}

fn flop_factors() -> Verdict {
    let lora_macs = |d1: usize, d2: usize, r: usize| (d1 * r + r * d2) as f64;
    let lora = LayerConfig::capaboost(768, 768, 8, 2, 0.5);
    let oracle = 2.0 * 0.5 * lora_macs(768, 768, 8) / lora_macs(768, 768, 8);
    let a = train_flop_factor(&lora, 8);

    let mut adapter = LayerConfig::capaboost(768, 768, 4, 2, 0.5);
    adapter.nonlinearity = Nonlinearity::Relu;
    let oracle_adapter = 2.0 * 0.5 * lora_macs(768, 768, 4) / lora_macs(768, 768, 8);
    let b = train_flop_factor(&adapter, 8);
    let report = AccountingReport::for_config(&adapter, 8).unwrap();
    let pass = a == 1.0 && a == oracle && b == 0.5 && b == oracle_adapter && report.relative_to_reference.train_flops == 0.5;
    verdict(pass, format!("CapaBoost-LoRA d=2 rho=0.5: {a}x; half-bottleneck adapter: {b}x"))
}

const FD_STEP: f64 = 1e-5;

fn inner(layer: &CapaBoostLayer, x: &Matrix, u: &Matrix, step: u64) -> f64 {
    let z = layer.forward(x, step).unwrap();
    z.as_slice().iter().zip(u.as_slice()).map(|(a, b)| a * b).sum()
}

fn gradient_correctness() -> Verdict {
    let started = Instant::now();
    let mut worst = 0.0f64;
    let mut combos = std::collections::BTreeSet::new();
    for case in 0..20u64 {
        let d = 1 + (case % 3) as usize;
        let kind = PolicyKind::ALL[((case / 3) % 3) as usize];
        let f = if case % 2 == 0 { Nonlinearity::Relu } else { Nonlinearity::Gelu };
        combos.insert((kind.name(), format!("{f:?}")));
        let mut rng = RngStream::new(0xacce55 + case);
        let layer = CapaBoostLayer::new(
            Matrix::gaussian(8, 8, &mut rng),
            Matrix::gaussian(8, 2, &mut rng),
            Matrix::gaussian(2, 8, &mut rng),
            d,
            MaskPolicy::from_base(kind, 100 * case, d),
            MaskPattern::bernoulli(0.5),
            f,
        )
        .unwrap()
        .with_bias(Matrix::gaussian(1, 8, &mut rng).into_vec())
        .unwrap();
        let x = Matrix::gaussian(4, 8, &mut rng);
        let u = Matrix::gaussian(4, 8, &mut rng);
        let step = case;
        let grads = layer.backward(&x, &u, step).unwrap();
        let analytic: Vec<Vec<f64>> = grads.flat().into_iter().map(<[f64]>::to_vec).collect();
        let mut probe = layer.clone();
        for (t, g) in analytic.iter().enumerate() {
            for (k, &ga) in g.iter().enumerate() {
                let orig = probe.trainable_mut()[t][k];
                probe.trainable_mut()[t][k] = orig + FD_STEP;
                let plus = inner(&probe, &x, &u, step);
                probe.trainable_mut()[t][k] = orig - FD_STEP;
                let minus = inner(&probe, &x, &u, step);
                probe.trainable_mut()[t][k] = orig;
                let fd = (plus - minus) / (2.0 * FD_STEP);
                worst = worst.max((ga - fd).abs() / ga.abs().max(fd.abs()).max(1.0));
            }
        }
    }
    let (fast, t) = within(Duration::from_secs(30), started);
    verdict(
        worst <= 1e-5 && combos.len() == 6 && fast,
        format!("20 layers, {} policy/nonlinearity pairs, worst relative error {worst:.2e}; {t}", combos.len()),
    )
}

fn reduction_equivalence() -> Verdict {
    let mut worst = 0.0f64;
    for seed in 0..100u64 {
        let mut rng = RngStream::new(seed + 7_000);
        let d1 = 2 + rng.below(12) as usize;
        let d2 = 2 + rng.below(12) as usize;
        let r = 1 + rng.below(d1.min(d2) as u64) as usize;
        let lora = LoraLayer::new(
            Matrix::gaussian(d1, d2, &mut rng),
            Matrix::gaussian(d1, r, &mut rng),
            Matrix::gaussian(r, d2, &mut rng),
            1.0,
        )
        .unwrap();
        let cb = CapaBoostLayer::from_lora(&lora).unwrap();
        let x = Matrix::gaussian(5, d1, &mut rng);
        let u = Matrix::gaussian(5, d2, &mut rng);
        let rel = |a: &Matrix, b: &Matrix| a.max_abs_diff(b).unwrap() / a.max_abs().max(1.0);
        let gl = lora.backward(&x, &u).unwrap();
        let gc = cb.backward(&x, &u, seed).unwrap();
        for e in [
            rel(&lora.forward(&x).unwrap(), &cb.forward(&x, seed).unwrap()),
            rel(&lora.merge().unwrap(), &cb.merge(seed).unwrap()),
            rel(&gl.d_b, &gc.d_b),
            rel(&gl.d_a, &gc.d_a),
        ] {
            worst = worst.max(e);
        }
    }
    verdict(worst <= 1e-12, format!("100 instances, worst relative difference {worst:.2e}"))
}

fn teacher_base(layer: LayerConfig) -> ExperimentConfig {
    ExperimentConfig {
        task: TaskSpec::LowRankTeacher {
            d1: 64,
            d2: 64,
            teacher_rank: 16,
            noise_std: 0.0,
            train_samples: 128,
            eval_samples: 128,
        },
        data_seed: 0,
        layer,
        optimizer: OptimizerConfig::adam(1e-2),
        epochs: 500,
        batch_size: None,
        reference_r: 8,
    }
}

const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

fn over_seeds(layer: LayerConfig) -> Vec<ExperimentResult> {
    let base = teacher_base(layer);
    run_all(&SEEDS.iter().map(|&s| with_seed(&base, s)).collect::<Vec<_>>()).unwrap()
}

fn med(results: &[ExperimentResult], f: fn(&ExperimentResult) -> f64) -> f64 {
    median(&results.iter().map(f).collect::<Vec<_>>())
}

struct PolicyRuns {
    lora: Vec<ExperimentResult>,
    diff: Vec<ExperimentResult>,
    same: Vec<ExperimentResult>,
    dropout: Vec<ExperimentResult>,
}

fn policy_runs() -> PolicyRuns {
    let with_policy = |kind| {
        let mut l = LayerConfig::capaboost(64, 64, 8, 2, 0.5);
        l.policy = kind;
        over_seeds(l)
    };
    PolicyRuns {
        lora: over_seeds(LayerConfig::lora(64, 64, 8)),
        diff: with_policy(PolicyKind::DiffMask),
        same: with_policy(PolicyKind::SameMask),
        dropout: with_policy(PolicyKind::Dropout),
    }
}

fn capacity(runs: &PolicyRuns, started: Instant) -> Verdict {
    let lora = med(&runs.lora, ExperimentResult::final_train_loss);
    let cap = med(&runs.diff, ExperimentResult::final_train_loss);
    let first = cap <= 0.95 * lora;

    let wide = over_seeds(LayerConfig::capaboost(64, 64, 64, 1, 0.5));
    let tied = over_seeds(LayerConfig::capaboost(64, 64, 32, 2, 0.5));
    let wide_eval = med(&wide, ExperimentResult::final_eval_loss);
    let tied_eval = med(&tied, ExperimentResult::final_eval_loss);
    let param_ratio = tied[0].accounting.expected_stored_params / wide[0].accounting.expected_stored_params;
    let second = tied_eval < wide_eval && (param_ratio - 0.75).abs() < 1e-12;
    let (fast, t) = within(Duration::from_secs(600), started);
    verdict(
        first && second && fast,
        format!(
            "median train MSE d=2,r=8 {cap:.4e} vs LoRA r=8 {lora:.4e} (needs <= {:.4e}) [{}]; \
             median eval d=2,r=32 {tied_eval:.4e} vs d=1,r=64 {wide_eval:.4e} at {param_ratio}x stored params [{}]; {t}",
            0.95 * lora,
            if first { "ok" } else { "not met" },
            if second { "ok" } else { "not met" }
        ),
    )
}

fn policy_ordering(runs: &PolicyRuns) -> Verdict {
    let diff = med(&runs.diff, ExperimentResult::final_eval_loss);
    let same = med(&runs.same, ExperimentResult::final_eval_loss);
    let dropout = med(&runs.dropout, ExperimentResult::final_eval_loss);
    let same_rank_ok = runs.same.iter().all(|r| r.final_rank.is_some_and(|k| k <= 8))
        && SEEDS.iter().all(|&s| {
            let mut l = LayerConfig::capaboost(64, 64, 8, 2, 0.5);
            l.policy = PolicyKind::SameMask;
            l.init = capaboost::layers::InitScheme::Gaussian;
            l.mask_seed = s;
            l.init_seed = s;
            let layer = l.build_zero_base().unwrap();
            numerical_rank(&layer.effective_weight_with(Masking::Expected).unwrap(), DEFAULT_RANK_TOL).unwrap() <= 8
        });
    let pass = diff <= same && diff <= dropout && same_rank_ok;
    verdict(
        pass,
        format!(
            "median eval DiffMask {diff:.4e}, SameMask {same:.4e} [{}], Dropout {dropout:.4e} [{}]; SameMask rank <= 8: {same_rank_ok}",
            if diff <= same { "ok" } else { "not met" },
            if diff <= dropout { "ok" } else { "not met" }
        ),
    )
}

fn strip_wall_time(v: &mut Value) {
    match v {
        Value::Object(map) => {
            map.remove("wall_time_secs");
            map.values_mut().for_each(strip_wall_time);
        }
        Value::Array(items) => items.iter_mut().for_each(strip_wall_time),
        _ => {}
    }
}

fn normalized(path: &Path) -> Vec<u8> {
    let bytes = std::fs::read(path).unwrap();
    let name = path.to_string_lossy();
    if name.ends_with(".json") {
        let mut v: Value = serde_json::from_slice(&bytes).unwrap();
        strip_wall_time(&mut v);
        serde_json::to_vec(&v).unwrap()
    } else if name.ends_with(".jsonl") {
        let text = String::from_utf8(bytes).unwrap();
        let mut out = Vec::new();
        for line in text.lines() {
            let mut v: Value = serde_json::from_str(line).unwrap();
            strip_wall_time(&mut v);
            out.extend(serde_json::to_vec(&v).unwrap());
            out.push(b'\n');
        }
        out
    } else {
        bytes
    }
}

fn files_under(root: &Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in std::fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

fn determinism() -> Verdict {
    let tmp = tempfile::tempdir().unwrap();
    let experiment = json!({
        "task": {"kind": "low_rank_teacher", "d1": 16, "d2": 16, "teacher_rank": 4,
                 "train_samples": 32, "eval_samples": 16},
        "layer": {"d1": 16, "d2": 16, "r": 2, "d": 2, "policy": "dropout"},
        "epochs": 20
    });
    let manifests = [
        ("theorem1", json!({"version": 1, "seed": 9, "command": {"theorem1": {"configs": [{"d_dim": 32, "r": 4, "trials": 50}]}}})),
        ("rank-table", json!({"version": 1, "command": {"rank_table": {"d1": 48, "d2": 48, "r_values": [4, 8, 16]}}})),
        ("accounting", json!({"version": 1, "command": {"accounting": {"configs": [{"d1": 64, "d2": 64, "r": 8, "d": 4}]}}})),
        ("sweep", json!({"version": 1, "command": {"sweep": {"sweep": "density", "base": experiment, "densities": [0.5, 0.9], "seeds": [0, 1]}}})),
        ("train-one", json!({"version": 1, "seed": 2, "command": {"train_one": experiment}})),
    ];
    let mut notes = Vec::new();
    let mut pass = true;
    for (cmd, manifest) in manifests {
        let mpath = tmp.path().join(format!("{cmd}.json"));
        std::fs::write(&mpath, manifest.to_string()).unwrap();
        let dirs = [tmp.path().join(format!("{cmd}-a")), tmp.path().join(format!("{cmd}-b"))];
        for dir in &dirs {
            let status = Command::new(env!("CARGO_BIN_EXE_capaboost"))
                .arg("--out-dir")
                .arg(dir)
                .args([cmd, "--manifest"])
                .arg(&mpath)
                .output()
                .unwrap()
                .status;
            pass &= status.success();
        }
        let (fa, fb) = (files_under(&dirs[0]), files_under(&dirs[1]));
        let same = fa == fb && fa.iter().all(|f| normalized(&dirs[0].join(f)) == normalized(&dirs[1].join(f)));
        pass &= same && !fa.is_empty();
        notes.push(format!("{cmd}: {} files {}", fa.len(), if same { "identical" } else { "DIFFER" }));
    }
    verdict(pass, notes.join(", "))
}

fn main() {
    let mut verdicts: Vec<(u32, &str, Verdict)> = Vec::new();
    let mut record = |n, name, v: Verdict| {
        println!("criterion {n} {}: {name}: {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
        verdicts.push((n, name, v));
    };
    record(1, "rank additivity of random low-rank sums", theorem_reproduction());
    record(2, "768x768 rank table", rank_table());
    record(3, "stored-parameter factors", parameter_factors());
    record(4, "training FLOP factors", flop_factors());
    record(5, "analytic gradients vs finite differences", gradient_correctness());
    record(6, "d=1 all-ones reduces to LoRA", reduction_equivalence());
    let started = Instant::now();
    let runs = policy_runs();
    record(7, "capacity on the rank-16 teacher", capacity(&runs, started));
    record(8, "mask-policy ordering at density 0.5", policy_ordering(&runs));
    record(9, "CLI reruns are byte-identical", determinism());

    let failed: Vec<u32> = verdicts.iter().filter(|v| !v.2.pass).map(|v| v.0).collect();
    println!(
        "acceptance: {}/{} criteria pass{}",
        verdicts.len() - failed.len(),
        verdicts.len(),
        if failed.is_empty() { String::new() } else { format!(", failing {failed:?}") }
    );
    if !failed.is_empty() {
        std::process::exit(1);
    }
}

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Matrix, RngStream};

fn default_samples() -> usize {
    128
}

fn default_class_rank() -> usize {
    2
}

/// Synthetic task description. Tasks are fully determined by this plus a data seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TaskSpec {
    /// `y = x·(W_pre + ΔW*) + noise` with `rank(ΔW*) = teacher_rank`.
    LowRankTeacher {
        d1: usize,
        d2: usize,
        teacher_rank: usize,
        #[serde(default)]
        noise_std: f64,
        #[serde(default = "default_samples")]
        train_samples: usize,
        #[serde(default = "default_samples")]
        eval_samples: usize,
    },
    /// Labels are the argmax of `x·(W_pre + ΔW*)` for a rank-`teacher_rank` shift.
    SmallClassification {
        input_dim: usize,
        classes: usize,
        samples: usize,
        #[serde(default = "default_samples")]
        eval_samples: usize,
        #[serde(default = "default_class_rank")]
        teacher_rank: usize,
    },
}

impl TaskSpec {
    /// Input and output widths, i.e. the adapted layer's `(d1, d2)`.
    pub fn dims(&self) -> (usize, usize) {
        match *self {
            TaskSpec::LowRankTeacher { d1, d2, .. } => (d1, d2),
            TaskSpec::SmallClassification {
                input_dim, classes, ..
            } => (input_dim, classes),
        }
    }

    pub fn loss(&self) -> Loss {
        match self {
            TaskSpec::LowRankTeacher { .. } => Loss::Mse,
            TaskSpec::SmallClassification { .. } => Loss::CrossEntropy,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (d1, d2) = self.dims();
        if d1 == 0 || d2 == 0 {
            return Err(Error::config("task dimensions must be positive"));
        }
        let (rank, n_train, n_eval) = match *self {
            TaskSpec::LowRankTeacher {
                teacher_rank,
                noise_std,
                train_samples,
                eval_samples,
                ..
            } => {
                if !(noise_std >= 0.0 && noise_std.is_finite()) {
                    return Err(Error::config("noise_std must be finite and >= 0"));
                }
                (teacher_rank, train_samples, eval_samples)
            }
            TaskSpec::SmallClassification {
                samples,
                eval_samples,
                teacher_rank,
                classes,
                ..
            } => {
                if classes < 2 {
                    return Err(Error::config("classification needs at least two classes"));
                }
                (teacher_rank, samples, eval_samples)
            }
        };
        if rank > d1.min(d2) {
            return Err(Error::config(format!(
                "teacher rank {rank} exceeds min(d1, d2) = {}",
                d1.min(d2)
            )));
        }
        if n_train == 0 || n_eval == 0 {
            return Err(Error::config("train and eval sample counts must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    /// Mean over all output entries of the squared error.
    Mse,
    /// Mean softmax cross-entropy; targets are one-hot rows.
    CrossEntropy,
}

impl Loss {
    /// Loss value and its gradient with respect to `pred`.
    pub fn evaluate(self, pred: &Matrix, target: &Matrix) -> Result<(f64, Matrix)> {
        if pred.shape() != target.shape() {
            return Err(Error::Shape {
                op: "loss",
                lhs: pred.shape(),
                rhs: target.shape(),
            });
        }
        let (n, k) = pred.shape();
        match self {
            Loss::Mse => {
                let diff = pred.sub(target)?;
                let count = (n * k) as f64;
                let value = diff.as_slice().iter().map(|v| v * v).sum::<f64>() / count;
                Ok((value, diff.scale(2.0 / count)))
            }
            Loss::CrossEntropy => {
                let mut grad = Matrix::zeros(n, k);
                let mut value = 0.0;
                for i in 0..n {
                    let row = pred.row(i);
                    let max = row.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
                    let exps: Vec<f64> = row.iter().map(|&v| libm::exp(v - max)).collect();
                    let z: f64 = exps.iter().sum();
                    for j in 0..k {
                        let p = exps[j] / z;
                        let t = target.get(i, j);
                        if t != 0.0 {
                            value -= t * (libm::log(p.max(f64::MIN_POSITIVE)));
                        }
                        grad.set(i, j, (p - t) / n as f64);
                    }
                }
                Ok((value / n as f64, grad))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Matrix,
    pub y: Matrix,
}

/// A generated task: frozen base weight, ground-truth shift and both splits.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTask {
    pub spec: TaskSpec,
    pub seed: u64,
    pub w_pre: Matrix,
    /// The teacher's incremental weight `ΔW*`.
    pub teacher_delta: Matrix,
    pub train: Dataset,
    pub eval: Dataset,
}

impl SyntheticTask {
    pub fn loss(&self) -> Loss {
        self.spec.loss()
    }
}

/// Generates a task; the draw order from `RngStream(seed)` is `W_pre`, `U`, `V`,
/// train inputs, eval inputs, train noise, eval noise.
pub fn make_task(spec: &TaskSpec, seed: u64) -> Result<SyntheticTask> {
    spec.validate()?;
    let (d1, d2) = spec.dims();
    let mut rng = RngStream::new(seed);
    let w_pre = Matrix::gaussian(d1, d2, &mut rng).scale(1.0 / (d1 as f64).sqrt());

    let (rank, n_train, n_eval) = match *spec {
        TaskSpec::LowRankTeacher {
            teacher_rank,
            train_samples,
            eval_samples,
            ..
        } => (teacher_rank, train_samples, eval_samples),
        TaskSpec::SmallClassification {
            teacher_rank,
            samples,
            eval_samples,
            ..
        } => (teacher_rank, samples, eval_samples),
    };
    let teacher_delta = if rank == 0 {
        Matrix::zeros(d1, d2)
    } else {
        let u = Matrix::gaussian(d1, rank, &mut rng);
        let v = Matrix::gaussian(rank, d2, &mut rng);
        let mut gain = 1.0 / ((d1 * rank) as f64).sqrt();
        if matches!(spec, TaskSpec::SmallClassification { .. }) {
            // push the labels away from what the frozen weight already predicts
            gain *= 3.0;
        }
        u.matmul(&v)?.scale(gain)
    };
    let teacher = w_pre.add(&teacher_delta)?;
    let x_train = Matrix::gaussian(n_train, d1, &mut rng);
    let x_eval = Matrix::gaussian(n_eval, d1, &mut rng);

    let (train, eval) = match *spec {
        TaskSpec::LowRankTeacher { noise_std, .. } => {
            let mut y_train = x_train.matmul(&teacher)?;
            let mut y_eval = x_eval.matmul(&teacher)?;
            if noise_std > 0.0 {
                y_train.add_scaled_assign(noise_std, &Matrix::gaussian(n_train, d2, &mut rng))?;
                y_eval.add_scaled_assign(noise_std, &Matrix::gaussian(n_eval, d2, &mut rng))?;
            }
            (
                Dataset {
                    x: x_train,
                    y: y_train,
                },
                Dataset { x: x_eval, y: y_eval },
            )
        }
        TaskSpec::SmallClassification { .. } => {
            let y_train = one_hot_argmax(&x_train.matmul(&teacher)?);
            let y_eval = one_hot_argmax(&x_eval.matmul(&teacher)?);
            (
                Dataset {
                    x: x_train,
                    y: y_train,
                },
                Dataset { x: x_eval, y: y_eval },
            )
        }
    };
    Ok(SyntheticTask {
        spec: spec.clone(),
        seed,
        w_pre,
        teacher_delta,
        train,
        eval,
    })
}

fn one_hot_argmax(logits: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(logits.rows(), logits.cols());
    for i in 0..logits.rows() {
        let row = logits.row(i);
        let best = (0..row.len())
            .max_by(|&a, &b| row[a].total_cmp(&row[b]))
            .unwrap_or(0);
        out.set(i, best, 1.0);
    }
    out
}

/// Fraction of rows whose argmax matches the one-hot target.
pub fn accuracy(pred: &Matrix, target: &Matrix) -> f64 {
    let hits = (0..pred.rows())
        .filter(|&i| {
            let row = pred.row(i);
            let best = (0..row.len())
                .max_by(|&a, &b| row[a].total_cmp(&row[b]))
                .unwrap_or(0);
            target.get(i, best) == 1.0
        })
        .count();
    hits as f64 / pred.rows() as f64
}

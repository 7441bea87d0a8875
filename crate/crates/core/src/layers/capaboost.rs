use crate::error::{Error, Result};
use crate::linalg::{product_singular_values, rank_from_values, Matrix};
use crate::masks::{self, MaskPattern, MaskPolicy, MaskSpec};

use super::{LayerGradients, LoraLayer, Nonlinearity};

const FACTOR_B: u64 = 0;
const FACTOR_A: u64 = 1;

/// Which masks a call realizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Masking {
    /// The masks the policy yields at this training step.
    Step(u64),
    /// Per-entry mask means. Only differs from `Step` for the dropout policy,
    /// where it gives the usual expectation-scaled evaluation path.
    Expected,
}

/// Frozen `W_pre` plus trainable `B`, `A` shared by `d` masked modules.
///
/// Linear form:   `z = x·W_pre + s·Σᵢ x·(B⊙m_bᵢ)·(A⊙m_aᵢ) + bias`
/// Adapter form:  `z = x·W_pre + s·Σᵢ f(x·(B⊙m_bᵢ))·(A⊙m_aᵢ) + bias`
///
/// Masks are regenerated from the policy on every call.
#[derive(Debug, Clone, PartialEq)]
pub struct CapaBoostLayer {
    w_pre: Matrix,
    b: Matrix,
    a: Matrix,
    bias: Option<Vec<f64>>,
    d: usize,
    policy: MaskPolicy,
    pattern: MaskPattern,
    nonlinearity: Nonlinearity,
    scale: f64,
}

/// Intermediate values of a forward pass, consumed by
/// [`CapaBoostLayer::backward_with_trace`].
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    step: u64,
    masked_b: Vec<Matrix>,
    masked_a: Vec<Matrix>,
    /// `x·(B⊙m_bᵢ)` per module, before the nonlinearity.
    hidden: Vec<Matrix>,
}

impl ForwardTrace {
    pub fn step(&self) -> u64 {
        self.step
    }
}

impl CapaBoostLayer {
    pub fn new(
        w_pre: Matrix,
        b: Matrix,
        a: Matrix,
        d: usize,
        policy: MaskPolicy,
        pattern: MaskPattern,
        nonlinearity: Nonlinearity,
    ) -> Result<Self> {
        let (d1, d2) = w_pre.shape();
        let r = b.cols();
        if b.rows() != d1 || a.shape() != (r, d2) {
            return Err(Error::Shape {
                op: "CapaBoostLayer::new",
                lhs: b.shape(),
                rhs: a.shape(),
            });
        }
        if r > d1.min(d2) {
            return Err(Error::config(format!("rank {r} exceeds min(d1, d2)")));
        }
        pattern.validate()?;
        policy.validate(d)?;
        let layer = Self {
            w_pre,
            b,
            a,
            bias: None,
            d,
            policy,
            pattern,
            nonlinearity,
            scale: 1.0,
        };
        // surface N:M divisibility problems at construction
        layer.mask_specs(Masking::Step(0))?;
        Ok(layer)
    }

    /// Single all-ones module: behaves exactly like `lora`.
    pub fn from_lora(lora: &LoraLayer) -> Result<Self> {
        Ok(Self::new(
            lora.w_pre().clone(),
            lora.b().clone(),
            lora.a().clone(),
            1,
            MaskPolicy::DiffMask { seeds: vec![0] },
            MaskPattern::bernoulli(1.0),
            Nonlinearity::None,
        )?
        .with_scale(lora.scale()))
    }

    pub fn with_scale(mut self, scale: f64) -> Self {
        self.scale = scale;
        self
    }

    pub fn with_bias(mut self, bias: Vec<f64>) -> Result<Self> {
        if bias.len() != self.w_pre.cols() {
            return Err(Error::Shape {
                op: "with_bias",
                lhs: (1, self.w_pre.cols()),
                rhs: (1, bias.len()),
            });
        }
        self.bias = Some(bias);
        Ok(self)
    }

    pub fn w_pre(&self) -> &Matrix {
        &self.w_pre
    }

    pub fn b(&self) -> &Matrix {
        &self.b
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    pub fn bias(&self) -> Option<&[f64]> {
        self.bias.as_deref()
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn r(&self) -> usize {
        self.b.cols()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.w_pre.shape()
    }

    pub fn policy(&self) -> &MaskPolicy {
        &self.policy
    }

    pub fn pattern(&self) -> MaskPattern {
        self.pattern
    }

    pub fn nonlinearity(&self) -> Nonlinearity {
        self.nonlinearity
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Mutable views of `B`, `A` and the bias, in that order. `W_pre` is not exposed.
    pub fn trainable_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = vec![self.b.as_mut_slice(), self.a.as_mut_slice()];
        if let Some(bias) = &mut self.bias {
            out.push(bias.as_mut_slice());
        }
        out
    }

    /// Specs of the `B` and `A` masks of every module; `None` for expected masks.
    pub fn mask_specs(&self, masking: Masking) -> Result<Option<(Vec<MaskSpec>, Vec<MaskSpec>)>> {
        let step = match masking {
            Masking::Step(s) => s,
            Masking::Expected if self.policy.is_step_dependent() => return Ok(None),
            Masking::Expected => 0,
        };
        let specs_b = masks::specs_for_policy(
            &self.policy.for_factor(FACTOR_B),
            self.pattern,
            self.d,
            self.b.shape(),
            step,
        )?;
        let specs_a = masks::specs_for_policy(
            &self.policy.for_factor(FACTOR_A),
            self.pattern,
            self.d,
            self.a.shape(),
            step,
        )?;
        for s in specs_b.iter().chain(&specs_a) {
            if let MaskPattern::NToM { m, axis, .. } = s.pattern {
                let along = match axis {
                    masks::Axis::Rows => s.rows,
                    masks::Axis::Cols => s.cols,
                };
                if along % m != 0 {
                    return Err(Error::config(format!(
                        "N:M axis length {along} of a {}x{} factor is not divisible by m = {m}",
                        s.rows, s.cols
                    )));
                }
            }
        }
        Ok(Some((specs_b, specs_a)))
    }

    /// The realized `(m_bᵢ, m_aᵢ)` masks.
    pub fn masks(&self, masking: Masking) -> Result<(Vec<Matrix>, Vec<Matrix>)> {
        match self.mask_specs(masking)? {
            None => Ok((
                vec![masks::expected_mask(&self.pattern, self.b.rows(), self.b.cols()); self.d],
                vec![masks::expected_mask(&self.pattern, self.a.rows(), self.a.cols()); self.d],
            )),
            Some((specs_b, specs_a)) => {
                let shared = matches!(self.policy, MaskPolicy::SameMask { .. });
                let realize = |specs: &[MaskSpec]| -> Result<Vec<Matrix>> {
                    if shared {
                        Ok(vec![masks::generate(&specs[0])?; specs.len()])
                    } else {
                        specs.iter().map(masks::generate).collect()
                    }
                };
                Ok((realize(&specs_b)?, realize(&specs_a)?))
            }
        }
    }

    /// `(B⊙m_bᵢ, A⊙m_aᵢ)` for each module.
    pub fn masked_factors(&self, masking: Masking) -> Result<(Vec<Matrix>, Vec<Matrix>)> {
        let (mb, ma) = self.masks(masking)?;
        let bs = mb
            .iter()
            .map(|m| self.b.hadamard(m))
            .collect::<Result<Vec<_>>>()?;
        let as_ = ma
            .iter()
            .map(|m| self.a.hadamard(m))
            .collect::<Result<Vec<_>>>()?;
        Ok((bs, as_))
    }

    fn require_linear(&self, op: &str) -> Result<()> {
        if self.nonlinearity.is_linear() {
            Ok(())
        } else {
            Err(Error::contract(format!(
                "{op} needs a linear layer; {:?} branches do not collapse to one matrix",
                self.nonlinearity
            )))
        }
    }

    /// `E = Σᵢ (B⊙m_bᵢ)(A⊙m_aᵢ)` at `step` (unscaled).
    pub fn effective_weight(&self, step: u64) -> Result<Matrix> {
        self.effective_weight_with(Masking::Step(step))
    }

    pub fn effective_weight_with(&self, masking: Masking) -> Result<Matrix> {
        self.require_linear("effective_weight")?;
        let (bs, as_) = self.masked_factors(masking)?;
        let (d1, d2) = self.dims();
        let mut e = Matrix::zeros(d1, d2);
        for (bm, am) in bs.iter().zip(&as_) {
            e.add_scaled_assign(1.0, &bm.matmul(am)?)?;
        }
        Ok(e)
    }

    /// `E` as one product `[B⊙m_b₁ … B⊙m_b_d] · [A⊙m_a₁; …; A⊙m_a_d]`.
    pub fn effective_factors(&self, masking: Masking) -> Result<(Matrix, Matrix)> {
        self.require_linear("effective_factors")?;
        let (bs, as_) = self.masked_factors(masking)?;
        Ok((Matrix::hstack(&bs)?, Matrix::vstack(&as_)?))
    }

    /// Numerical rank of `E`, computed from its factored form.
    pub fn effective_rank(&self, masking: Masking, rel_tol: f64) -> Result<usize> {
        let (left, right) = self.effective_factors(masking)?;
        Ok(rank_from_values(&product_singular_values(&left, &right)?, rel_tol))
    }

    /// Dense weight `W_pre + s·E` for inference without the side branch.
    pub fn merge(&self, step: u64) -> Result<Matrix> {
        self.merge_with(Masking::Step(step))
    }

    pub fn merge_with(&self, masking: Masking) -> Result<Matrix> {
        self.require_linear("merge")?;
        let mut merged = self.w_pre.clone();
        merged.add_scaled_assign(self.scale, &self.effective_weight_with(masking)?)?;
        Ok(merged)
    }

    fn check_input(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.w_pre.rows() {
            return Err(Error::Shape {
                op: "forward",
                lhs: x.shape(),
                rhs: self.w_pre.shape(),
            });
        }
        Ok(())
    }

    /// Output for a `batch × d1` input at training step `step`.
    pub fn forward(&self, x: &Matrix, step: u64) -> Result<Matrix> {
        Ok(self.forward_traced(x, Masking::Step(step))?.0)
    }

    /// Evaluation-time output: static masks as in training, dropout replaced by its mean.
    pub fn forward_eval(&self, x: &Matrix) -> Result<Matrix> {
        Ok(self.forward_traced(x, Masking::Expected)?.0)
    }

    pub fn forward_traced(&self, x: &Matrix, masking: Masking) -> Result<(Matrix, ForwardTrace)> {
        self.check_input(x)?;
        let (masked_b, masked_a) = self.masked_factors(masking)?;
        let mut out = x.matmul(&self.w_pre)?;
        let mut hidden = Vec::with_capacity(self.d);
        for (bm, am) in masked_b.iter().zip(&masked_a) {
            let h = x.matmul(bm)?;
            let act = self.nonlinearity.apply_matrix(&h);
            out.add_scaled_assign(self.scale, &act.matmul(am)?)?;
            hidden.push(h);
        }
        if let Some(bias) = &self.bias {
            out = out.add_row_vector(bias)?;
        }
        let step = match masking {
            Masking::Step(s) => s,
            Masking::Expected => u64::MAX,
        };
        Ok((
            out,
            ForwardTrace {
                step,
                masked_b,
                masked_a,
                hidden,
            },
        ))
    }

    /// Exact gradients of `⟨upstream, forward(x, step)⟩` w.r.t. `B`, `A` and the bias.
    pub fn backward(&self, x: &Matrix, upstream: &Matrix, step: u64) -> Result<LayerGradients> {
        let (_, trace) = self.forward_traced(x, Masking::Step(step))?;
        self.backward_with_trace(&trace, x, upstream, step)
    }

    /// Backward pass reusing a forward trace. Under the dropout policy the
    /// trace must come from the same step, otherwise the masks would differ.
    pub fn backward_with_trace(
        &self,
        trace: &ForwardTrace,
        x: &Matrix,
        upstream: &Matrix,
        step: u64,
    ) -> Result<LayerGradients> {
        if self.policy.is_step_dependent() && trace.step != step {
            return Err(Error::contract(format!(
                "backward at step {step} with a forward trace from step {}",
                trace.step
            )));
        }
        self.check_input(x)?;
        let (d1, d2) = self.dims();
        if upstream.shape() != (x.rows(), d2) {
            return Err(Error::Shape {
                op: "backward",
                lhs: (x.rows(), d2),
                rhs: upstream.shape(),
            });
        }
        let (mb, ma) = self.masks(Masking::Step(step))?;
        let r = self.r();
        let mut d_b = Matrix::zeros(d1, r);
        let mut d_a = Matrix::zeros(r, d2);
        for i in 0..self.d {
            let h = &trace.hidden[i];
            let act = self.nonlinearity.apply_matrix(h);
            let grad_a = act.t_matmul(upstream)?.hadamard(&ma[i])?;
            d_a.add_scaled_assign(self.scale, &grad_a)?;

            let mut d_hidden = upstream.matmul_t(&trace.masked_a[i])?;
            if !self.nonlinearity.is_linear() {
                d_hidden = d_hidden.hadamard(&self.nonlinearity.derivative_matrix(h))?;
            }
            let grad_b = x.t_matmul(&d_hidden)?.hadamard(&mb[i])?;
            d_b.add_scaled_assign(self.scale, &grad_b)?;
        }
        debug_assert_eq!(trace.masked_b.len(), self.d);
        Ok(LayerGradients {
            d_b,
            d_a,
            d_bias: self.bias.as_ref().map(|_| upstream.column_sums()),
        })
    }
}

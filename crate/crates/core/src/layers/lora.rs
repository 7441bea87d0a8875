use crate::error::{Error, Result};
use crate::linalg::Matrix;

use super::LayerGradients;

/// Plain low-rank adaptation: `z = x·W_pre + scale·(x·B)·A`.
#[derive(Debug, Clone, PartialEq)]
pub struct LoraLayer {
    w_pre: Matrix,
    b: Matrix,
    a: Matrix,
    scale: f64,
}

impl LoraLayer {
    pub fn new(w_pre: Matrix, b: Matrix, a: Matrix, scale: f64) -> Result<Self> {
        let (d1, d2) = w_pre.shape();
        let r = b.cols();
        if b.rows() != d1 || a.shape() != (r, d2) {
            return Err(Error::Shape {
                op: "LoraLayer::new",
                lhs: b.shape(),
                rhs: a.shape(),
            });
        }
        if r > d1.min(d2) {
            return Err(Error::config(format!("rank {r} exceeds min(d1, d2)")));
        }
        Ok(Self { w_pre, b, a, scale })
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

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn delta(&self) -> Result<Matrix> {
        self.b.matmul(&self.a)
    }

    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        let base = x.matmul(&self.w_pre)?;
        let low = x.matmul(&self.b)?.matmul(&self.a)?;
        let mut out = base;
        out.add_scaled_assign(self.scale, &low)?;
        Ok(out)
    }

    pub fn backward(&self, x: &Matrix, upstream: &Matrix) -> Result<LayerGradients> {
        if upstream.shape() != (x.rows(), self.w_pre.cols()) {
            return Err(Error::Shape {
                op: "LoraLayer::backward",
                lhs: (x.rows(), self.w_pre.cols()),
                rhs: upstream.shape(),
            });
        }
        let hidden = x.matmul(&self.b)?;
        let d_a = hidden.t_matmul(upstream)?.scale(self.scale);
        let d_hidden = upstream.matmul_t(&self.a)?.scale(self.scale);
        let d_b = x.t_matmul(&d_hidden)?;
        Ok(LayerGradients {
            d_b,
            d_a,
            d_bias: None,
        })
    }

    /// `W_pre + scale·B·A`.
    pub fn merge(&self) -> Result<Matrix> {
        let mut merged = self.w_pre.clone();
        merged.add_scaled_assign(self.scale, &self.delta()?)?;
        Ok(merged)
    }

    pub fn trainable_mut(&mut self) -> Vec<&mut [f64]> {
        vec![self.b.as_mut_slice(), self.a.as_mut_slice()]
    }
}

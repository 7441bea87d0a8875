use serde::{Deserialize, Serialize};

use crate::linalg::Matrix;

const SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;
const GELU_CUBIC: f64 = 0.044_715;

/// Branch nonlinearity. `None` gives the linear (mergeable) composition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Nonlinearity {
    #[default]
    None,
    Relu,
    /// tanh approximation: `0.5·x·(1 + tanh(√(2/π)·(x + 0.044715·x³)))`.
    Gelu,
}

impl Nonlinearity {
    pub fn is_linear(self) -> bool {
        self == Nonlinearity::None
    }

    pub fn apply(self, x: f64) -> f64 {
        match self {
            Nonlinearity::None => x,
            Nonlinearity::Relu => x.max(0.0),
            Nonlinearity::Gelu => {
                let t = libm::tanh(SQRT_2_OVER_PI * (x + GELU_CUBIC * x * x * x));
                0.5 * x * (1.0 + t)
            }
        }
    }

    /// Derivative; ReLU uses 0 at the kink.
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Nonlinearity::None => 1.0,
            Nonlinearity::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Nonlinearity::Gelu => {
                let inner = SQRT_2_OVER_PI * (x + GELU_CUBIC * x * x * x);
                let t = libm::tanh(inner);
                let d_inner = SQRT_2_OVER_PI * (1.0 + 3.0 * GELU_CUBIC * x * x);
                0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * d_inner
            }
        }
    }

    pub fn apply_matrix(self, m: &Matrix) -> Matrix {
        m.map(|v| self.apply(v))
    }

    pub fn derivative_matrix(self, m: &Matrix) -> Matrix {
        m.map(|v| self.derivative(v))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derivatives_match_central_differences() {
        let h = 1e-6;
        for f in [Nonlinearity::Gelu, Nonlinearity::Relu, Nonlinearity::None] {
            for x in [-2.5, -0.7, 0.3, 1.9] {
                let fd = (f.apply(x + h) - f.apply(x - h)) / (2.0 * h);
                assert!((fd - f.derivative(x)).abs() < 1e-8, "{f:?} at {x}");
            }
        }
    }

    #[test]
    fn gelu_reference_points() {
        assert_eq!(Nonlinearity::Gelu.apply(0.0), 0.0);
        // 0.5·(1 + tanh(√(2/π)·1.044715))
        assert!((Nonlinearity::Gelu.apply(1.0) - 0.841_191_990_608_276_8).abs() < 1e-12);
        assert_eq!(Nonlinearity::Relu.apply(-3.0), 0.0);
    }
}

//! Regularized losses `C(θᵀz, y) + λ‖θ‖²` and their (sub)gradients in θ.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::featuremap::dot;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    #[default]
    SquaredError,
    Hinge,
    Logistic,
}

impl LossKind {
    pub fn is_classification(self) -> bool {
        !matches!(self, LossKind::SquaredError)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossSpec {
    pub kind: LossKind,
    pub lambda: f64,
    /// Clip per-kernel losses into `[-1, 1]` before they enter a
    /// multiplicative weight update.
    pub clip_for_weights: bool,
}

impl Default for LossSpec {
    fn default() -> Self {
        LossSpec {
            kind: LossKind::SquaredError,
            lambda: 0.01,
            clip_for_weights: true,
        }
    }
}

impl LossSpec {
    pub fn new(kind: LossKind, lambda: f64) -> Result<Self> {
        let spec = LossSpec {
            kind,
            lambda,
            clip_for_weights: true,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn squared(lambda: f64) -> Self {
        LossSpec {
            kind: LossKind::SquaredError,
            lambda,
            clip_for_weights: true,
        }
    }

    pub fn with_clipping(mut self, clip: bool) -> Self {
        self.clip_for_weights = clip;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::invalid(format!(
                "regularization weight must be non-negative, got {}",
                self.lambda
            )));
        }
        Ok(())
    }

    pub fn check_label(&self, y: f64) -> Result<()> {
        if self.kind.is_classification() && y != 1.0 && y != -1.0 {
            return Err(Error::InvalidLabel(y));
        }
        if !y.is_finite() {
            return Err(Error::NonFinite("label".into()));
        }
        Ok(())
    }

    /// The data-fit term `C(pred, y)` alone.
    pub fn data_loss(&self, pred: f64, y: f64) -> Result<f64> {
        self.check_label(y)?;
        Ok(match self.kind {
            LossKind::SquaredError => (y - pred) * (y - pred),
            LossKind::Hinge => (1.0 - y * pred).max(0.0),
            LossKind::Logistic => softplus(-y * pred),
        })
    }

    /// `C(pred, y) + λ·theta_sq_norm`.
    pub fn value(&self, pred: f64, y: f64, theta_sq_norm: f64) -> Result<f64> {
        Ok(self.data_loss(pred, y)? + self.lambda * theta_sq_norm)
    }

    /// `∂C/∂pred`. The hinge kink (margin exactly 1) returns 0.
    pub fn data_derivative(&self, pred: f64, y: f64) -> Result<f64> {
        self.check_label(y)?;
        Ok(match self.kind {
            LossKind::SquaredError => 2.0 * (pred - y),
            LossKind::Hinge => {
                if y * pred < 1.0 {
                    -y
                } else {
                    0.0
                }
            }
            LossKind::Logistic => -y * sigmoid(-y * pred),
        })
    }

    /// Gradient of `value(θᵀz, y, ‖θ‖²)` with respect to θ.
    pub fn gradient(&self, z: &[f64], theta: &[f64], y: f64) -> Result<Vec<f64>> {
        check_dim(theta.len(), z.len())?;
        let g = self.data_derivative(dot(theta, z), y)?;
        let two_lambda = 2.0 * self.lambda;
        Ok(z.iter()
            .zip(theta)
            .map(|(zi, ti)| g * zi + two_lambda * ti)
            .collect())
    }

    /// Loss as it enters a multiplicative weight update.
    pub fn weight_loss(&self, loss: f64) -> Result<f64> {
        if self.clip_for_weights {
            clip_unit(loss)
        } else if loss.is_finite() {
            Ok(loss)
        } else {
            Err(Error::NonFinite("loss".into()))
        }
    }
}

/// Clamp into `[-1, 1]`.
pub fn clip_unit(v: f64) -> Result<f64> {
    if v.is_nan() {
        return Err(Error::NonFinite("clip_unit input".into()));
    }
    Ok(v.clamp(-1.0, 1.0))
}

/// `ln(1 + e^u)` without overflow.
fn softplus(u: f64) -> f64 {
    if u > 0.0 {
        u + (-u).exp().ln_1p()
    } else {
        u.exp().ln_1p()
    }
}

fn sigmoid(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

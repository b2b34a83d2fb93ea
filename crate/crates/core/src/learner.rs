//! Single-kernel random-feature learner and the common online learner trait.

use std::sync::Arc;

use crate::error::{check_dim, Error, Result};
use crate::featuremap::{dot, FeatureMap, FeatureVector};
use crate::losses::LossSpec;
use crate::raker::SlotReport;

/// Function-update stepsize.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Stepsize {
    Constant(f64),
    /// `eta0 / √t` at step `t` (1-based).
    InverseSqrt(f64),
}

impl Stepsize {
    /// `eta0 / √horizon`, or `eta0` when the horizon is unknown.
    pub fn for_horizon(eta0: f64, horizon: Option<usize>) -> Self {
        match horizon {
            Some(t) if t > 0 => Stepsize::Constant(eta0 / (t as f64).sqrt()),
            _ => Stepsize::Constant(eta0),
        }
    }

    pub fn at(&self, step: u64) -> f64 {
        match *self {
            Stepsize::Constant(eta) => eta,
            Stepsize::InverseSqrt(eta0) => eta0 / (step.max(1) as f64).sqrt(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let v = match *self {
            Stepsize::Constant(v) | Stepsize::InverseSqrt(v) => v,
        };
        if v.is_finite() && v > 0.0 {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "stepsize must be positive, got {v}"
            )))
        }
    }
}

/// Online gradient descent on `θ` in the random-feature space of one kernel.
#[derive(Debug, Clone)]
pub struct KernelLearner {
    map: Arc<FeatureMap>,
    theta: Vec<f64>,
    eta: Stepsize,
    loss: LossSpec,
    steps_taken: u64,
    radius: Option<f64>,
}

impl KernelLearner {
    pub fn new(map: Arc<FeatureMap>, eta: Stepsize, loss: LossSpec) -> Result<Self> {
        eta.validate()?;
        loss.validate()?;
        let theta = vec![0.0; map.output_dim()];
        Ok(KernelLearner {
            map,
            theta,
            eta,
            loss,
            steps_taken: 0,
            radius: None,
        })
    }

    /// Project `θ` back onto the ball `‖θ‖ ≤ radius` after every step.
    pub fn with_projection(mut self, radius: f64) -> Result<Self> {
        if !(radius.is_finite() && radius > 0.0) {
            return Err(Error::invalid("projection radius must be positive"));
        }
        self.radius = Some(radius);
        Ok(self)
    }

    pub fn map(&self) -> &Arc<FeatureMap> {
        &self.map
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn set_theta(&mut self, theta: Vec<f64>) -> Result<()> {
        check_dim(self.theta.len(), theta.len())?;
        self.theta = theta;
        Ok(())
    }

    pub fn theta_sq_norm(&self) -> f64 {
        dot(&self.theta, &self.theta)
    }

    pub fn steps_taken(&self) -> u64 {
        self.steps_taken
    }

    pub fn loss(&self) -> &LossSpec {
        &self.loss
    }

    pub fn features(&self, x: &[f64]) -> Result<FeatureVector> {
        self.map.map(x)
    }

    /// `θᵀz`.
    pub fn predict(&self, z: &[f64]) -> Result<f64> {
        check_dim(self.theta.len(), z.len())?;
        Ok(dot(&self.theta, z))
    }

    pub fn predict_x(&self, x: &[f64]) -> Result<f64> {
        let z = self.features(x)?;
        self.predict(z.values())
    }

    /// `θ ← θ - η ∇L(θᵀz, y)`.
    pub fn step(&mut self, z: &[f64], y: f64) -> Result<()> {
        let grad = self.loss.gradient(z, &self.theta, y)?;
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite("gradient".into()));
        }
        let eta = self.eta.at(self.steps_taken + 1);
        for (t, g) in self.theta.iter_mut().zip(&grad) {
            *t -= eta * g;
        }
        if let Some(r) = self.radius {
            let norm = self.theta_sq_norm().sqrt();
            if norm > r {
                let s = r / norm;
                self.theta.iter_mut().for_each(|t| *t *= s);
            }
        }
        if self.theta.iter().any(|t| !t.is_finite()) {
            return Err(Error::NonFinite("theta".into()));
        }
        self.steps_taken += 1;
        Ok(())
    }

    pub fn stored_values(&self) -> usize {
        self.theta.len()
    }
}

/// An online predictor fed one sample at a time: `predict` sees only the
/// features, and `learn` reveals the label for the sample last predicted.
pub trait OnlineLearner {
    fn name(&self) -> String;

    fn predict(&mut self, x: &[f64]) -> Result<f64>;

    /// Reveal the label of the last predicted sample and update.
    fn learn(&mut self, y: f64) -> Result<SlotReport>;

    /// Number of `f64` values held by the learner's state.
    fn state_size(&self) -> usize;
}

/// A [`KernelLearner`] wrapped as a stand-alone online learner.
#[derive(Debug, Clone)]
pub struct SingleKernel {
    learner: KernelLearner,
    t: u64,
    pending: Option<(FeatureVector, f64)>,
}

impl SingleKernel {
    pub fn new(learner: KernelLearner) -> Self {
        SingleKernel {
            learner,
            t: 0,
            pending: None,
        }
    }

    pub fn learner(&self) -> &KernelLearner {
        &self.learner
    }
}

impl OnlineLearner for SingleKernel {
    fn name(&self) -> String {
        "single".into()
    }

    fn predict(&mut self, x: &[f64]) -> Result<f64> {
        let z = self.learner.features(x)?;
        let pred = self.learner.predict(z.values())?;
        self.pending = Some((z, pred));
        Ok(pred)
    }

    fn learn(&mut self, y: f64) -> Result<SlotReport> {
        let (z, pred) = self
            .pending
            .take()
            .ok_or_else(|| Error::invalid("learn called before predict"))?;
        let loss = self
            .learner
            .loss
            .value(pred, y, self.learner.theta_sq_norm())?;
        if !loss.is_finite() {
            return Err(Error::NonFinite("loss".into()));
        }
        self.learner.step(z.values(), y)?;
        self.t += 1;
        Ok(SlotReport {
            t: self.t,
            prediction: pred,
            combined_loss: loss,
            per_kernel_predictions: vec![pred],
            per_kernel_losses: vec![loss],
            normalized_weights: vec![1.0],
        })
    }

    fn state_size(&self) -> usize {
        self.learner.stored_values() + self.learner.map.stored_values()
    }
}

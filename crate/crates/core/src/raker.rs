//! Multi-kernel learner: one random-feature learner per kernel, mixed by
//! exponentiated-gradient weights.
//!
//! Each slot the combined prediction is `Σ_p w̄_p θ_pᵀ z_p(x)`. After the label
//! arrives every per-kernel learner takes a gradient step on its own loss and
//! the un-normalized weights are multiplied by `exp(-η_w ℓ_p)`. Weights are
//! stored as logarithms so long streams cannot underflow them.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{check_dim, Error, Result};
use crate::featuremap::{FeatureMap, KernelSpec, Variant};
use crate::learner::{KernelLearner, OnlineLearner, Stepsize};
use crate::losses::LossSpec;

/// Per-slot telemetry. For ensembles the per-kernel vectors hold one entry
/// per mixture component.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlotReport {
    pub t: u64,
    pub prediction: f64,
    pub combined_loss: f64,
    pub per_kernel_predictions: Vec<f64>,
    pub per_kernel_losses: Vec<f64>,
    pub normalized_weights: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct RakerConfig {
    pub kernels: Vec<KernelSpec>,
    pub num_features: usize,
    pub variant: Variant,
    pub eta_theta: Stepsize,
    pub eta_weight: f64,
    pub loss: LossSpec,
    pub seed: u64,
}

/// Feature maps for a kernel dictionary, the map of kernel `p` drawn from
/// stream `p` of `seed`.
pub fn dictionary_maps(
    kernels: &[KernelSpec],
    num_features: usize,
    variant: Variant,
    seed: u64,
) -> Result<Vec<Arc<FeatureMap>>> {
    kernels
        .iter()
        .enumerate()
        .map(|(p, spec)| {
            FeatureMap::sample_keyed(*spec, num_features, variant, seed, p as u64).map(Arc::new)
        })
        .collect()
}

/// Predictions cached between `prepare` and `commit`.
#[derive(Debug, Clone)]
pub struct PreparedSlot {
    pub prediction: f64,
    pub per_kernel: Vec<f64>,
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Raker {
    learners: Vec<KernelLearner>,
    log_weights: Vec<f64>,
    eta_weight: f64,
    loss: LossSpec,
    t: u64,
    pending: Option<(Vec<Vec<f64>>, PreparedSlot)>,
}

impl Raker {
    pub fn new(config: &RakerConfig) -> Result<Self> {
        let maps = dictionary_maps(
            &config.kernels,
            config.num_features,
            config.variant,
            config.seed,
        )?;
        Self::with_maps(maps, config.eta_theta, config.eta_weight, config.loss)
    }

    /// Build from existing feature maps, one learner per map.
    pub fn with_maps(
        maps: Vec<Arc<FeatureMap>>,
        eta_theta: Stepsize,
        eta_weight: f64,
        loss: LossSpec,
    ) -> Result<Self> {
        if maps.is_empty() {
            return Err(Error::invalid("kernel dictionary must not be empty"));
        }
        if !(eta_weight > 0.0 && eta_weight < 1.0) {
            return Err(Error::invalid(format!(
                "weight stepsize must lie in (0, 1), got {eta_weight}"
            )));
        }
        let d = maps[0].input_dim();
        if let Some(m) = maps.iter().find(|m| m.input_dim() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: m.input_dim(),
            });
        }
        let learners = maps
            .into_iter()
            .map(|m| KernelLearner::new(m, eta_theta, loss))
            .collect::<Result<Vec<_>>>()?;
        let p = learners.len();
        Ok(Raker {
            learners,
            log_weights: vec![0.0; p],
            eta_weight,
            loss,
            t: 0,
            pending: None,
        })
    }

    pub fn num_kernels(&self) -> usize {
        self.learners.len()
    }

    pub fn input_dim(&self) -> usize {
        self.learners[0].map().input_dim()
    }

    pub fn learners(&self) -> &[KernelLearner] {
        &self.learners
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    pub fn loss(&self) -> &LossSpec {
        &self.loss
    }

    /// Slots processed so far.
    pub fn slots(&self) -> u64 {
        self.t
    }

    pub fn normalized_weights(&self) -> Vec<f64> {
        softmax(&self.log_weights)
    }

    /// Feature vectors `z_p(x)` for every kernel.
    pub fn features(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        check_dim(self.input_dim(), x.len())?;
        self.learners
            .iter()
            .map(|l| l.features(x).map(|z| z.0))
            .collect()
    }

    /// Combined prediction and the per-kernel predictions behind it.
    pub fn predict(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let feats = self.features(x)?;
        let slot = self.prepare_from(&feats)?;
        Ok((slot.prediction, slot.per_kernel))
    }

    pub fn prepare_from(&self, features: &[Vec<f64>]) -> Result<PreparedSlot> {
        check_dim(self.learners.len(), features.len())?;
        let per_kernel = self
            .learners
            .iter()
            .zip(features)
            .map(|(l, z)| l.predict(z))
            .collect::<Result<Vec<_>>>()?;
        let weights = self.normalized_weights();
        let prediction = mix(&weights, &per_kernel);
        Ok(PreparedSlot {
            prediction,
            per_kernel,
            weights,
        })
    }

    /// One full slot: predict on `x`, reveal `y`, update.
    pub fn update(&mut self, x: &[f64], y: f64) -> Result<SlotReport> {
        let feats = self.features(x)?;
        let slot = self.prepare_from(&feats)?;
        self.commit(&feats, slot, y)
    }

    /// Update with the label for a slot prepared from `features`. The report
    /// describes the state before the update.
    pub fn commit(
        &mut self,
        features: &[Vec<f64>],
        slot: PreparedSlot,
        y: f64,
    ) -> Result<SlotReport> {
        self.loss.check_label(y)?;
        let mut losses = Vec::with_capacity(self.learners.len());
        let mut mixed_reg = 0.0;
        for ((l, &f), &w) in self
            .learners
            .iter()
            .zip(&slot.per_kernel)
            .zip(&slot.weights)
        {
            let sq = l.theta_sq_norm();
            losses.push(self.loss.value(f, y, sq)?);
            mixed_reg += w * w * sq;
        }
        // regularizer of Σ w̄_p f_p in the direct-sum space
        let combined_loss = self.loss.data_loss(slot.prediction, y)? + self.loss.lambda * mixed_reg;
        if !combined_loss.is_finite() || losses.iter().any(|l| !l.is_finite()) {
            return Err(Error::NonFinite("loss".into()));
        }
        for (l, z) in self.learners.iter_mut().zip(features) {
            l.step(z, y)?;
        }
        self.reweight(&losses)?;
        self.t += 1;
        Ok(SlotReport {
            t: self.t,
            prediction: slot.prediction,
            combined_loss,
            per_kernel_predictions: slot.per_kernel,
            per_kernel_losses: losses,
            normalized_weights: slot.weights,
        })
    }

    /// Replace every learner's `θ_p` and the kernel weights, e.g. to start
    /// from a function found by other learners.
    pub fn warm_start(&mut self, thetas: Vec<Vec<f64>>, weights: &[f64]) -> Result<()> {
        check_dim(self.learners.len(), thetas.len())?;
        check_dim(self.learners.len(), weights.len())?;
        if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::invalid("warm-start weights must be positive"));
        }
        for (l, th) in self.learners.iter_mut().zip(thetas) {
            l.set_theta(th)?;
        }
        let max = weights.iter().cloned().fold(0.0, f64::max);
        self.log_weights = weights.iter().map(|w| (w / max).ln()).collect();
        Ok(())
    }

    /// Multiplicative weight update `w_p ← w_p exp(-η_w ℓ_p)` in log space.
    pub fn reweight(&mut self, losses: &[f64]) -> Result<()> {
        check_dim(self.log_weights.len(), losses.len())?;
        for (lw, &l) in self.log_weights.iter_mut().zip(losses) {
            *lw -= self.eta_weight * self.loss.weight_loss(l)?;
        }
        let max = self
            .log_weights
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(Error::NonFinite("kernel weights".into()));
        }
        self.log_weights.iter_mut().for_each(|lw| *lw -= max);
        Ok(())
    }

    pub fn stored_values(&self) -> usize {
        self.learners
            .iter()
            .map(|l| l.stored_values() + l.map().stored_values())
            .sum::<usize>()
            + self.log_weights.len()
    }
}

impl OnlineLearner for Raker {
    fn name(&self) -> String {
        "raker".into()
    }

    fn predict(&mut self, x: &[f64]) -> Result<f64> {
        let feats = self.features(x)?;
        let slot = self.prepare_from(&feats)?;
        let pred = slot.prediction;
        self.pending = Some((feats, slot));
        Ok(pred)
    }

    fn learn(&mut self, y: f64) -> Result<SlotReport> {
        let (feats, slot) = self
            .pending
            .take()
            .ok_or_else(|| Error::invalid("learn called before predict"))?;
        self.commit(&feats, slot, y)
    }

    fn state_size(&self) -> usize {
        self.stored_values()
    }
}

pub(crate) fn softmax(logs: &[f64]) -> Vec<f64> {
    let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

pub(crate) fn mix(weights: &[f64], values: &[f64]) -> f64 {
    weights
        .iter()
        .zip(values)
        .fold(0.0, |acc, (w, v)| acc + w * v)
}

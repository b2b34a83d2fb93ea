//! Adaptive ensemble of [`Raker`] instances over geometric intervals.
//!
//! Level `j` partitions the horizon into consecutive intervals of length
//! `2^j` starting at `t = 2^j`. A fresh Raker instance starts at the first
//! slot of every interval with learning rate `min{1/2, η0/√|I|}` and runs
//! until the interval ends. Slot `t` is covered by exactly one interval per
//! level `j` with `2^j ≤ t`. The instances' outputs are mixed with weights
//! `h^{(I)}` updated multiplicatively from the loss of each instance relative
//! to the loss of the mixture.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{check_dim, Error, Result};
use crate::featuremap::FeatureMap;
use crate::learner::{OnlineLearner, Stepsize};
use crate::losses::LossSpec;
use crate::raker::{mix, softmax, PreparedSlot, Raker, SlotReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Interval {
    pub start: u64,
    pub end: u64,
    pub level: u32,
}

impl Interval {
    /// The level-`level` interval of the geometric cover that contains `t`.
    pub fn containing(t: u64, level: u32) -> Option<Self> {
        let len = 1u64.checked_shl(level)?;
        if t < len {
            return None;
        }
        let start = (t / len) * len;
        Some(Interval {
            start,
            end: start + (len - 1),
            level,
        })
    }

    pub fn len(&self) -> u64 {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, t: u64) -> bool {
        self.start <= t && t <= self.end
    }

    /// `min{1/2, η0 / √|I|}`.
    pub fn learning_rate(&self, eta0: f64) -> f64 {
        (eta0 / (self.len() as f64).sqrt()).min(0.5)
    }
}

/// Intervals of the geometric cover active at slot `t`, sorted by level.
pub fn active_intervals(t: u64) -> Result<Vec<Interval>> {
    if t < 1 {
        return Err(Error::Scheduler("slots are numbered from 1".into()));
    }
    let top = 63 - t.leading_zeros();
    Ok((0..=top)
        .filter_map(|j| Interval::containing(t, j))
        .collect())
}

/// Which intervals host Raker instances.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum IntervalScheme {
    #[default]
    Geometric,
    /// A single instance on `[1, 2^level]`. Predicting past the end is an error.
    Single { level: u32 },
}

impl IntervalScheme {
    fn active(&self, t: u64) -> Result<Vec<Interval>> {
        match self {
            IntervalScheme::Geometric => active_intervals(t),
            IntervalScheme::Single { level } => {
                let end = 1u64 << level;
                if t < 1 {
                    Err(Error::Scheduler("slots are numbered from 1".into()))
                } else if t <= end {
                    Ok(vec![Interval {
                        start: 1,
                        end,
                        level: *level,
                    }])
                } else {
                    Ok(Vec::new())
                }
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct AdaRakerConfig {
    pub eta0: f64,
    pub loss: LossSpec,
    pub scheme: IntervalScheme,
    /// Use `exp(+η r)` instead of `exp(-η r)` in the ensemble weight update.
    pub flip_relative_sign: bool,
    /// Give an instance zero ensemble weight in its first slot. When every
    /// active instance is new the ensemble weights are uniform.
    pub mute_first_slot: bool,
    /// Start new instances from the current ensemble function instead of
    /// `θ = 0` with uniform kernel weights.
    pub warm_start: bool,
    /// Per-instance stepsize overrides; both default to the interval rate.
    pub eta_theta_override: Option<f64>,
    pub eta_weight_override: Option<f64>,
}

impl Default for AdaRakerConfig {
    fn default() -> Self {
        AdaRakerConfig {
            eta0: 1.0,
            loss: LossSpec::default(),
            scheme: IntervalScheme::Geometric,
            flip_relative_sign: false,
            mute_first_slot: false,
            warm_start: true,
            eta_theta_override: None,
            eta_weight_override: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Instance {
    pub interval: Interval,
    pub raker: Raker,
    /// `ln h^{(I)}`.
    pub log_h: f64,
    pub eta: f64,
}

#[derive(Debug, Clone)]
pub struct AdaSlotReport {
    pub slot: SlotReport,
    /// Intervals active at the reported slot, aligned with the per-instance
    /// vectors of `slot`.
    pub intervals: Vec<Interval>,
}

struct Pending {
    features: Vec<Vec<f64>>,
    prepared: Vec<PreparedSlot>,
    weights: Vec<f64>,
    prediction: f64,
}

pub struct AdaRaker {
    maps: Vec<Arc<FeatureMap>>,
    config: AdaRakerConfig,
    instances: Vec<Instance>,
    now: u64,
    pending: Option<Pending>,
    /// Per-kernel `(θ, w̄)` equivalent to the ensemble, for warm starts.
    collapsed: Option<(Vec<Vec<f64>>, Vec<f64>)>,
}

impl AdaRaker {
    /// The maps are shared by every instance.
    pub fn new(maps: Vec<Arc<FeatureMap>>, config: AdaRakerConfig) -> Result<Self> {
        if maps.is_empty() {
            return Err(Error::invalid("kernel dictionary must not be empty"));
        }
        if !(config.eta0.is_finite() && config.eta0 > 0.0) {
            return Err(Error::invalid(format!(
                "eta0 must be positive, got {}",
                config.eta0
            )));
        }
        config.loss.validate()?;
        let mut ada = AdaRaker {
            maps,
            config,
            instances: Vec::new(),
            now: 1,
            pending: None,
            collapsed: None,
        };
        ada.spawn()?;
        Ok(ada)
    }

    /// The slot whose sample will be predicted next.
    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn instances(&self) -> &[Instance] {
        &self.instances
    }

    pub fn active(&self) -> Vec<Interval> {
        self.instances.iter().map(|i| i.interval).collect()
    }

    pub fn maps(&self) -> &[Arc<FeatureMap>] {
        &self.maps
    }

    /// `h̄^{(I)}` over the active instances.
    pub fn normalized_weights(&self) -> Vec<f64> {
        let fresh = |i: &Instance| self.config.mute_first_slot && i.interval.start == self.now;
        if self.instances.iter().all(fresh) {
            let n = self.instances.len() as f64;
            return vec![1.0 / n; self.instances.len()];
        }
        let logs: Vec<f64> = self
            .instances
            .iter()
            .map(|i| if fresh(i) { f64::NEG_INFINITY } else { i.log_h })
            .collect();
        softmax(&logs)
    }

    fn spawn(&mut self) -> Result<()> {
        for interval in self.config.scheme.active(self.now)? {
            if interval.start != self.now {
                continue;
            }
            let eta = interval.learning_rate(self.config.eta0);
            let eta_theta = self.config.eta_theta_override.unwrap_or(eta);
            let eta_weight = self.config.eta_weight_override.unwrap_or(eta);
            let mut raker = Raker::with_maps(
                self.maps.clone(),
                Stepsize::Constant(eta_theta),
                eta_weight,
                self.config.loss,
            )?;
            if let Some((thetas, weights)) = &self.collapsed {
                raker.warm_start(thetas.clone(), weights)?;
            }
            self.instances.push(Instance {
                interval,
                raker,
                log_h: eta.ln(),
                eta,
            });
        }
        self.instances.sort_by_key(|i| i.interval.level);
        Ok(())
    }

    fn features(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        check_dim(self.maps[0].input_dim(), x.len())?;
        self.maps.iter().map(|m| m.map(x).map(|z| z.0)).collect()
    }

    fn prepare(&self, x: &[f64]) -> Result<Pending> {
        if self.instances.is_empty() {
            return Err(Error::Scheduler(format!(
                "no active interval at slot {}",
                self.now
            )));
        }
        let features = self.features(x)?;
        let prepared = self
            .instances
            .iter()
            .map(|i| i.raker.prepare_from(&features))
            .collect::<Result<Vec<_>>>()?;
        let outputs: Vec<f64> = prepared.iter().map(|p| p.prediction).collect();
        let weights = self.normalized_weights();
        let prediction = mix(&weights, &outputs);
        Ok(Pending {
            features,
            prepared,
            weights,
            prediction,
        })
    }

    /// Ensemble prediction at the current slot and each instance's output.
    pub fn predict(&self, x: &[f64]) -> Result<(f64, Vec<(Interval, f64)>)> {
        let p = self.prepare(x)?;
        let per = self
            .instances
            .iter()
            .zip(&p.prepared)
            .map(|(i, s)| (i.interval, s.prediction))
            .collect();
        Ok((p.prediction, per))
    }

    pub fn update(&mut self, x: &[f64], y: f64) -> Result<AdaSlotReport> {
        let pending = self.prepare(x)?;
        self.commit(pending, y)
    }

    fn commit(&mut self, pending: Pending, y: f64) -> Result<AdaSlotReport> {
        let loss = self.config.loss;
        let overall = loss.data_loss(pending.prediction, y)?;
        let t = self.now;
        let sign = if self.config.flip_relative_sign {
            1.0
        } else {
            -1.0
        };
        let mut outputs = Vec::with_capacity(self.instances.len());
        let mut losses = Vec::with_capacity(self.instances.len());
        for (inst, prepared) in self.instances.iter_mut().zip(pending.prepared) {
            let own = loss.data_loss(prepared.prediction, y)?;
            // an instance keeps h = η^{(I)} through its first slot
            if inst.interval.start != t {
                let relative = overall - own;
                inst.log_h += sign * inst.eta * relative;
            }
            if !inst.log_h.is_finite() {
                return Err(Error::NonFinite(format!(
                    "ensemble weight of interval [{}, {}]",
                    inst.interval.start, inst.interval.end
                )));
            }
            outputs.push(prepared.prediction);
            losses.push(own);
            inst.raker.commit(&pending.features, prepared, y)?;
        }
        let intervals = self.active();
        if self.config.warm_start {
            self.collapsed = Some(self.collapse());
        }
        self.instances.retain(|i| i.interval.end > t);
        self.now += 1;
        self.spawn()?;
        Ok(AdaSlotReport {
            slot: SlotReport {
                t,
                prediction: pending.prediction,
                combined_loss: overall,
                per_kernel_predictions: outputs,
                per_kernel_losses: losses,
                normalized_weights: pending.weights,
            },
            intervals,
        })
    }

    /// Kernel weights `u_p = Σ_I h̄_I w̄_p^I` and coefficients
    /// `θ_p = Σ_I h̄_I w̄_p^I θ_p^I / u_p`, so that a single Raker holding them
    /// predicts exactly what the ensemble predicts.
    fn collapse(&self) -> (Vec<Vec<f64>>, Vec<f64>) {
        let logs: Vec<f64> = self.instances.iter().map(|i| i.log_h).collect();
        let h = softmax(&logs);
        let p = self.maps.len();
        let mut weights = vec![0.0; p];
        let mut thetas: Vec<Vec<f64>> = self
            .maps
            .iter()
            .map(|m| vec![0.0; m.output_dim()])
            .collect();
        for (inst, hi) in self.instances.iter().zip(&h) {
            let w = inst.raker.normalized_weights();
            for (k, learner) in inst.raker.learners().iter().enumerate() {
                let c = hi * w[k];
                weights[k] += c;
                for (a, b) in thetas[k].iter_mut().zip(learner.theta()) {
                    *a += c * b;
                }
            }
        }
        for (th, &u) in thetas.iter_mut().zip(&weights) {
            th.iter_mut().for_each(|v| *v /= u);
        }
        (thetas, weights)
    }

    pub fn stored_values(&self) -> usize {
        let maps: usize = self.maps.iter().map(|m| m.stored_values()).sum();
        let per_instance: usize = self
            .instances
            .iter()
            .map(|i| {
                i.raker
                    .learners()
                    .iter()
                    .map(|l| l.stored_values())
                    .sum::<usize>()
                    + i.raker.num_kernels()
                    + 2
            })
            .sum();
        maps + per_instance
    }
}

impl OnlineLearner for AdaRaker {
    fn name(&self) -> String {
        "adaraker".into()
    }

    fn predict(&mut self, x: &[f64]) -> Result<f64> {
        let p = self.prepare(x)?;
        let pred = p.prediction;
        self.pending = Some(p);
        Ok(pred)
    }

    fn learn(&mut self, y: f64) -> Result<SlotReport> {
        let p = self
            .pending
            .take()
            .ok_or_else(|| Error::invalid("learn called before predict"))?;
        Ok(self.commit(p, y)?.slot)
    }

    fn state_size(&self) -> usize {
        self.stored_values()
    }
}

//! Exact-kernel online learners: functional gradient descent over a growing
//! (or FIFO-budgeted) support set, and its multi-kernel mixture OMKL.
//!
//! A functional step on `f = Σ α_i κ(x_i, ·)` shrinks every coefficient by
//! `1 - 2ηλ` and appends the new sample with coefficient `-η ∂C/∂f(x)`, the
//! kernel-space counterpart of [`crate::learner::KernelLearner::step`].

use std::collections::VecDeque;

use crate::error::{check_dim, Error, Result};
use crate::featuremap::KernelSpec;
use crate::learner::OnlineLearner;
use crate::losses::LossSpec;
use crate::raker::{mix, softmax, SlotReport};

#[derive(Debug, Clone, PartialEq)]
pub struct SupportSet {
    centers: VecDeque<(Vec<f64>, f64)>,
    budget: Option<usize>,
    /// `‖f‖²_H`, maintained incrementally.
    norm_sq: f64,
}

impl SupportSet {
    pub fn new(budget: Option<usize>) -> Result<Self> {
        if budget == Some(0) {
            return Err(Error::invalid("budget must be positive"));
        }
        Ok(SupportSet {
            centers: VecDeque::new(),
            budget,
            norm_sq: 0.0,
        })
    }

    pub fn unbounded() -> Self {
        SupportSet {
            centers: VecDeque::new(),
            budget: None,
            norm_sq: 0.0,
        }
    }

    pub fn budget(&self) -> Option<usize> {
        self.budget
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn centers(&self) -> impl Iterator<Item = (&[f64], f64)> {
        self.centers.iter().map(|(x, a)| (x.as_slice(), *a))
    }

    pub fn norm_sq(&self) -> f64 {
        self.norm_sq
    }

    pub fn push(&mut self, spec: &KernelSpec, x: Vec<f64>, alpha: f64) -> Result<()> {
        check_dim(spec.input_dim, x.len())?;
        let f_x = self.predict_unchecked(spec, &x);
        self.norm_sq += 2.0 * alpha * f_x + alpha * alpha;
        self.centers.push_back((x, alpha));
        self.enforce_budget(spec);
        Ok(())
    }

    fn enforce_budget(&mut self, spec: &KernelSpec) {
        if let Some(b) = self.budget {
            while self.centers.len() > b {
                let (x, a) = self.centers.pop_front().expect("non-empty");
                // ‖g‖² = ‖g + a κ(x,·)‖² - 2a g(x) - a²
                let g_x = self.predict_unchecked(spec, &x);
                self.norm_sq -= 2.0 * a * g_x + a * a;
            }
        }
    }

    /// `Σ α_i κ(x, x_i)`.
    pub fn predict(&self, spec: &KernelSpec, x: &[f64]) -> Result<f64> {
        check_dim(spec.input_dim, x.len())?;
        Ok(self.predict_unchecked(spec, x))
    }

    fn predict_unchecked(&self, spec: &KernelSpec, x: &[f64]) -> f64 {
        self.centers
            .iter()
            .map(|(c, a)| a * spec.eval_unchecked(x, c))
            .sum()
    }

    /// One functional gradient step on `(x, y)`.
    pub fn step(
        &mut self,
        spec: &KernelSpec,
        loss: &LossSpec,
        x: &[f64],
        y: f64,
        eta: f64,
    ) -> Result<()> {
        let f_x = self.predict(spec, x)?;
        self.step_with_prediction(spec, loss, x, f_x, y, eta)
    }

    pub(crate) fn step_with_prediction(
        &mut self,
        spec: &KernelSpec,
        loss: &LossSpec,
        x: &[f64],
        f_x: f64,
        y: f64,
        eta: f64,
    ) -> Result<()> {
        if !(eta.is_finite() && eta > 0.0) {
            return Err(Error::invalid(format!(
                "stepsize must be positive, got {eta}"
            )));
        }
        let g = loss.data_derivative(f_x, y)?;
        let shrink = 1.0 - 2.0 * eta * loss.lambda;
        if shrink != 1.0 {
            self.centers.iter_mut().for_each(|(_, a)| *a *= shrink);
            self.norm_sq *= shrink * shrink;
        }
        let alpha = -eta * g;
        if !alpha.is_finite() {
            return Err(Error::NonFinite("support coefficient".into()));
        }
        if alpha != 0.0 {
            // f(x) after shrinking is shrink * f_x
            self.norm_sq += 2.0 * alpha * shrink * f_x + alpha * alpha;
            self.centers.push_back((x.to_vec(), alpha));
            self.enforce_budget(spec);
        }
        Ok(())
    }

    pub fn stored_values(&self) -> usize {
        self.centers.iter().map(|(x, _)| x.len() + 1).sum()
    }
}

/// `(x, per-kernel predictions, normalized weights, prediction)` of the last
/// `predict` call.
type Pending = (Vec<f64>, Vec<f64>, Vec<f64>, f64);

/// Exact-kernel multi-kernel learner (OMKL), optionally budgeted (OMKL-B).
#[derive(Debug, Clone)]
pub struct Omkl {
    kernels: Vec<KernelSpec>,
    sets: Vec<SupportSet>,
    log_weights: Vec<f64>,
    eta_theta: f64,
    eta_weight: f64,
    loss: LossSpec,
    t: u64,
    pending: Option<Pending>,
}

impl Omkl {
    pub fn new(
        kernels: Vec<KernelSpec>,
        budget: Option<usize>,
        eta_theta: f64,
        eta_weight: f64,
        loss: LossSpec,
    ) -> Result<Self> {
        if kernels.is_empty() {
            return Err(Error::invalid("kernel dictionary must not be empty"));
        }
        if !(eta_theta.is_finite() && eta_theta > 0.0) {
            return Err(Error::invalid(format!(
                "stepsize must be positive, got {eta_theta}"
            )));
        }
        if !(eta_weight > 0.0 && eta_weight < 1.0) {
            return Err(Error::invalid(format!(
                "weight stepsize must lie in (0, 1), got {eta_weight}"
            )));
        }
        for k in &kernels {
            k.validate()?;
            check_dim(kernels[0].input_dim, k.input_dim)?;
        }
        loss.validate()?;
        let sets = (0..kernels.len())
            .map(|_| SupportSet::new(budget))
            .collect::<Result<Vec<_>>>()?;
        let p = kernels.len();
        Ok(Omkl {
            kernels,
            sets,
            log_weights: vec![0.0; p],
            eta_theta,
            eta_weight,
            loss,
            t: 0,
            pending: None,
        })
    }

    pub fn support_sets(&self) -> &[SupportSet] {
        &self.sets
    }

    pub fn normalized_weights(&self) -> Vec<f64> {
        softmax(&self.log_weights)
    }

    pub fn predict(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let per = self
            .sets
            .iter()
            .zip(&self.kernels)
            .map(|(s, k)| s.predict(k, x))
            .collect::<Result<Vec<_>>>()?;
        let w = self.normalized_weights();
        Ok((mix(&w, &per), per))
    }

    pub fn update(&mut self, x: &[f64], y: f64) -> Result<SlotReport> {
        let (pred, per) = Omkl::predict(self, x)?;
        let w = self.normalized_weights();
        self.commit(x, per, w, pred, y)
    }

    fn commit(
        &mut self,
        x: &[f64],
        per: Vec<f64>,
        weights: Vec<f64>,
        pred: f64,
        y: f64,
    ) -> Result<SlotReport> {
        self.loss.check_label(y)?;
        let mut losses = Vec::with_capacity(per.len());
        let mut mixed_reg = 0.0;
        for ((s, &f), &w) in self.sets.iter().zip(&per).zip(&weights) {
            losses.push(self.loss.value(f, y, s.norm_sq())?);
            mixed_reg += w * w * s.norm_sq();
        }
        let combined_loss = self.loss.data_loss(pred, y)? + self.loss.lambda * mixed_reg;
        if !combined_loss.is_finite() || losses.iter().any(|l| !l.is_finite()) {
            return Err(Error::NonFinite("loss".into()));
        }
        for ((s, k), &f) in self.sets.iter_mut().zip(&self.kernels).zip(&per) {
            s.step_with_prediction(k, &self.loss, x, f, y, self.eta_theta)?;
        }
        for (lw, &l) in self.log_weights.iter_mut().zip(&losses) {
            *lw -= self.eta_weight * self.loss.weight_loss(l)?;
        }
        let max = self
            .log_weights
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        self.log_weights.iter_mut().for_each(|lw| *lw -= max);
        self.t += 1;
        Ok(SlotReport {
            t: self.t,
            prediction: pred,
            combined_loss,
            per_kernel_predictions: per,
            per_kernel_losses: losses,
            normalized_weights: weights,
        })
    }

    pub fn stored_values(&self) -> usize {
        self.sets.iter().map(|s| s.stored_values()).sum::<usize>() + self.log_weights.len()
    }
}

impl OnlineLearner for Omkl {
    fn name(&self) -> String {
        match self.sets[0].budget() {
            Some(b) => format!("omkl-b-{b}"),
            None => "omkl".into(),
        }
    }

    fn predict(&mut self, x: &[f64]) -> Result<f64> {
        let (pred, per) = Omkl::predict(self, x)?;
        let w = self.normalized_weights();
        self.pending = Some((x.to_vec(), per, w, pred));
        Ok(pred)
    }

    fn learn(&mut self, y: f64) -> Result<SlotReport> {
        let (x, per, w, pred) = self
            .pending
            .take()
            .ok_or_else(|| Error::invalid("learn called before predict"))?;
        self.commit(&x, per, w, pred, y)
    }

    fn state_size(&self) -> usize {
        self.stored_values()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};

    fn g1() -> KernelSpec {
        KernelSpec::gaussian(1.0, 2).unwrap()
    }

    fn brute_norm(s: &SupportSet, k: &KernelSpec) -> f64 {
        let c: Vec<_> = s.centers().collect();
        let mut n = 0.0;
        for (xi, ai) in &c {
            for (xj, aj) in &c {
                n += ai * aj * k.eval(xi, xj).unwrap();
            }
        }
        n
    }

    #[test]
    fn predictions() {
        let k = g1();
        let mut s = SupportSet::unbounded();
        assert_eq!(s.predict(&k, &[0.3, 0.2]).unwrap(), 0.0);
        s.push(&k, vec![0.3, 0.2], 1.0).unwrap();
        assert_eq!(s.predict(&k, &[0.3, 0.2]).unwrap(), 1.0);
        s.push(&k, vec![1.0, 0.0], -0.5).unwrap();
        // hand-summed: 1 - 0.5 exp(-(0.49 + 0.04)/2)
        let expected = 1.0 - 0.5 * (-0.265f64).exp();
        assert_abs_diff_eq!(
            s.predict(&k, &[0.3, 0.2]).unwrap(),
            expected,
            epsilon = 1e-15
        );
        assert!(s.predict(&k, &[0.3]).is_err());
    }

    #[test]
    fn first_functional_step() {
        let k = g1();
        let mut s = SupportSet::unbounded();
        s.step(&k, &LossSpec::squared(0.0), &[0.1, 0.1], 1.0, 0.1)
            .unwrap();
        let c: Vec<_> = s.centers().collect();
        assert_eq!(c.len(), 1);
        assert_abs_diff_eq!(c[0].1, 0.2, epsilon = 1e-15);
    }

    #[test]
    fn zero_residual_adds_nothing() {
        let k = g1();
        let loss = LossSpec::squared(0.0);
        let mut s = SupportSet::unbounded();
        s.step(&k, &loss, &[0.1, 0.1], 1.0, 0.1).unwrap();
        let before = s.clone();
        let y = s.predict(&k, &[0.5, 0.5]).unwrap();
        s.step(&k, &loss, &[0.5, 0.5], y, 0.1).unwrap();
        assert_eq!(s, before);
        assert!(s.step(&k, &loss, &[0.5, 0.5], y, 0.0).is_err());
    }

    #[test]
    fn fifo_budget() {
        let k = g1();
        let loss = LossSpec::squared(0.0);
        let mut s = SupportSet::new(Some(2)).unwrap();
        for i in 0..3 {
            s.step(&k, &loss, &[i as f64, 0.0], 5.0, 0.1).unwrap();
            assert!(s.len() <= 2);
        }
        let firsts: Vec<f64> = s.centers().map(|(x, _)| x[0]).collect();
        assert_eq!(firsts, vec![1.0, 2.0]);
        assert!(SupportSet::new(Some(0)).is_err());

        let mut s = SupportSet::new(Some(5)).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let mut seen = Vec::new();
        for _ in 0..40 {
            let x = vec![rng.random::<f64>(), rng.random::<f64>()];
            seen.push(x.clone());
            s.step(&k, &loss, &x, rng.random(), 0.3).unwrap();
            assert!(s.len() <= 5);
            let kept: Vec<&[f64]> = s.centers().map(|(x, _)| x).collect();
            let tail: Vec<&[f64]> = seen[seen.len() - kept.len()..]
                .iter()
                .map(|v| v.as_slice())
                .collect();
            assert_eq!(kept, tail);
        }
    }

    #[test]
    fn incremental_norm_matches_brute_force() {
        let k = g1();
        let loss = LossSpec::squared(0.05);
        for budget in [None, Some(7)] {
            let mut s = SupportSet::new(budget).unwrap();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
            for _ in 0..50 {
                let x = vec![rng.random::<f64>(), rng.random::<f64>()];
                s.step(&k, &loss, &x, rng.random(), 0.2).unwrap();
            }
            assert_abs_diff_eq!(s.norm_sq(), brute_norm(&s, &k), epsilon = 1e-10);
        }
    }

    #[test]
    fn omkl_single_kernel_reduces_to_functional_step() {
        let k = g1();
        let loss = LossSpec::squared(0.01);
        let mut omkl = Omkl::new(vec![k], None, 0.1, 0.5, loss).unwrap();
        let mut s = SupportSet::unbounded();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..30 {
            let x = vec![rng.random::<f64>(), rng.random::<f64>()];
            let y: f64 = rng.random();
            let rep = omkl.update(&x, y).unwrap();
            assert_eq!(rep.prediction, s.predict(&k, &x).unwrap());
            s.step(&k, &loss, &x, y, 0.1).unwrap();
        }
        assert_eq!(&omkl.support_sets()[0], &s);
    }

    #[test]
    fn omkl_equal_losses_keep_weights() {
        let k = g1();
        let mut omkl = Omkl::new(vec![k, k], None, 0.1, 0.5, LossSpec::squared(0.0)).unwrap();
        for i in 0..10 {
            omkl.update(&[i as f64 * 0.1, 0.2], 0.4).unwrap();
            assert_eq!(omkl.normalized_weights(), vec![0.5, 0.5]);
        }
    }

    #[test]
    fn omkl_jensen_and_budget() {
        let kernels: Vec<KernelSpec> = [0.1, 1.0, 10.0]
            .iter()
            .map(|&s| KernelSpec::gaussian(s, 2).unwrap())
            .collect();
        let mut omkl = Omkl::new(kernels, Some(4), 0.2, 0.5, LossSpec::squared(0.01)).unwrap();
        assert_eq!(OnlineLearner::name(&omkl), "omkl-b-4");
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let x = [rng.random::<f64>(), rng.random::<f64>()];
            OnlineLearner::predict(&mut omkl, &x).unwrap();
            let rep = omkl.learn(rng.random()).unwrap();
            let bound: f64 = rep
                .normalized_weights
                .iter()
                .zip(&rep.per_kernel_losses)
                .map(|(w, l)| w * l)
                .sum();
            assert!(rep.combined_loss <= bound + 1e-9);
            assert!(omkl.support_sets().iter().all(|s| s.len() <= 4));
        }
    }

    #[test]
    fn omkl_rejects_bad_parameters() {
        let k = g1();
        let l = LossSpec::squared(0.0);
        assert!(Omkl::new(vec![], None, 0.1, 0.5, l).is_err());
        assert!(Omkl::new(vec![k], None, 0.0, 0.5, l).is_err());
        assert!(Omkl::new(vec![k], None, 0.1, 1.5, l).is_err());
        assert!(Omkl::new(
            vec![k, KernelSpec::gaussian(1.0, 3).unwrap()],
            None,
            0.1,
            0.5,
            l
        )
        .is_err());
    }
}

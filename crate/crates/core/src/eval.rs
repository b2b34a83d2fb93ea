//! Metrics, batch least-squares oracles and empirical regret.

use std::io::Write;
use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::data::StreamRecord;
use crate::error::{Error, Result};
use crate::featuremap::{dot, FeatureMap, KernelSpec};
use crate::learner::OnlineLearner;
use crate::losses::LossSpec;
use crate::raker::SlotReport;

/// Largest random-feature dimension (`2D`) the batch oracle will factor.
pub const MAX_ORACLE_DIM: usize = 2000;
/// Longest stream the exact kernel oracle accepts.
pub const MAX_EXACT_ORACLE_SLOTS: usize = 1000;

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::DimensionMismatch {
            expected: a,
            found: b,
        });
    }
    if a == 0 {
        return Err(Error::EmptyData("no predictions".into()));
    }
    Ok(())
}

/// `MSE(t) = (1/t) Σ_{τ≤t} (y_τ - ŷ_τ)²` for every `t`.
pub fn mse_curve(preds: &[f64], ys: &[f64]) -> Result<Vec<f64>> {
    check_lengths(preds.len(), ys.len())?;
    let mut sum = 0.0;
    Ok(preds
        .iter()
        .zip(ys)
        .enumerate()
        .map(|(i, (p, y))| {
            sum += (y - p) * (y - p);
            sum / (i + 1) as f64
        })
        .collect())
}

/// Whether `pred` misclassifies the `±1` label `y`. A zero prediction is
/// always an error.
pub fn is_mistake(pred: f64, y: f64) -> Result<bool> {
    if y != 1.0 && y != -1.0 {
        return Err(Error::InvalidLabel(y));
    }
    Ok(y * pred <= 0.0 || pred.is_nan())
}

/// Fraction of slots whose prediction sign disagrees with the label.
pub fn class_error(preds: &[f64], ys: &[f64]) -> Result<f64> {
    check_lengths(preds.len(), ys.len())?;
    let mut wrong = 0usize;
    for (&p, &y) in preds.iter().zip(ys) {
        wrong += is_mistake(p, y)? as usize;
    }
    Ok(wrong as f64 / preds.len() as f64)
}

/// Rows `z(x_t)ᵀ` of one feature map over a stream.
pub fn feature_matrix(map: &FeatureMap, xs: &[&[f64]]) -> Result<DMatrix<f64>> {
    let mut z = DMatrix::zeros(xs.len(), map.output_dim());
    let mut row = vec![0.0; map.output_dim()];
    for (i, x) in xs.iter().enumerate() {
        map.map_into(x, &mut row)?;
        z.row_mut(i).copy_from_slice(&row);
    }
    Ok(z)
}

/// Solve `(ZᵀZ + λT I) θ = Zᵀy`, where `T` is the number of rows.
pub fn solve_regularized_ls(z: &DMatrix<f64>, y: &[f64], lambda: f64) -> Result<Vec<f64>> {
    check_lengths(z.nrows(), y.len())?;
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::invalid(format!(
            "lambda must be non-negative, got {lambda}"
        )));
    }
    if z.ncols() > MAX_ORACLE_DIM {
        return Err(Error::invalid(format!(
            "oracle dimension {} exceeds {MAX_ORACLE_DIM}",
            z.ncols()
        )));
    }
    let t = z.nrows() as f64;
    let mut gram = z.tr_mul(z);
    for i in 0..gram.nrows() {
        gram[(i, i)] += lambda * t;
    }
    let rhs = z.tr_mul(&DVector::from_column_slice(y));
    let chol = Cholesky::new(gram).ok_or(Error::Singular)?;
    let theta = chol.solve(&rhs);
    if theta.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular);
    }
    Ok(theta.as_slice().to_vec())
}

/// Per-slot `(θᵀz_t - y_t)² + λ‖θ‖²`.
pub fn per_slot_ls_losses(z: &DMatrix<f64>, y: &[f64], theta: &[f64], lambda: f64) -> Vec<f64> {
    let reg = lambda * dot(theta, theta);
    (0..z.nrows())
        .map(|i| {
            let pred: f64 = z.row(i).iter().zip(theta).map(|(a, b)| a * b).sum();
            (pred - y[i]).powi(2) + reg
        })
        .collect()
}

/// Best fixed function per kernel in hindsight.
#[derive(Debug, Clone)]
pub struct BatchOracle {
    /// Per-kernel solution: `θ*_p` for the random-feature oracle, the
    /// expansion coefficients over the stream for the exact oracle.
    pub thetas: Vec<Vec<f64>>,
    /// Per-kernel cumulative regularized loss.
    pub losses: Vec<f64>,
    pub best_kernel: usize,
    /// Per-slot losses of the best kernel's solution.
    pub per_slot: Vec<f64>,
    /// Per-slot predictions of the best kernel's solution.
    pub predictions: Vec<f64>,
    pub lambda: f64,
}

impl BatchOracle {
    pub fn loss(&self) -> f64 {
        self.losses[self.best_kernel]
    }

    fn from_candidates(candidates: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)>, lambda: f64) -> Self {
        let losses: Vec<f64> = candidates.iter().map(|(_, l, _)| l.iter().sum()).collect();
        let best_kernel =
            losses
                .iter()
                .enumerate()
                .fold(0, |best, (i, &l)| if l < losses[best] { i } else { best });
        let mut thetas = Vec::with_capacity(candidates.len());
        let mut per_slot = Vec::new();
        let mut predictions = Vec::new();
        for (i, (theta, l, p)) in candidates.into_iter().enumerate() {
            if i == best_kernel {
                per_slot = l;
                predictions = p;
            }
            thetas.push(theta);
        }
        BatchOracle {
            thetas,
            losses,
            best_kernel,
            per_slot,
            predictions,
            lambda,
        }
    }
}

fn split_stream(records: &[StreamRecord]) -> Result<(Vec<&[f64]>, Vec<f64>)> {
    if records.is_empty() {
        return Err(Error::EmptyData("oracle needs a non-empty stream".into()));
    }
    Ok((
        records.iter().map(|r| r.x.as_slice()).collect(),
        records.iter().map(|r| r.y).collect(),
    ))
}

/// Per-kernel regularized least squares in random-feature space; the best
/// kernel minimizes the cumulative loss `Σ_t (θᵀz_t - y_t)² + λT‖θ‖²`.
pub fn batch_rf_oracle(
    records: &[StreamRecord],
    maps: &[Arc<FeatureMap>],
    loss: &LossSpec,
) -> Result<BatchOracle> {
    if loss.kind != crate::losses::LossKind::SquaredError {
        return Err(Error::Unsupported(
            "batch oracle requires squared-error loss".into(),
        ));
    }
    if maps.is_empty() {
        return Err(Error::invalid("kernel dictionary must not be empty"));
    }
    let (xs, ys) = split_stream(records)?;
    let candidates = maps
        .iter()
        .map(|m| {
            let z = feature_matrix(m, &xs)?;
            let theta = solve_regularized_ls(&z, &ys, loss.lambda)?;
            let preds = (&z * DVector::from_column_slice(&theta))
                .as_slice()
                .to_vec();
            let losses = per_slot_ls_losses(&z, &ys, &theta, loss.lambda);
            Ok((theta, losses, preds))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BatchOracle::from_candidates(candidates, loss.lambda))
}

/// Kernel ridge regression in the full RKHS of each kernel:
/// `α = (K + λT I)⁻¹ y`, per-slot loss `(f(x_t) - y_t)² + λ‖f‖²_H`.
pub fn batch_exact_oracle(
    records: &[StreamRecord],
    kernels: &[KernelSpec],
    lambda: f64,
) -> Result<BatchOracle> {
    let (xs, ys) = split_stream(records)?;
    if xs.len() > MAX_EXACT_ORACLE_SLOTS {
        return Err(Error::invalid(format!(
            "exact oracle is limited to {MAX_EXACT_ORACLE_SLOTS} slots"
        )));
    }
    if kernels.is_empty() {
        return Err(Error::invalid("kernel dictionary must not be empty"));
    }
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::invalid("exact oracle needs lambda > 0"));
    }
    let t = xs.len();
    let candidates = kernels
        .iter()
        .map(|k| {
            k.validate()?;
            let gram = DMatrix::from_fn(t, t, |i, j| k.eval_unchecked(xs[i], xs[j]));
            let mut a = gram.clone();
            for i in 0..t {
                a[(i, i)] += lambda * t as f64;
            }
            let alpha = Cholesky::new(a)
                .ok_or(Error::Singular)?
                .solve(&DVector::from_column_slice(&ys));
            let preds = &gram * &alpha;
            let norm_sq = alpha.dot(&preds);
            let losses = preds
                .iter()
                .zip(&ys)
                .map(|(p, y)| (p - y).powi(2) + lambda * norm_sq)
                .collect();
            Ok((alpha.as_slice().to_vec(), losses, preds.as_slice().to_vec()))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BatchOracle::from_candidates(candidates, lambda))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegretRow {
    pub t: u64,
    pub cum_algo_loss: f64,
    pub cum_oracle_loss: f64,
    pub regret: f64,
    pub regret_over_sqrt_t: f64,
}

/// Cumulative algorithm and comparator losses slot by slot.
#[derive(Debug, Clone, PartialEq)]
pub struct RegretTrace {
    pub rows: Vec<RegretRow>,
    /// `(t, regret(t)/√t)` at powers of two and at the final slot.
    pub checkpoints: Vec<(u64, f64)>,
}

impl RegretTrace {
    pub fn final_regret(&self) -> f64 {
        self.rows.last().map_or(0.0, |r| r.regret)
    }

    pub fn regret_at(&self, t: u64) -> Option<f64> {
        self.rows
            .get((t as usize).checked_sub(1)?)
            .map(|r| r.regret)
    }

    pub fn write_csv(&self, writer: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "t",
            "cum_algo_loss",
            "cum_oracle_loss",
            "regret",
            "regret_over_sqrt_t",
        ])?;
        for r in &self.rows {
            w.write_record([
                r.t.to_string(),
                r.cum_algo_loss.to_string(),
                r.cum_oracle_loss.to_string(),
                r.regret.to_string(),
                r.regret_over_sqrt_t.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Regret of an online run against a fixed comparator, given both per-slot
/// loss sequences over the same stream.
pub fn static_regret(algo_losses: &[f64], oracle_losses: &[f64]) -> Result<RegretTrace> {
    check_lengths(algo_losses.len(), oracle_losses.len())?;
    let mut rows = Vec::with_capacity(algo_losses.len());
    let (mut a, mut o) = (0.0, 0.0);
    for (i, (&la, &lo)) in algo_losses.iter().zip(oracle_losses).enumerate() {
        a += la;
        o += lo;
        let t = i as u64 + 1;
        let regret = a - o;
        rows.push(RegretRow {
            t,
            cum_algo_loss: a,
            cum_oracle_loss: o,
            regret,
            regret_over_sqrt_t: regret / (t as f64).sqrt(),
        });
    }
    let last = rows.len() as u64;
    let checkpoints = rows
        .iter()
        .filter(|r| r.t.is_power_of_two() || r.t == last)
        .map(|r| (r.t, r.regret_over_sqrt_t))
        .collect();
    Ok(RegretTrace { rows, checkpoints })
}

/// Regret against the best fixed random-feature function on each segment
/// between consecutive switch points (first slots of new segments, 1-based).
pub fn dynamic_regret_piecewise(
    algo_losses: &[f64],
    records: &[StreamRecord],
    maps: &[Arc<FeatureMap>],
    loss: &LossSpec,
    switch_points: &[u64],
) -> Result<f64> {
    check_lengths(algo_losses.len(), records.len())?;
    let t = records.len() as u64;
    let mut bounds = vec![1u64];
    for &s in switch_points {
        if s <= *bounds.last().expect("non-empty") || s > t {
            return Err(Error::invalid(format!(
                "switch points must increase strictly within (1, {t}]; got {s}"
            )));
        }
        bounds.push(s);
    }
    bounds.push(t + 1);
    let mut comparator = 0.0;
    for w in bounds.windows(2) {
        let seg = &records[(w[0] - 1) as usize..(w[1] - 1) as usize];
        comparator += batch_rf_oracle(seg, maps, loss)?.loss();
    }
    Ok(algo_losses.iter().sum::<f64>() - comparator)
}

/// Replays a fixed function, typically a batch oracle's best solution, as an
/// online learner. Its reported losses are the oracle's per-slot losses.
#[derive(Debug, Clone)]
pub struct OracleReplay {
    map: Arc<FeatureMap>,
    theta: Vec<f64>,
    lambda: f64,
    t: u64,
    pending: Option<f64>,
}

impl OracleReplay {
    pub fn new(map: Arc<FeatureMap>, theta: Vec<f64>, lambda: f64) -> Result<Self> {
        crate::error::check_dim(map.output_dim(), theta.len())?;
        Ok(OracleReplay {
            map,
            theta,
            lambda,
            t: 0,
            pending: None,
        })
    }

    /// Replay of the best kernel of a random-feature oracle built on `maps`.
    pub fn from_oracle(oracle: &BatchOracle, maps: &[Arc<FeatureMap>]) -> Result<Self> {
        let map = maps
            .get(oracle.best_kernel)
            .ok_or_else(|| Error::invalid("oracle kernel index out of range"))?;
        Self::new(
            map.clone(),
            oracle.thetas[oracle.best_kernel].clone(),
            oracle.lambda,
        )
    }
}

impl OnlineLearner for OracleReplay {
    fn name(&self) -> String {
        "oracle".into()
    }

    fn predict(&mut self, x: &[f64]) -> Result<f64> {
        let z = self.map.map(x)?;
        let pred = dot(&self.theta, z.values());
        self.pending = Some(pred);
        Ok(pred)
    }

    fn learn(&mut self, y: f64) -> Result<SlotReport> {
        let pred = self
            .pending
            .take()
            .ok_or_else(|| Error::invalid("learn called before predict"))?;
        let loss = (pred - y).powi(2) + self.lambda * dot(&self.theta, &self.theta);
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
        self.theta.len()
    }
}

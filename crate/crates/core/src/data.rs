//! Streams: synthetic generators, CSV ingestion and min-max scaling.

use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::baselines::SupportSet;
use crate::error::{Error, Result};
use crate::featuremap::KernelSpec;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    #[default]
    Regression,
    BinaryClassification,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StreamRecord {
    /// 1-based slot.
    pub t: u64,
    pub x: Vec<f64>,
    pub y: f64,
    pub task: Task,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub start: u64,
    pub end: u64,
    pub sigma_sq: f64,
}

/// Piecewise-constant Gaussian bandwidth over the slots of a stream.
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchingSchedule {
    pub segments: Vec<Segment>,
}

impl SwitchingSchedule {
    pub fn new(segments: Vec<Segment>) -> Result<Self> {
        let s = SwitchingSchedule { segments };
        s.validate()?;
        Ok(s)
    }

    fn validate(&self) -> Result<()> {
        let mut expected = 1;
        for seg in &self.segments {
            if seg.start != expected || seg.end < seg.start {
                return Err(Error::invalid(format!(
                    "schedule segments must be contiguous from slot 1; segment [{}, {}] breaks at slot {expected}",
                    seg.start, seg.end
                )));
            }
            if !(seg.sigma_sq.is_finite() && seg.sigma_sq > 0.0) {
                return Err(Error::invalid("segment bandwidth must be positive"));
            }
            expected = seg.end + 1;
        }
        if self.segments.is_empty() {
            return Err(Error::invalid("schedule has no segments"));
        }
        Ok(())
    }

    pub fn horizon(&self) -> u64 {
        self.segments.last().map_or(0, |s| s.end)
    }

    pub fn sigma_sq_at(&self, t: u64) -> Option<f64> {
        self.segments
            .iter()
            .find(|s| s.start <= t && t <= s.end)
            .map(|s| s.sigma_sq)
    }

    /// First slot of every segment after the first.
    pub fn switch_points(&self) -> Vec<u64> {
        self.segments.iter().skip(1).map(|s| s.start).collect()
    }

    fn from_table(rows: &[(u64, u64, f64)]) -> Self {
        SwitchingSchedule {
            segments: rows
                .iter()
                .map(|&(start, end, sigma_sq)| Segment {
                    start,
                    end,
                    sigma_sq,
                })
                .collect(),
        }
    }

    /// Four segments alternating σ² = 1 and σ² = 10 over 36000 slots.
    pub fn dataset1() -> Self {
        Self::from_table(&[
            (1, 8000, 1.0),
            (8001, 18000, 10.0),
            (18001, 26000, 1.0),
            (26001, 36000, 10.0),
        ])
    }

    /// Desk-scale variant: 3000 slots, one switch from σ² = 1 to σ² = 10 at
    /// slot 1501.
    pub fn dataset1_rescaled() -> Self {
        Self::from_table(&[(1, 1500, 1.0), (1501, 3000, 10.0)])
    }

    /// Ten segments over 6500 slots.
    pub fn dataset2() -> Self {
        Self::from_table(&[
            (1, 200, 0.01),
            (201, 1000, 1.0),
            (1001, 2000, 10.0),
            (2001, 2300, 0.01),
            (2301, 3000, 1.0),
            (3001, 3500, 10.0),
            (3501, 4300, 0.01),
            (4301, 5100, 1.0),
            (5101, 5900, 0.01),
            (5901, 6500, 0.1),
        ])
    }
}

/// Unnormalized switching stream: `x_t ~ N(0, I)` and
/// `y_t = Σ_{τ≤t} α_τ κ_τ(x_t, x_τ)` with `α_τ = 1 + σ_α e_τ` and `κ_τ` the
/// Gaussian kernel of the segment containing `τ`.
///
/// Draw order per slot: `d` normals for `x_t`, then one normal for `e_t`.
pub fn gen_switching_raw(
    schedule: &SwitchingSchedule,
    d: usize,
    horizon: u64,
    sigma_alpha: f64,
    seed: u64,
) -> Result<Vec<StreamRecord>> {
    schedule.validate()?;
    if horizon < 1 || d < 1 {
        return Err(Error::invalid("switching stream needs T ≥ 1 and d ≥ 1"));
    }
    if schedule.horizon() < horizon {
        return Err(Error::invalid(format!(
            "schedule covers {} slots, stream needs {horizon}",
            schedule.horizon()
        )));
    }
    if !(sigma_alpha.is_finite() && sigma_alpha >= 0.0) {
        return Err(Error::invalid("sigma_alpha must be non-negative"));
    }
    let mut rng = rng::data_rng(seed);
    let mut history: Vec<(Vec<f64>, f64, KernelSpec)> = Vec::with_capacity(horizon as usize);
    let mut out = Vec::with_capacity(horizon as usize);
    for t in 1..=horizon {
        let x: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let e: f64 = rng.sample(StandardNormal);
        let sigma_sq = schedule.sigma_sq_at(t).expect("validated schedule");
        let kernel = KernelSpec::gaussian(sigma_sq, d)?;
        history.push((x.clone(), 1.0 + sigma_alpha * e, kernel));
        let y = history
            .iter()
            .map(|(xt, alpha, k)| alpha * k.eval_unchecked(&x, xt))
            .sum();
        out.push(StreamRecord {
            t,
            x,
            y,
            task: Task::Regression,
        });
    }
    Ok(out)
}

/// [`gen_switching_raw`] followed by per-column min-max scaling of `x` and `y`.
pub fn gen_switching_stream(
    schedule: &SwitchingSchedule,
    d: usize,
    horizon: u64,
    sigma_alpha: f64,
    seed: u64,
) -> Result<Vec<StreamRecord>> {
    let mut records = gen_switching_raw(schedule, d, horizon, sigma_alpha, seed)?;
    MinMaxScaler::fit(&records).apply(&mut records);
    Ok(records)
}

/// Fixed random RKHS element behind a stationary stream, already rescaled so
/// that its values on the stream lie in `[0, 1]`.
#[derive(Debug, Clone)]
pub struct StationaryTarget {
    pub spec: KernelSpec,
    pub centers: SupportSet,
    pub offset: f64,
    pub scale: f64,
}

impl StationaryTarget {
    pub fn raw(&self, x: &[f64]) -> Result<f64> {
        self.centers.predict(&self.spec, x)
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        Ok((self.raw(x)? - self.offset) * self.scale)
    }
}

pub const STATIONARY_CENTERS: usize = 20;

/// Stationary regression stream `y_t = f(x_t) + noise` with
/// `x_t ~ U[0,1]^d` and `f` a sum of 20 kernel bumps with coefficients in
/// `[-1, 1]`, affinely rescaled to `[0, 1]` over the drawn inputs.
pub fn gen_stationary_stream(
    spec: KernelSpec,
    d: usize,
    horizon: u64,
    noise_std: f64,
    seed: u64,
) -> Result<(Vec<StreamRecord>, StationaryTarget)> {
    spec.validate()?;
    if spec.input_dim != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: spec.input_dim,
        });
    }
    if horizon < 1 {
        return Err(Error::invalid("stream horizon must be at least 1"));
    }
    if !(noise_std.is_finite() && noise_std >= 0.0) {
        return Err(Error::invalid("noise_std must be non-negative"));
    }
    let mut target_rng = rng::keyed(seed, rng::TARGET_STREAM);
    let mut centers = SupportSet::unbounded();
    for _ in 0..STATIONARY_CENTERS {
        let c: Vec<f64> = (0..d).map(|_| target_rng.random::<f64>()).collect();
        let a = target_rng.random_range(-1.0..=1.0);
        centers.push(&spec, c, a)?;
    }
    let mut rng = rng::data_rng(seed);
    let xs: Vec<Vec<f64>> = (0..horizon)
        .map(|_| (0..d).map(|_| rng.random::<f64>()).collect())
        .collect();
    let raw: Vec<f64> = xs
        .iter()
        .map(|x| centers.predict(&spec, x))
        .collect::<Result<_>>()?;
    let (lo, hi) = raw
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let scale = if hi > lo { 1.0 / (hi - lo) } else { 0.0 };
    let target = StationaryTarget {
        spec,
        centers,
        offset: lo,
        scale,
    };
    let records = xs
        .into_iter()
        .zip(raw)
        .enumerate()
        .map(|(i, (x, f))| {
            let noise: f64 = if noise_std > 0.0 {
                noise_std * rng.sample::<f64, _>(StandardNormal)
            } else {
                0.0
            };
            StreamRecord {
                t: i as u64 + 1,
                x,
                y: (f - lo) * scale + noise,
                task: Task::Regression,
            }
        })
        .collect();
    Ok((records, target))
}

/// Per-column `[min, max]` bounds. Constant columns map to 0.
#[derive(Debug, Clone, PartialEq)]
pub struct MinMaxScaler {
    pub x_bounds: Vec<(f64, f64)>,
    /// `None` leaves labels untouched (classification).
    pub y_bounds: Option<(f64, f64)>,
}

impl MinMaxScaler {
    pub fn fit(records: &[StreamRecord]) -> Self {
        let d = records.first().map_or(0, |r| r.x.len());
        let mut x_bounds = vec![(f64::INFINITY, f64::NEG_INFINITY); d];
        let mut y = (f64::INFINITY, f64::NEG_INFINITY);
        for r in records {
            for (b, &v) in x_bounds.iter_mut().zip(&r.x) {
                b.0 = b.0.min(v);
                b.1 = b.1.max(v);
            }
            y.0 = y.0.min(r.y);
            y.1 = y.1.max(r.y);
        }
        let regression = records.first().is_none_or(|r| r.task == Task::Regression);
        MinMaxScaler {
            x_bounds,
            y_bounds: regression.then_some(y),
        }
    }

    /// Scaler from user-supplied bounds, for streams whose range is not known
    /// from a preprocessing pass.
    pub fn with_bounds(x_bounds: Vec<(f64, f64)>, y_bounds: Option<(f64, f64)>) -> Result<Self> {
        let bad = |&(lo, hi): &(f64, f64)| !(lo.is_finite() && hi.is_finite() && lo <= hi);
        if x_bounds.iter().any(bad) || y_bounds.as_ref().is_some_and(bad) {
            return Err(Error::invalid("bounds must be finite with min ≤ max"));
        }
        Ok(MinMaxScaler { x_bounds, y_bounds })
    }

    pub fn scale(value: f64, (lo, hi): (f64, f64)) -> f64 {
        if hi > lo {
            (value - lo) / (hi - lo)
        } else {
            0.0
        }
    }

    pub fn apply_one(&self, r: &mut StreamRecord) {
        for (v, &b) in r.x.iter_mut().zip(&self.x_bounds) {
            *v = Self::scale(*v, b);
        }
        if let Some(b) = self.y_bounds {
            r.y = Self::scale(r.y, b);
        }
    }

    pub fn apply(&self, records: &mut [StreamRecord]) {
        records.iter_mut().for_each(|r| self.apply_one(r));
    }
}

/// Load a headered CSV stream. `feature_columns = None` takes every column
/// except the label, in file order. Row numbers in errors are 1-based data
/// rows (the header is row 0).
pub fn load_csv(
    path: impl AsRef<Path>,
    label_column: &str,
    feature_columns: Option<&[String]>,
    task: Task,
    normalize: bool,
) -> Result<Vec<StreamRecord>> {
    let file = std::fs::File::open(path)?;
    read_csv(file, label_column, feature_columns, task, normalize)
}

pub fn read_csv(
    reader: impl Read,
    label_column: &str,
    feature_columns: Option<&[String]>,
    task: Task,
    normalize: bool,
) -> Result<Vec<StreamRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    let headers: Vec<String> = rdr
        .headers()?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let label_idx = find(label_column)?;
    let feature_idx: Vec<usize> = match feature_columns {
        Some(cols) => cols.iter().map(|c| find(c)).collect::<Result<_>>()?,
        None => (0..headers.len()).filter(|&i| i != label_idx).collect(),
    };
    if feature_idx.is_empty() {
        return Err(Error::invalid("no feature columns selected"));
    }
    let parse = |row: usize, col: usize, rec: &csv::StringRecord| -> Result<f64> {
        let raw = rec.get(col).unwrap_or("").trim();
        raw.parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| Error::NonNumeric {
                row,
                column: headers[col].clone(),
                value: raw.to_string(),
            })
    };
    let mut records = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        let x = feature_idx
            .iter()
            .map(|&c| parse(row, c, &rec))
            .collect::<Result<Vec<_>>>()?;
        let y = parse(row, label_idx, &rec)?;
        if task == Task::BinaryClassification && y != 1.0 && y != -1.0 {
            return Err(Error::NonNumeric {
                row,
                column: label_column.to_string(),
                value: format!("{y} (expected -1 or 1)"),
            });
        }
        records.push(StreamRecord {
            t: row as u64,
            x,
            y,
            task,
        });
    }
    if records.is_empty() {
        return Err(Error::EmptyData("CSV file has no data rows".into()));
    }
    if normalize {
        MinMaxScaler::fit(&records).apply(&mut records);
    }
    Ok(records)
}

/// Write records as `t,x_1..x_d,y`.
pub fn write_csv(records: &[StreamRecord], writer: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let d = records.first().map_or(0, |r| r.x.len());
    let mut header = vec!["t".to_string()];
    header.extend((1..=d).map(|i| format!("x_{i}")));
    header.push("y".into());
    w.write_record(&header)?;
    for r in records {
        let mut row = vec![r.t.to_string()];
        row.extend(r.x.iter().map(|v| v.to_string()));
        row.push(r.y.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

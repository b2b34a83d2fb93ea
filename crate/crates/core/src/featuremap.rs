//! Shift-invariant kernels and their random Fourier feature maps.
//!
//! A kernel `κ(x, x') = k(x - x')` with `k(0) = 1` is the characteristic
//! function of a probability density over frequencies. Drawing `D`
//! frequencies `v_i` from that density and mapping
//!
//! ```text
//! z(x) = [sin(v_1·x), .., sin(v_D·x), cos(v_1·x), .., cos(v_D·x)] / √D
//! ```
//!
//! gives an unbiased estimate `z(x)·z(x') ≈ κ(x, x')`. The orthogonal
//! variant (ORF) replaces i.i.d. Gaussian directions by blocks of orthonormal
//! rows with χ-distributed lengths, which keeps the estimator unbiased and
//! lowers its variance.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Cauchy, Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::rng::{self, StreamRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelFamily {
    /// `exp(-‖δ‖² / 2σ²)`; `bandwidth` is σ².
    Gaussian,
    /// `exp(-‖δ‖₁ / s)`; `bandwidth` is the scale `s`.
    Laplacian,
    /// `∏ 1 / (1 + (δ_i / s)²)`; `bandwidth` is the scale `s`.
    Cauchy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// I.i.d. spectral samples.
    Rf,
    /// Orthogonal random features (Gaussian kernels only).
    #[default]
    Orf,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub bandwidth: f64,
    pub input_dim: usize,
}

impl KernelSpec {
    pub fn new(family: KernelFamily, bandwidth: f64, input_dim: usize) -> Result<Self> {
        let spec = KernelSpec {
            family,
            bandwidth,
            input_dim,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn gaussian(sigma_sq: f64, input_dim: usize) -> Result<Self> {
        Self::new(KernelFamily::Gaussian, sigma_sq, input_dim)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.bandwidth.is_finite() && self.bandwidth > 0.0) {
            return Err(Error::invalid(format!(
                "kernel bandwidth must be positive, got {}",
                self.bandwidth
            )));
        }
        if self.input_dim == 0 {
            return Err(Error::invalid("kernel input dimension must be at least 1"));
        }
        Ok(())
    }

    /// Exact kernel value `κ(x - x2)`, in `[0, 1]`.
    pub fn eval(&self, x: &[f64], x2: &[f64]) -> Result<f64> {
        check_dim(self.input_dim, x.len())?;
        check_dim(self.input_dim, x2.len())?;
        Ok(self.eval_unchecked(x, x2))
    }

    pub(crate) fn eval_unchecked(&self, x: &[f64], x2: &[f64]) -> f64 {
        let diffs = x.iter().zip(x2).map(|(a, b)| a - b);
        match self.family {
            KernelFamily::Gaussian => {
                let sq: f64 = diffs.map(|d| d * d).sum();
                (-sq / (2.0 * self.bandwidth)).exp()
            }
            KernelFamily::Laplacian => {
                let l1: f64 = diffs.map(f64::abs).sum();
                (-l1 / self.bandwidth).exp()
            }
            KernelFamily::Cauchy => diffs
                .map(|d| {
                    let u = d / self.bandwidth;
                    1.0 / (1.0 + u * u)
                })
                .product(),
        }
    }

    /// `E‖v‖²` under the spectral density. Infinite for the Laplacian kernel,
    /// whose frequencies are Cauchy distributed.
    pub fn spectral_second_moment(&self) -> f64 {
        let d = self.input_dim as f64;
        match self.family {
            KernelFamily::Gaussian => d / self.bandwidth,
            KernelFamily::Laplacian => f64::INFINITY,
            // Laplace(0, 1/s) has variance 2/s² per coordinate.
            KernelFamily::Cauchy => 2.0 * d / (self.bandwidth * self.bandwidth),
        }
    }
}

/// Immutable random feature map for one kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    spec: KernelSpec,
    num_features: usize,
    /// Row-major `D x d`.
    spectral: Vec<f64>,
    variant: Variant,
    seed: u64,
    stream: u64,
}

impl FeatureMap {
    /// Sample a feature map from stream 0 of `seed`.
    pub fn sample(
        spec: KernelSpec,
        num_features: usize,
        variant: Variant,
        seed: u64,
    ) -> Result<Self> {
        Self::sample_keyed(spec, num_features, variant, seed, 0)
    }

    /// Sample a feature map from the random stream `(seed, stream)`. Learners
    /// use the kernel index as the stream so each kernel's map can be
    /// regenerated independently.
    pub fn sample_keyed(
        spec: KernelSpec,
        num_features: usize,
        variant: Variant,
        seed: u64,
        stream: u64,
    ) -> Result<Self> {
        spec.validate()?;
        if num_features == 0 {
            return Err(Error::invalid("number of random features must be positive"));
        }
        let d = spec.input_dim;
        let mut rng = rng::keyed(seed, stream);
        let spectral = match variant {
            Variant::Rf => sample_iid(&spec, num_features, &mut rng),
            Variant::Orf => {
                if spec.family != KernelFamily::Gaussian {
                    return Err(Error::Unsupported(format!(
                        "orthogonal random features require a Gaussian kernel, got {:?}",
                        spec.family
                    )));
                }
                if !num_features.is_multiple_of(d) {
                    return Err(Error::invalid(format!(
                        "orthogonal random features need D to be a multiple of d (D = {num_features}, d = {d})"
                    )));
                }
                sample_orthogonal(&spec, num_features, &mut rng)
            }
        };
        Ok(FeatureMap {
            spec,
            num_features,
            spectral,
            variant,
            seed,
            stream,
        })
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn num_features(&self) -> usize {
        self.num_features
    }

    pub fn input_dim(&self) -> usize {
        self.spec.input_dim
    }

    /// Length of a feature vector, `2D`.
    pub fn output_dim(&self) -> usize {
        2 * self.num_features
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    pub fn spectral_row(&self, i: usize) -> &[f64] {
        let d = self.spec.input_dim;
        &self.spectral[i * d..(i + 1) * d]
    }

    pub fn spectral_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.spectral.chunks_exact(self.spec.input_dim)
    }

    pub fn map(&self, x: &[f64]) -> Result<FeatureVector> {
        let mut out = vec![0.0; self.output_dim()];
        self.map_into(x, &mut out)?;
        Ok(FeatureVector(out))
    }

    /// Write `z(x)` into `out`, which must have length `2D`.
    pub fn map_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        check_dim(self.spec.input_dim, x.len())?;
        check_dim(self.output_dim(), out.len())?;
        let scale = 1.0 / (self.num_features as f64).sqrt();
        let (sines, cosines) = out.split_at_mut(self.num_features);
        for ((row, s), c) in self.spectral_rows().zip(sines).zip(cosines) {
            let phase: f64 = row.iter().zip(x).map(|(v, xi)| v * xi).sum();
            let (sin, cos) = phase.sin_cos();
            *s = sin * scale;
            *c = cos * scale;
        }
        Ok(())
    }

    /// Kernel estimate `z(x)·z(x2)`.
    pub fn approx_eval(&self, x: &[f64], x2: &[f64]) -> Result<f64> {
        let a = self.map(x)?;
        let b = self.map(x2)?;
        Ok(a.dot(&b))
    }

    /// Number of `f64` values held by the map.
    pub fn stored_values(&self) -> usize {
        self.spectral.len()
    }
}

fn sample_iid(spec: &KernelSpec, num_features: usize, rng: &mut StreamRng) -> Vec<f64> {
    let n = num_features * spec.input_dim;
    match spec.family {
        KernelFamily::Gaussian => {
            let inv_sigma = 1.0 / spec.bandwidth.sqrt();
            (0..n)
                .map(|_| {
                    let g: f64 = StandardNormal.sample(rng);
                    g * inv_sigma
                })
                .collect()
        }
        KernelFamily::Laplacian => {
            let cauchy = Cauchy::new(0.0, 1.0 / spec.bandwidth).expect("positive scale");
            (0..n).map(|_| cauchy.sample(rng)).collect()
        }
        KernelFamily::Cauchy => {
            // difference of two unit exponentials is Laplace(0, 1)
            let scale = 1.0 / spec.bandwidth;
            (0..n)
                .map(|_| {
                    let a: f64 = Exp1.sample(rng);
                    let b: f64 = Exp1.sample(rng);
                    (a - b) * scale
                })
                .collect()
        }
    }
}

fn sample_orthogonal(spec: &KernelSpec, num_features: usize, rng: &mut StreamRng) -> Vec<f64> {
    let d = spec.input_dim;
    let inv_sigma = 1.0 / spec.bandwidth.sqrt();
    let mut out = Vec::with_capacity(num_features * d);
    for _ in 0..num_features / d {
        let gaussian = DMatrix::<f64>::from_fn(d, d, |_, _| rng.sample(StandardNormal));
        let q = gaussian.qr().q();
        for i in 0..d {
            let length = chi_sample(d, rng);
            out.extend(q.row(i).iter().map(|v| v * length * inv_sigma));
        }
    }
    out
}

/// χ with `dof` degrees of freedom, as the norm of a standard normal vector.
fn chi_sample(dof: usize, rng: &mut StreamRng) -> f64 {
    (0..dof)
        .map(|_| {
            let g: f64 = rng.sample(StandardNormal);
            g * g
        })
        .sum::<f64>()
        .sqrt()
}

/// A `2D`-dimensional random feature vector of unit Euclidean norm.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector(pub Vec<f64>);

impl FeatureVector {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn dot(&self, other: &FeatureVector) -> f64 {
        dot(&self.0, &other.0)
    }

    pub fn norm(&self) -> f64 {
        dot(&self.0, &self.0).sqrt()
    }
}

impl AsRef<[f64]> for FeatureVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

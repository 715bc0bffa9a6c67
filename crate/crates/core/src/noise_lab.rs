//! Seeded noise generators: Gaussian mixtures, plain Gaussians and symmetric
//! alpha-stable variates.
//!
//! Every sampler is a pure function of its spec, the draw count and a
//! [`RandomStream`]. A stream is a ChaCha20 generator keyed by the seed with
//! the stream id selecting an independent keystream, so the value of draw `i`
//! depends only on `(seed, stream_id, i)`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::distr::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, psd_sqrt, sym_det};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RandomStream {
    pub seed: u64,
    pub stream_id: u64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl RandomStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self { seed, stream_id }
    }

    pub fn rng(&self) -> ChaCha20Rng {
        let mut rng = ChaCha20Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng
    }

    /// Child stream for one purpose within a run (process noise, measurement noise, ...).
    pub fn substream(&self, tag: u64) -> Self {
        Self {
            seed: self.seed,
            stream_id: splitmix64(self.stream_id ^ splitmix64(tag.wrapping_add(1))),
        }
    }

    /// A 64-bit seed derived from this stream, for consumers that take a bare seed.
    pub fn derived_seed(&self) -> u64 {
        splitmix64(self.seed ^ splitmix64(self.stream_id))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureNoiseSpec {
    /// Probability of drawing from the small (nominal) component.
    pub p_gauss: f64,
    pub cov_small: DMatrix<f64>,
    pub cov_big: DMatrix<f64>,
    pub mean: DVector<f64>,
}

impl MixtureNoiseSpec {
    /// Zero-mean isotropic mixture `p·N(0, small·I) + (1-p)·N(0, big·I)`.
    pub fn isotropic(dim: usize, p_gauss: f64, small_var: f64, big_var: f64) -> Self {
        Self {
            p_gauss,
            cov_small: DMatrix::from_diagonal_element(dim, dim, small_var),
            cov_big: DMatrix::from_diagonal_element(dim, dim, big_var),
            mean: DVector::zeros(dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p_gauss) {
            return Err(Error::invalid(
                "p_gauss",
                format!("must lie in [0, 1], got {}", self.p_gauss),
            ));
        }
        let m = self.dim();
        for (name, c) in [("cov_small", &self.cov_small), ("cov_big", &self.cov_big)] {
            if !linalg::is_square(c, m) {
                return Err(Error::dims(name, m, c.nrows()));
            }
            if !linalg::is_psd(c, linalg::PSD_TOL) {
                return Err(Error::invalid(
                    name,
                    "must be symmetric positive semidefinite",
                ));
            }
        }
        if sym_det(&self.cov_small) > sym_det(&self.cov_big) * (1.0 + 1e-12) {
            return Err(Error::invalid(
                "cov_small",
                "determinant exceeds that of cov_big",
            ));
        }
        Ok(())
    }

    /// Overall covariance by the law of total covariance (equal component means).
    pub fn total_covariance(&self) -> DMatrix<f64> {
        &self.cov_small * self.p_gauss + &self.cov_big * (1.0 - self.p_gauss)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaStableSpec {
    pub alpha: f64,
    /// Skewness; only the symmetric case `beta = 0` is supported.
    pub beta: f64,
    pub scale: f64,
    pub location: f64,
}

impl AlphaStableSpec {
    pub fn symmetric(alpha: f64, scale: f64) -> Self {
        Self {
            alpha,
            beta: 0.0,
            scale,
            location: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 2.0) {
            return Err(Error::ContractViolation(format!(
                "alpha must lie in (0, 2], got {}",
                self.alpha
            )));
        }
        if self.beta != 0.0 {
            return Err(Error::ContractViolation(
                "only symmetric (beta = 0) stable noise is supported".into(),
            ));
        }
        if !(self.scale > 0.0) || !self.scale.is_finite() {
            return Err(Error::ContractViolation(format!(
                "scale must be positive, got {}",
                self.scale
            )));
        }
        if !self.location.is_finite() {
            return Err(Error::ContractViolation("location must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NoiseComponent {
    Small,
    Big,
}

/// Mixture draws with the generating component of each.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureDraws {
    pub samples: Vec<DVector<f64>>,
    /// Ground-truth labels for validation only.
    pub labels: Vec<NoiseComponent>,
}

fn standard_normal_vector(rng: &mut ChaCha20Rng, dim: usize) -> DVector<f64> {
    DVector::from_fn(dim, |_, _| rng.sample(StandardNormal))
}

pub fn sample_mixture(
    spec: &MixtureNoiseSpec,
    count: usize,
    stream: RandomStream,
) -> Result<MixtureDraws> {
    spec.validate()?;
    let m = spec.dim();
    let root_small = psd_sqrt(&spec.cov_small).expect("validated PSD");
    let root_big = psd_sqrt(&spec.cov_big).expect("validated PSD");
    let mut rng = stream.rng();
    let mut samples = Vec::with_capacity(count);
    let mut labels = Vec::with_capacity(count);
    for _ in 0..count {
        let u: f64 = rng.random();
        let (label, root) = if u < spec.p_gauss {
            (NoiseComponent::Small, &root_small)
        } else {
            (NoiseComponent::Big, &root_big)
        };
        let e = standard_normal_vector(&mut rng, m);
        samples.push(&spec.mean + root * e);
        labels.push(label);
    }
    Ok(MixtureDraws { samples, labels })
}

pub fn sample_gaussian(
    cov: &DMatrix<f64>,
    count: usize,
    stream: RandomStream,
) -> Result<Vec<DVector<f64>>> {
    let root = psd_sqrt(cov).ok_or_else(|| {
        Error::ContractViolation("covariance must be symmetric positive semidefinite".into())
    })?;
    let mut rng = stream.rng();
    Ok((0..count)
        .map(|_| &root * standard_normal_vector(&mut rng, cov.nrows()))
        .collect())
}

/// Chambers–Mallows–Stuck draw for the symmetric stable law with unit scale.
fn cms_symmetric(alpha: f64, rng: &mut ChaCha20Rng) -> f64 {
    let v = PI * (rng.sample::<f64, _>(Open01) - 0.5);
    let w = -rng.sample::<f64, _>(Open01).ln();
    if alpha == 1.0 {
        return v.tan();
    }
    let a = (alpha * v).sin() / v.cos().powf(1.0 / alpha);
    let b = (((1.0 - alpha) * v).cos() / w).powf((1.0 - alpha) / alpha);
    a * b
}

pub fn sample_alpha_stable(
    spec: &AlphaStableSpec,
    count: usize,
    stream: RandomStream,
) -> Result<Vec<f64>> {
    spec.validate()?;
    let mut rng = stream.rng();
    Ok((0..count)
        .map(|_| spec.location + spec.scale * cms_symmetric(spec.alpha, &mut rng))
        .collect())
}

/// Vectors with independent, identically distributed stable coordinates.
pub fn sample_alpha_stable_vectors(
    spec: &AlphaStableSpec,
    dim: usize,
    count: usize,
    stream: RandomStream,
) -> Result<Vec<DVector<f64>>> {
    let flat = sample_alpha_stable(spec, dim * count, stream)?;
    Ok(flat
        .chunks(dim.max(1))
        .take(count)
        .map(DVector::from_column_slice)
        .collect())
}

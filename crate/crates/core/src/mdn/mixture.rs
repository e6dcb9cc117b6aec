use std::f64::consts::PI;

use nalgebra::{Matrix6, Vector6};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::MdnError;
use crate::geometry::RelativePose6;
use crate::seeding::rng_for;

pub const SIGMA_LOG_CLAMP: f64 = 10.0;

/// Normalizing constant used by the component density.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalizer {
    /// Proper isotropic 6-D Gaussian: `(σ√(2π))^-6`.
    #[default]
    SixDim,
    /// One-dimensional constant `(σ√(2π))^-1` applied to the 6-D exponent.
    OneDim,
}

impl Normalizer {
    /// Power of `σ√(2π)` in the denominator.
    pub fn dims(&self) -> f64 {
        match self {
            Normalizer::SixDim => 6.0,
            Normalizer::OneDim => 1.0,
        }
    }
}

/// Isotropic Gaussian mixture over a 6-DoF relative pose.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureParams {
    pub alphas: Vec<f64>,
    pub mus: Vec<[f64; 6]>,
    pub sigmas: Vec<f64>,
}

impl MixtureParams {
    pub fn new(alphas: Vec<f64>, mus: Vec<[f64; 6]>, sigmas: Vec<f64>) -> Result<Self, MdnError> {
        let p = Self { alphas, mus, sigmas };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), MdnError> {
        let m = self.alphas.len();
        if m == 0 || self.mus.len() != m || self.sigmas.len() != m {
            return Err(MdnError::Invalid(format!(
                "component counts differ: {} alphas, {} means, {} sigmas",
                m,
                self.mus.len(),
                self.sigmas.len()
            )));
        }
        if self.alphas.iter().any(|a| !(*a >= 0.0)) || (self.alphas.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(MdnError::Invalid("alphas are not on the simplex".into()));
        }
        if self.sigmas.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(MdnError::Invalid("sigmas must be positive and finite".into()));
        }
        if self.mus.iter().flatten().any(|v| !v.is_finite()) {
            return Err(MdnError::Invalid("non-finite mean".into()));
        }
        Ok(())
    }

    pub fn components(&self) -> usize {
        self.alphas.len()
    }

    /// `[alphas | mus row-major | sigmas]`, width 8M.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = self.alphas.clone();
        out.extend(self.mus.iter().flatten());
        out.extend(&self.sigmas);
        out
    }

    pub fn from_flat(flat: &[f64]) -> Result<Self, MdnError> {
        if flat.is_empty() || flat.len() % 8 != 0 {
            return Err(MdnError::Invalid(format!("flat width {} is not 8M", flat.len())));
        }
        let m = flat.len() / 8;
        let mus = flat[m..7 * m]
            .chunks(6)
            .map(|c| c.try_into().expect("chunk of 6"))
            .collect();
        Self::new(flat[..m].to_vec(), mus, flat[7 * m..].to_vec())
    }
}

/// Softmax over the α block, identity means, `exp(clamp(raw, ±10))` spreads.
pub fn activate_head(raw: &[f64]) -> Result<MixtureParams, MdnError> {
    if raw.is_empty() || raw.len() % 8 != 0 {
        return Err(MdnError::Invalid(format!("head width {} is not 8M", raw.len())));
    }
    if raw.iter().any(|v| !v.is_finite()) {
        return Err(MdnError::Invalid("non-finite head output".into()));
    }
    let m = raw.len() / 8;
    let alphas = softmax(&raw[..m]);
    let mus = raw[m..7 * m]
        .chunks(6)
        .map(|c| c.try_into().expect("chunk of 6"))
        .collect();
    let sigmas = raw[7 * m..]
        .iter()
        .map(|s| s.clamp(-SIGMA_LOG_CLAMP, SIGMA_LOG_CLAMP).exp())
        .collect();
    MixtureParams::new(alphas, mus, sigmas)
}

pub(crate) fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = e.iter().sum();
    let mut p: Vec<f64> = e.iter().map(|v| v / total).collect();
    // Push the rounding residue into the largest entry so the sum is 1 to the last ulp.
    let residue = 1.0 - p.iter().sum::<f64>();
    let imax = (0..p.len()).max_by(|&a, &b| p[a].total_cmp(&p[b])).unwrap_or(0);
    p[imax] += residue;
    p
}

pub(crate) fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

fn squared_distance(y: &[f64; 6], mu: &[f64; 6]) -> f64 {
    y.iter().zip(mu).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// `log N(y; mu, σ² I6)`.
pub fn component_logdensity(y: &RelativePose6, mu: &[f64; 6], sigma: f64) -> f64 {
    component_logdensity_with(&y.to_array(), mu, sigma, Normalizer::SixDim)
}

pub fn component_logdensity_with(y: &[f64; 6], mu: &[f64; 6], sigma: f64, norm: Normalizer) -> f64 {
    let d = norm.dims();
    -d * sigma.ln() - 0.5 * d * (2.0 * PI).ln() - squared_distance(y, mu) / (2.0 * sigma * sigma)
}

pub fn mixture_logdensity(y: &RelativePose6, params: &MixtureParams) -> f64 {
    mixture_logdensity_with(&y.to_array(), params, Normalizer::SixDim)
}

pub fn mixture_logdensity_with(y: &[f64; 6], params: &MixtureParams, norm: Normalizer) -> f64 {
    let terms: Vec<f64> = params
        .alphas
        .iter()
        .zip(&params.mus)
        .zip(&params.sigmas)
        .map(|((a, mu), s)| a.ln() + component_logdensity_with(y, mu, *s, norm))
        .collect();
    log_sum_exp(&terms)
}

pub fn mixture_mean_array(params: &MixtureParams) -> [f64; 6] {
    let mut mean = [0.0; 6];
    for (a, mu) in params.alphas.iter().zip(&params.mus) {
        for k in 0..6 {
            mean[k] += a * mu[k];
        }
    }
    mean
}

/// `Σ α_i μ_i`. Angles are not wrapped.
pub fn mixture_mean(params: &MixtureParams) -> RelativePose6 {
    let m = mixture_mean_array(params);
    RelativePose6 {
        rho: nalgebra::Vector3::new(m[0], m[1], m[2]),
        phi: nalgebra::Vector3::new(m[3], m[4], m[5]),
    }
}

/// Law of total variance: `Σ α_i (σ_i² I + μ_i μ_iᵀ) − ȳ ȳᵀ`.
pub fn mixture_covariance(params: &MixtureParams) -> Matrix6<f64> {
    let mean = Vector6::from(mixture_mean_array(params));
    let mut cov = Matrix6::zeros();
    for ((a, mu), s) in params.alphas.iter().zip(&params.mus).zip(&params.sigmas) {
        // Centre on the mixture mean to avoid cancellation between large outer products.
        let d = Vector6::from(*mu) - mean;
        cov += *a * (Matrix6::identity() * (s * s) + d * d.transpose());
    }
    (cov + cov.transpose()) * 0.5
}

pub fn sample_with<R: Rng + ?Sized>(params: &MixtureParams, rng: &mut R) -> [f64; 6] {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut pick = params.components() - 1;
    for (i, a) in params.alphas.iter().enumerate() {
        acc += a;
        if u < acc {
            pick = i;
            break;
        }
    }
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let mut y = params.mus[pick];
    for v in &mut y {
        *v += params.sigmas[pick] * unit.sample(rng);
    }
    y
}

/// One draw: component from α, then an isotropic Gaussian around its mean.
pub fn sample(params: &MixtureParams, seed: u64) -> RelativePose6 {
    let y = sample_with(params, &mut rng_for(seed, 0x6d64_6e73));
    RelativePose6 {
        rho: nalgebra::Vector3::new(y[0], y[1], y[2]),
        phi: nalgebra::Vector3::new(y[3], y[4], y[5]),
    }
}

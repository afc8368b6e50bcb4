//! Synthetic data generation for the Bayesian factorization model.
//!
//! The observation is Y = H_g·S_g + V_g with Gaussian rows of H_g (covariance
//! either fixed or drawn from an inverse Wishart prior), latent columns of
//! S_g uniform over the chosen domain, and i.i.d. Gaussian noise.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::domains::DomainSpec;
use crate::error::{Error, Result};
use crate::linalg;

/// How the row covariance of H_g is chosen during generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HRowCovarianceMode {
    /// Σ_h = I. Reproduces the reference experiment, where rows are drawn
    /// from N(0, I) regardless of the prior scale used by the estimator.
    Identity,
    /// Σ_h ~ IW(Ψ, φ), the model's own prior.
    SampleInverseWishart,
    /// A caller-supplied covariance.
    Explicit(Array2<f64>),
}

/// Generative parameters of the data model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Input dimension M.
    pub m: usize,
    /// Latent dimension r.
    pub r: usize,
    /// Number of observed columns N.
    pub n: usize,
    /// Noise variance σ_v².
    pub sigma_v2: f64,
    /// Inverse-Wishart scale matrix Ψ (r×r, SPD).
    pub psi: Array2<f64>,
    /// Inverse-Wishart degrees of freedom φ.
    pub phi: f64,
    /// Domain of the latent columns.
    pub domain: DomainSpec,
    /// Row-covariance mode for H_g.
    pub h_row_covariance_mode: HRowCovarianceMode,
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        if self.r == 0 || self.m == 0 || self.n == 0 {
            return Err(Error::invalid("dimensions must be positive"));
        }
        if self.r > self.m.min(self.n) {
            return Err(Error::invalid(format!(
                "rank assumption violated: r={} > min(M={}, N={})",
                self.r, self.m, self.n
            )));
        }
        if !(self.sigma_v2 >= 0.0) {
            return Err(Error::invalid("sigma_v2 must be nonnegative"));
        }
        if self.domain.dim != self.r {
            return Err(Error::invalid(format!(
                "domain dimension {} != latent dimension {}",
                self.domain.dim, self.r
            )));
        }
        if self.psi.nrows() != self.r || self.psi.ncols() != self.r {
            return Err(Error::invalid(format!(
                "Psi is {}x{}, expected {}x{}",
                self.psi.nrows(),
                self.psi.ncols(),
                self.r,
                self.r
            )));
        }
        // SPD check: Cholesky must succeed.
        linalg::cholesky(self.psi.view())
            .map_err(|e| Error::invalid(format!("Psi is not SPD: {e}")))?;
        if matches!(self.h_row_covariance_mode, HRowCovarianceMode::SampleInverseWishart)
            && !(self.phi > self.r as f64 - 1.0)
        {
            return Err(Error::invalid(format!(
                "phi={} must exceed r-1={} for inverse-Wishart sampling",
                self.phi,
                self.r as f64 - 1.0
            )));
        }
        if let HRowCovarianceMode::Explicit(sigma) = &self.h_row_covariance_mode {
            if sigma.nrows() != self.r || sigma.ncols() != self.r {
                return Err(Error::invalid("explicit Sigma_h has wrong shape"));
            }
            linalg::cholesky(sigma.view())
                .map_err(|e| Error::invalid(format!("explicit Sigma_h is not SPD: {e}")))?;
        }
        Ok(())
    }
}

/// One draw from the generative model, carrying the ground truth alongside
/// the observation.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedData {
    pub y: Array2<f64>,
    pub h_g: Array2<f64>,
    pub s_g: Array2<f64>,
    pub sigma_h: Array2<f64>,
    pub v_g: Array2<f64>,
}

/// Ψ = ρ·(φ+r+1)·I, the scale matrix that puts the prior mode at ρ·I.
pub fn psi_from_rho(rho: f64, phi: f64, r: usize) -> Result<Array2<f64>> {
    if !(rho > 0.0) {
        return Err(Error::invalid(format!("rho must be positive, got {rho}")));
    }
    let scale = phi + r as f64 + 1.0;
    if !(scale > 0.0) {
        return Err(Error::invalid(format!(
            "phi + r + 1 = {scale} must be positive for an SPD scale matrix"
        )));
    }
    Ok(Array2::<f64>::eye(r) * (rho * scale))
}

/// One draw Σ ~ IW(Ψ, φ) by the Bartlett decomposition: W ~ Wishart(Ψ⁻¹, φ)
/// is built from its triangular factor, then inverted through that factor.
pub fn sample_inverse_wishart<R: Rng + ?Sized>(
    psi: &Array2<f64>,
    phi: f64,
    rng: &mut R,
) -> Result<Array2<f64>> {
    let r = psi.nrows();
    if psi.ncols() != r {
        return Err(Error::shape(format!("Psi is {}x{}", psi.nrows(), psi.ncols())));
    }
    if !(phi > r as f64 - 1.0) {
        return Err(Error::invalid(format!(
            "degrees of freedom phi={} must exceed r-1={}",
            phi,
            r as f64 - 1.0
        )));
    }
    let psi_chol = linalg::cholesky(psi.view())
        .map_err(|e| Error::invalid(format!("Psi is not SPD: {e}")))?;
    let psi_inv = linalg::cholesky_solve(&psi_chol, Array2::<f64>::eye(r).view())?;
    let l_v = linalg::cholesky(linalg::symmetrize(&psi_inv).view())?;

    // Bartlett factor: lower triangular, chi-squared diagonal.
    let mut a = Array2::<f64>::zeros((r, r));
    for i in 0..r {
        let dof = phi - i as f64;
        let chi = ChiSquared::new(dof)
            .map_err(|e| Error::invalid(format!("chi-squared dof {dof}: {e}")))?;
        a[[i, i]] = rng.sample::<f64, _>(chi).sqrt();
        for j in 0..i {
            a[[i, j]] = rng.sample::<f64, _>(StandardNormal);
        }
    }

    // W = (L_v A)(L_v A)ᵀ, so C = L_v A is its Cholesky factor and
    // Σ = W⁻¹ = C⁻ᵀ C⁻¹.
    let c = l_v.dot(&a);
    let c_inv = linalg::lower_triangular_inverse(&c)?;
    let sigma = c_inv.t().dot(&c_inv);
    Ok(linalg::symmetrize(&sigma))
}

/// Draws one dataset from the model. Deterministic given the rng state; the
/// four blocks (Σ_h, H_g, S_g, V_g) use independent derived streams so a
/// change of covariance mode does not perturb the other blocks.
pub fn generate<R: Rng + ?Sized>(p: &ModelParams, rng: &mut R) -> Result<GeneratedData> {
    p.validate()?;

    let seed_sigma = rng.next_u64();
    let seed_h = rng.next_u64();
    let seed_s = rng.next_u64();
    let seed_v = rng.next_u64();

    let sigma_h = match &p.h_row_covariance_mode {
        HRowCovarianceMode::Identity => Array2::<f64>::eye(p.r),
        HRowCovarianceMode::SampleInverseWishart => {
            let mut rs = ChaCha8Rng::seed_from_u64(seed_sigma);
            sample_inverse_wishart(&p.psi, p.phi, &mut rs)?
        }
        HRowCovarianceMode::Explicit(s) => s.clone(),
    };

    // rows of H_g: hᵢ = L z with Σ_h = L Lᵀ
    let l = linalg::cholesky(sigma_h.view())?;
    let mut rh = ChaCha8Rng::seed_from_u64(seed_h);
    let z = Array2::from_shape_vec(
        (p.m, p.r),
        (0..p.m * p.r)
            .map(|_| rh.sample::<f64, _>(StandardNormal))
            .collect(),
    )
    .expect("shape");
    let h_g = z.dot(&l.t());

    let mut rs = ChaCha8Rng::seed_from_u64(seed_s);
    let s_g = p.domain.sample_uniform(p.n, &mut rs)?;

    let mut rv = ChaCha8Rng::seed_from_u64(seed_v);
    let noise_std = p.sigma_v2.sqrt();
    let v_g = Array2::from_shape_vec(
        (p.m, p.n),
        (0..p.m * p.n)
            .map(|_| noise_std * rv.sample::<f64, _>(StandardNormal))
            .collect(),
    )
    .expect("shape");

    let y = h_g.dot(&s_g) + &v_g;
    Ok(GeneratedData { y, h_g, s_g, sigma_h, v_g })
}

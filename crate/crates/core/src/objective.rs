//! The MAP objective and its calculus.
//!
//! The estimation criterion is
//!
//!   J(H, S) = ‖Y − H·S‖_F² + λ·log det( (HᵀH + Ψ)/β ),
//!
//! with β = M + r + φ + 1 and λ = β·σ_v². The log-det argument is exactly the
//! convex blend μ·Σ̂⁽ˢ⁾ + (1−μ)·Ψ/(φ+r+1) of the sample row covariance of H
//! and the prior mode, with μ = M/β; `covariance_blend` exposes that
//! decomposition and `sigma_stationary` the underlying stationarity solution
//! for the covariance given H. `log_posterior_terms` evaluates the full
//! posterior decomposition the criterion is reduced from, constants included.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::domains::DomainSpec;
use crate::error::{Error, Result};
use crate::linalg;

/// Parameters of the objective. `beta` and `lambda` are derived at
/// construction and kept consistent: λ/β = σ_v² always holds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveParams {
    pub sigma_v2: f64,
    pub psi: Array2<f64>,
    pub phi: f64,
    pub m: usize,
    pub r: usize,
    /// β = M + r + φ + 1.
    pub beta: f64,
    /// λ = β·σ_v².
    pub lambda: f64,
}

impl ObjectiveParams {
    pub fn new(sigma_v2: f64, psi: Array2<f64>, phi: f64, m: usize, r: usize) -> Result<Self> {
        if !(sigma_v2 > 0.0) {
            return Err(Error::invalid(format!(
                "sigma_v2 must be positive, got {sigma_v2}"
            )));
        }
        if psi.nrows() != r || psi.ncols() != r {
            return Err(Error::invalid(format!(
                "Psi is {}x{}, expected {}x{}",
                psi.nrows(),
                psi.ncols(),
                r,
                r
            )));
        }
        linalg::cholesky(psi.view()).map_err(|e| Error::invalid(format!("Psi not SPD: {e}")))?;
        let beta = m as f64 + r as f64 + phi + 1.0;
        if !(beta > 0.0) {
            return Err(Error::invalid(format!("beta = M+r+phi+1 = {beta} must be positive")));
        }
        let lambda = beta * sigma_v2;
        Ok(ObjectiveParams { sigma_v2, psi, phi, m, r, beta, lambda })
    }

    fn check_shapes(&self, y: ArrayView2<'_, f64>, h: ArrayView2<'_, f64>, s: ArrayView2<'_, f64>) -> Result<()> {
        if h.dim() != (self.m, self.r) {
            return Err(Error::shape(format!(
                "H is {:?}, expected ({}, {})",
                h.dim(),
                self.m,
                self.r
            )));
        }
        if y.nrows() != self.m || s.nrows() != self.r || y.ncols() != s.ncols() {
            return Err(Error::shape(format!(
                "inconsistent shapes: Y {:?}, H {:?}, S {:?}",
                y.dim(),
                h.dim(),
                s.dim()
            )));
        }
        Ok(())
    }
}

/// The §-style decomposition of the log-det argument: a convex combination of
/// the sample covariance of H's rows and the prior mode.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceBlend {
    /// Σ̂⁽ˢ⁾ = HᵀH/M.
    pub sample_cov: Array2<f64>,
    /// Ψ/(φ+r+1), the mode of the inverse-Wishart prior.
    pub prior_mode: Array2<f64>,
    /// μ = M/(M+φ+r+1).
    pub mu: f64,
    /// μ·Σ̂⁽ˢ⁾ + (1−μ)·prior_mode = (HᵀH+Ψ)/β.
    pub blended: Array2<f64>,
}

/// The variable terms of the log posterior, split by factor. `source` is the
/// domain indicator: 0 when every column of S lies in the domain, −∞
/// otherwise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogPosteriorTerms {
    pub data: f64,
    pub source: f64,
    pub conditional: f64,
    pub prior: f64,
}

impl LogPosteriorTerms {
    pub fn total(&self) -> f64 {
        self.data + self.source + self.conditional + self.prior
    }
}

/// J(H, S) = ‖Y − HS‖_F² + λ·log det((HᵀH + Ψ)/β), via Cholesky.
pub fn evaluate(
    params: &ObjectiveParams,
    y: ArrayView2<'_, f64>,
    h: ArrayView2<'_, f64>,
    s: ArrayView2<'_, f64>,
) -> Result<f64> {
    params.check_shapes(y, h, s)?;
    let resid = &y.to_owned() - &h.dot(&s);
    let rss = linalg::frob_sq(resid.view());
    let blend = sigma_stationary_impl(h, &params.psi, params.beta);
    let l = linalg::cholesky(blend.view())?;
    Ok(rss + params.lambda * linalg::logdet_from_cholesky(&l))
}

/// ∇_H J = −2(Y − HS)Sᵀ + 2λ·H·(HᵀH + Ψ)⁻¹. The inverse is applied through a
/// Cholesky solve against Hᵀ.
pub fn grad_h(
    params: &ObjectiveParams,
    y: ArrayView2<'_, f64>,
    h: ArrayView2<'_, f64>,
    s: ArrayView2<'_, f64>,
) -> Result<Array2<f64>> {
    params.check_shapes(y, h, s)?;
    let resid = &y.to_owned() - &h.dot(&s);
    let data_part = resid.dot(&s.t()) * (-2.0);
    let a = linalg::symmetrize(&(h.t().dot(&h) + &params.psi));
    let l = linalg::cholesky(a.view())?;
    // X = H A⁻¹ computed as (A⁻¹ Hᵀ)ᵀ
    let xt = linalg::cholesky_solve(&l, h.t())?;
    Ok(data_part + xt.t().to_owned() * (2.0 * params.lambda))
}

/// ∇_S J = −2Hᵀ(Y − HS).
pub fn grad_s(
    params: &ObjectiveParams,
    y: ArrayView2<'_, f64>,
    h: ArrayView2<'_, f64>,
    s: ArrayView2<'_, f64>,
) -> Result<Array2<f64>> {
    params.check_shapes(y, h, s)?;
    let resid = &y.to_owned() - &h.dot(&s);
    Ok(h.t().dot(&resid) * (-2.0))
}

/// The stationarity solution for the row covariance given H:
/// Σ* = (HᵀH + Ψ)/(M + r + φ + 1).
pub fn sigma_stationary(h: ArrayView2<'_, f64>, psi: &Array2<f64>, phi: f64, m: usize) -> Result<Array2<f64>> {
    let r = psi.nrows();
    if h.ncols() != r {
        return Err(Error::shape(format!(
            "H has {} columns, Psi is {}x{}",
            h.ncols(),
            r,
            r
        )));
    }
    let beta = m as f64 + r as f64 + phi + 1.0;
    Ok(sigma_stationary_impl(h, psi, beta))
}

fn sigma_stationary_impl(h: ArrayView2<'_, f64>, psi: &Array2<f64>, beta: f64) -> Array2<f64> {
    let mut a = h.t().dot(&h) + psi;
    a = linalg::symmetrize(&a);
    a / beta
}

/// Decomposes (HᵀH+Ψ)/β as the convex blend of sample covariance and prior
/// mode.
pub fn covariance_blend(
    h: ArrayView2<'_, f64>,
    psi: &Array2<f64>,
    phi: f64,
    m: usize,
) -> Result<CovarianceBlend> {
    let r = psi.nrows();
    if h.ncols() != r {
        return Err(Error::shape(format!(
            "H has {} columns, Psi is {}x{}",
            h.ncols(),
            r,
            r
        )));
    }
    let beta = m as f64 + r as f64 + phi + 1.0;
    let sample_cov = linalg::symmetrize(&(h.t().dot(&h) / m as f64));
    let prior_scale = phi + r as f64 + 1.0;
    let prior_mode = psi / prior_scale;
    let mu = m as f64 / beta;
    let blended = &sample_cov * mu + &prior_mode * (1.0 - mu);
    Ok(CovarianceBlend { sample_cov, prior_mode, mu, blended })
}

/// log Γ_r(a), the multivariate gamma function, via its product form.
pub fn ln_multivariate_gamma(r: usize, a: f64) -> Result<f64> {
    let mut total = (r * (r - 1)) as f64 / 4.0 * std::f64::consts::PI.ln();
    for j in 1..=r {
        let arg = a + (1.0 - j as f64) / 2.0;
        if !(arg > 0.0) {
            return Err(Error::invalid(format!(
                "multivariate gamma argument {arg} <= 0 (a={a}, r={r})"
            )));
        }
        total += libm::lgamma(arg);
    }
    Ok(total)
}

/// Evaluates the four variable terms of the log posterior (up to the constant
/// evidence term):
///   data:        −‖Y−HS‖_F²/(2σ_v²) + c₁,  c₁ = −MN·log(√(2π)·σ_v)
///   source:      0 if every column of S is in the domain, −∞ otherwise
///   conditional: −(M/2)·log det Σ − ½·Tr(Σ⁻¹HᵀH) − (Mr/2)·log 2π
///   prior:       (φ/2)·log det Ψ − ((r+φ+1)/2)·log det Σ − (rφ/2)·log 2
///                − log Γ_r(φ/2) − ½·Tr(ΨΣ⁻¹)
pub fn log_posterior_terms(
    params: &ObjectiveParams,
    domain: &DomainSpec,
    y: ArrayView2<'_, f64>,
    h: ArrayView2<'_, f64>,
    s: ArrayView2<'_, f64>,
    sigma: ArrayView2<'_, f64>,
) -> Result<LogPosteriorTerms> {
    params.check_shapes(y, h, s)?;
    if sigma.dim() != (params.r, params.r) {
        return Err(Error::shape(format!(
            "Sigma is {:?}, expected ({}, {})",
            sigma.dim(),
            params.r,
            params.r
        )));
    }
    let m = params.m as f64;
    let r = params.r as f64;
    let n = y.ncols() as f64;
    let two_pi = 2.0 * std::f64::consts::PI;

    let resid = &y.to_owned() - &h.dot(&s);
    let c1 = -m * n * (two_pi.sqrt() * params.sigma_v2.sqrt()).ln();
    let data = -linalg::frob_sq(resid.view()) / (2.0 * params.sigma_v2) + c1;

    let source = if domain.contains_columns(&s.to_owned(), crate::domains::DEFAULT_MEMBERSHIP_TOL)? {
        0.0
    } else {
        f64::NEG_INFINITY
    };

    let l = linalg::cholesky(sigma)?;
    let logdet_sigma = linalg::logdet_from_cholesky(&l);
    let hth = linalg::symmetrize(&h.t().dot(&h));
    let sigma_inv_hth = linalg::cholesky_solve(&l, hth.view())?;
    let trace_cond: f64 = (0..params.r).map(|i| sigma_inv_hth[[i, i]]).sum();
    let conditional = -0.5 * m * logdet_sigma - 0.5 * trace_cond - 0.5 * m * r * two_pi.ln();

    let psi_chol = linalg::cholesky(params.psi.view())?;
    let logdet_psi = linalg::logdet_from_cholesky(&psi_chol);
    let sigma_inv_psi = linalg::cholesky_solve(&l, params.psi.view())?;
    let trace_prior: f64 = (0..params.r).map(|i| sigma_inv_psi[[i, i]]).sum();
    let prior = 0.5 * params.phi * logdet_psi
        - 0.5 * (r + params.phi + 1.0) * logdet_sigma
        - 0.5 * r * params.phi * 2f64.ln()
        - ln_multivariate_gamma(params.r, params.phi / 2.0)?
        - 0.5 * trace_prior;

    Ok(LogPosteriorTerms { data, source, conditional, prior })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn randn(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
        Array2::from_shape_vec(
            (rows, cols),
            (0..rows * cols).map(|_| rng.sample::<f64, _>(StandardNormal)).collect(),
        )
        .unwrap()
    }

    fn scalar_params() -> ObjectiveParams {
        ObjectiveParams::new(1.0, array![[1.0]], 1.0, 1, 1).unwrap()
    }

    #[test]
    fn derived_constants_are_consistent() {
        let p = ObjectiveParams::new(0.01, Array2::<f64>::eye(5) * 12.0, 6.0, 20, 5).unwrap();
        assert_eq!(p.beta, 32.0);
        assert!((p.lambda - 0.32).abs() < 1e-15);
        assert!((p.lambda / p.beta - p.sigma_v2).abs() < 1e-18);
    }

    #[test]
    fn scalar_objective_value() {
        // β = 4, λ = 4, J = 1 + 4·ln(0.5)
        let p = scalar_params();
        let j = evaluate(&p, array![[2.0]].view(), array![[1.0]].view(), array![[1.0]].view())
            .unwrap();
        let expected = 1.0 + 4.0 * 0.5f64.ln();
        assert!((j - expected).abs() < 1e-12, "j={j} expected={expected}");
    }

    #[test]
    fn zero_h_reduces_to_signal_energy_plus_prior_logdet() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let psi = array![[2.0, 0.2], [0.2, 1.5]];
        let p = ObjectiveParams::new(0.5, psi.clone(), 3.0, 4, 2).unwrap();
        let y = randn(4, 6, &mut rng);
        let s = randn(2, 6, &mut rng);
        let h = Array2::<f64>::zeros((4, 2));
        let j = evaluate(&p, y.view(), h.view(), s.view()).unwrap();
        let l = linalg::cholesky((psi / p.beta).view()).unwrap();
        let expected = linalg::frob_sq(y.view()) + p.lambda * linalg::logdet_from_cholesky(&l);
        assert!((j - expected).abs() < 1e-10);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let (m, r, n) = (4, 2, 6);
        let psi = {
            let g = randn(r, r, &mut rng);
            g.dot(&g.t()) + Array2::<f64>::eye(r)
        };
        let p = ObjectiveParams::new(0.3, psi, 4.0, m, r).unwrap();
        let y = randn(m, n, &mut rng);
        let h = randn(m, r, &mut rng);
        let s = randn(r, n, &mut rng);

        let gh = grad_h(&p, y.view(), h.view(), s.view()).unwrap();
        let gs = grad_s(&p, y.view(), h.view(), s.view()).unwrap();

        let mut num_h = Array2::<f64>::zeros((m, r));
        for i in 0..m {
            for j in 0..r {
                let step = 1e-6 * (1.0 + h[[i, j]].abs());
                let mut hp = h.clone();
                hp[[i, j]] += step;
                let mut hm = h.clone();
                hm[[i, j]] -= step;
                num_h[[i, j]] = (evaluate(&p, y.view(), hp.view(), s.view()).unwrap()
                    - evaluate(&p, y.view(), hm.view(), s.view()).unwrap())
                    / (2.0 * step);
            }
        }
        let rel_h = linalg::frob_sq((&gh - &num_h).view()).sqrt()
            / linalg::frob_sq(num_h.view()).sqrt();
        assert!(rel_h < 1e-6, "rel_h = {rel_h}");

        let mut num_s = Array2::<f64>::zeros((r, n));
        for i in 0..r {
            for j in 0..n {
                let step = 1e-6 * (1.0 + s[[i, j]].abs());
                let mut sp = s.clone();
                sp[[i, j]] += step;
                let mut sm = s.clone();
                sm[[i, j]] -= step;
                num_s[[i, j]] = (evaluate(&p, y.view(), h.view(), sp.view()).unwrap()
                    - evaluate(&p, y.view(), h.view(), sm.view()).unwrap())
                    / (2.0 * step);
            }
        }
        let rel_s = linalg::frob_sq((&gs - &num_s).view()).sqrt()
            / linalg::frob_sq(num_s.view()).sqrt();
        assert!(rel_s < 1e-6, "rel_s = {rel_s}");
    }

    #[test]
    fn grad_s_vanishes_on_exact_fit() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let h = randn(4, 2, &mut rng);
        let s = randn(2, 6, &mut rng);
        let y = h.dot(&s);
        let p = ObjectiveParams::new(0.3, Array2::<f64>::eye(2), 4.0, 4, 2).unwrap();
        let g = grad_s(&p, y.view(), h.view(), s.view()).unwrap();
        assert!(linalg::frob_sq(g.view()).sqrt() < 1e-12);
    }

    #[test]
    fn grad_h_at_zero_h_is_data_only() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let y = randn(4, 6, &mut rng);
        let s = randn(2, 6, &mut rng);
        let h = Array2::<f64>::zeros((4, 2));
        let p = ObjectiveParams::new(0.3, Array2::<f64>::eye(2), 4.0, 4, 2).unwrap();
        let g = grad_h(&p, y.view(), h.view(), s.view()).unwrap();
        let expected = y.dot(&s.t()) * (-2.0);
        assert!(linalg::frob_sq((&g - &expected).view()).sqrt() < 1e-12);
    }

    #[test]
    fn logdet_gradient_component_is_linear_in_lambda() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let y = randn(4, 6, &mut rng);
        let h = randn(4, 2, &mut rng);
        let s = randn(2, 6, &mut rng);
        let psi = Array2::<f64>::eye(2) * 2.0;
        let p1 = ObjectiveParams::new(0.3, psi.clone(), 4.0, 4, 2).unwrap();
        let p2 = ObjectiveParams::new(0.6, psi, 4.0, 4, 2).unwrap(); // doubles lambda
        let data_part = (&y.to_owned() - &h.dot(&s)).dot(&s.t()) * (-2.0);
        let c1 = grad_h(&p1, y.view(), h.view(), s.view()).unwrap() - &data_part;
        let c2 = grad_h(&p2, y.view(), h.view(), s.view()).unwrap() - &data_part;
        let diff = &c2 - &(&c1 * 2.0);
        assert!(linalg::frob_sq(diff.view()).sqrt() < 1e-10);
    }

    #[test]
    fn sigma_stationary_scalar_and_zero_cases() {
        let psi = array![[1.0]];
        // H=(1), Ψ=(1), M=1, φ=1: (1+1)/4
        let s = sigma_stationary(array![[1.0]].view(), &psi, 1.0, 1).unwrap();
        assert!((s[[0, 0]] - 0.5).abs() < 1e-15);
        let h0 = Array2::<f64>::zeros((3, 1));
        let s0 = sigma_stationary(h0.view(), &psi, 1.0, 3).unwrap();
        assert!((s0[[0, 0]] - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn blend_identity_and_mu() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let h = randn(20, 5, &mut rng);
        let psi = Array2::<f64>::eye(5) * 12.0;
        let blend = covariance_blend(h.view(), &psi, 6.0, 20).unwrap();
        assert!((blend.mu - 0.625).abs() < 1e-15);
        let direct = sigma_stationary(h.view(), &psi, 6.0, 20).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                let rel = (blend.blended[[i, j]] - direct[[i, j]]).abs()
                    / direct[[i, j]].abs().max(1e-300);
                assert!(rel < 1e-12, "entry ({i},{j}) rel={rel}");
            }
        }
        // large-M limit: mu -> 1
        let h_big = randn(3200, 5, &mut rng);
        let b = covariance_blend(h_big.view(), &psi, 26.0, 3200).unwrap();
        assert!(b.mu >= 0.99);
        // H = 0: blended = (1-mu)·prior_mode
        let hz = Array2::<f64>::zeros((20, 5));
        let bz = covariance_blend(hz.view(), &psi, 6.0, 20).unwrap();
        let expect = &bz.prior_mode * (1.0 - bz.mu);
        assert!(linalg::frob_sq((&bz.blended - &expect).view()).sqrt() < 1e-14);
    }

    #[test]
    fn multivariate_gamma_reduces_to_lgamma() {
        assert!((ln_multivariate_gamma(1, 3.0).unwrap() - libm::lgamma(3.0)).abs() < 1e-14);
        // Γ_2(a) = √π·Γ(a)·Γ(a−1/2)
        let a = 2.5;
        let expected = 0.25 * std::f64::consts::PI.ln() * 2.0
            + libm::lgamma(a)
            + libm::lgamma(a - 0.5);
        assert!((ln_multivariate_gamma(2, a).unwrap() - expected).abs() < 1e-12);
        assert!(ln_multivariate_gamma(3, 0.5).is_err());
    }

    #[test]
    fn conditional_term_scalar_case() {
        // M=r=1, Σ=(1), H=(0): conditional = −(1/2)·log 2π
        let p = scalar_params();
        let d = DomainSpec::linf_ball(1).unwrap();
        let terms = log_posterior_terms(
            &p,
            &d,
            array![[0.0]].view(),
            array![[0.0]].view(),
            array![[0.0]].view(),
            array![[1.0]].view(),
        )
        .unwrap();
        let expected = -0.5 * (2.0 * std::f64::consts::PI).ln();
        assert!((terms.conditional - expected).abs() < 1e-14);
        assert_eq!(terms.source, 0.0);
    }

    #[test]
    fn source_term_is_an_indicator() {
        let p = scalar_params();
        let d = DomainSpec::linf_ball(1).unwrap();
        let terms = log_posterior_terms(
            &p,
            &d,
            array![[0.0]].view(),
            array![[0.0]].view(),
            array![[2.0]].view(), // outside B_inf
            array![[1.0]].view(),
        )
        .unwrap();
        assert_eq!(terms.source, f64::NEG_INFINITY);
    }

    #[test]
    fn sigma_gradient_vanishes_at_stationary_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let (m, r, n) = (5, 3, 7);
        let psi = {
            let g = randn(r, r, &mut rng);
            g.dot(&g.t()) + Array2::<f64>::eye(r) * 2.0
        };
        let p = ObjectiveParams::new(0.4, psi.clone(), 5.0, m, r).unwrap();
        let d = DomainSpec::linf_ball(r).unwrap();
        let y = randn(m, n, &mut rng);
        let h = randn(m, r, &mut rng);
        let s = {
            let mut s = randn(r, n, &mut rng);
            d.project_columns_in_place(&mut s).unwrap();
            s
        };
        let sigma_star = sigma_stationary(h.view(), &psi, p.phi, m).unwrap();
        let f = |sig: &Array2<f64>| {
            let t = log_posterior_terms(&p, &d, y.view(), h.view(), s.view(), sig.view()).unwrap();
            t.conditional + t.prior
        };
        // directional derivatives along 20 random symmetric directions
        for _ in 0..20 {
            let g = randn(r, r, &mut rng);
            let mut dir = linalg::symmetrize(&g);
            let norm = linalg::frob_sq(dir.view()).sqrt();
            dir.mapv_inplace(|v| v / norm);
            let t = 1e-6;
            let plus = f(&(&sigma_star + &(&dir * t)));
            let minus = f(&(&sigma_star - &(&dir * t)));
            let deriv = (plus - minus) / (2.0 * t);
            assert!(deriv.abs() < 1e-6, "directional derivative {deriv}");
        }
    }

    #[test]
    fn pinned_sigma_posterior_matches_objective_up_to_constant() {
        let mut rng = ChaCha8Rng::seed_from_u64(123);
        let (m, r, n) = (5, 2, 8);
        let psi = Array2::<f64>::eye(r) * 1.7;
        let p = ObjectiveParams::new(0.25, psi.clone(), 4.0, m, r).unwrap();
        let d = DomainSpec::linf_ball(r).unwrap();
        let y = randn(m, n, &mut rng);

        let mut constants = Vec::new();
        for _ in 0..100 {
            let h = randn(m, r, &mut rng);
            let mut s = randn(r, n, &mut rng);
            d.project_columns_in_place(&mut s).unwrap();
            let sigma = sigma_stationary(h.view(), &psi, p.phi, m).unwrap();
            let terms =
                log_posterior_terms(&p, &d, y.view(), h.view(), s.view(), sigma.view()).unwrap();
            let j = evaluate(&p, y.view(), h.view(), s.view()).unwrap();
            constants.push(j - (-2.0 * p.sigma_v2) * terms.total());
        }
        let mean = constants.iter().sum::<f64>() / constants.len() as f64;
        for c in &constants {
            assert!(
                (c - mean).abs() / (1.0 + mean.abs()) < 1e-8,
                "constant drift: {c} vs {mean}"
            );
        }
    }

    #[test]
    fn reduction_preserves_candidate_ranking() {
        let mut rng = ChaCha8Rng::seed_from_u64(321);
        let (m, r, n) = (4, 2, 6);
        let psi = Array2::<f64>::eye(r);
        let p = ObjectiveParams::new(0.5, psi.clone(), 3.0, m, r).unwrap();
        let d = DomainSpec::linf_ball(r).unwrap();
        let y = randn(m, n, &mut rng);
        let mut by_objective: Vec<(usize, f64)> = Vec::new();
        let mut by_posterior: Vec<(usize, f64)> = Vec::new();
        for k in 0..100 {
            let h = randn(m, r, &mut rng);
            let mut s = randn(r, n, &mut rng);
            d.project_columns_in_place(&mut s).unwrap();
            let sigma = sigma_stationary(h.view(), &psi, p.phi, m).unwrap();
            let terms =
                log_posterior_terms(&p, &d, y.view(), h.view(), s.view(), sigma.view()).unwrap();
            by_objective.push((k, evaluate(&p, y.view(), h.view(), s.view()).unwrap()));
            by_posterior.push((k, terms.total()));
        }
        by_objective.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
        by_posterior.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
        let order_obj: Vec<usize> = by_objective.iter().map(|(k, _)| *k).collect();
        let order_post: Vec<usize> = by_posterior.iter().map(|(k, _)| *k).collect();
        assert_eq!(order_obj, order_post, "minimizing J must rank like maximizing the posterior");
    }

    #[test]
    fn shape_errors_are_reported() {
        let p = scalar_params();
        let bad = evaluate(
            &p,
            array![[1.0, 2.0]].view(),
            array![[1.0]].view(),
            array![[1.0]].view(),
        );
        assert!(matches!(bad, Err(Error::ShapeMismatch(_))));
    }
}

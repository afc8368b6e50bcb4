//! Latent-vector domains: the unit simplex, the ℓ∞ ball, and the nonnegative
//! orthant, with exact Euclidean projection, uniform sampling, and membership
//! tests.
//!
//! All operations are pure given their inputs; samplers take the rng as an
//! explicit argument so concurrent callers can use independent streams.

use ndarray::{Array1, Array2, ArrayView1};
use rand::distributions::Uniform;
use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default absolute tolerance for membership tests, matching the accuracy of
/// double-precision projection.
pub const DEFAULT_MEMBERSHIP_TOL: f64 = 1e-9;

/// Which domain the columns of the latent factor live in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainKind {
    /// Unit probability simplex: x ≥ 0, Σx = 1.
    Simplex,
    /// Unit ℓ∞ ball: |x_i| ≤ 1.
    LinfBall,
    /// Nonnegative orthant: x ≥ 0.
    #[serde(rename = "nonneg")]
    NonnegativeOrthant,
}

/// A latent-vector domain together with its dimension.
///
/// Serializes to the config form `{"kind": "simplex" | "linf_ball" | "nonneg",
/// "dim": r}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub kind: DomainKind,
    pub dim: usize,
}

impl DomainSpec {
    pub fn new(kind: DomainKind, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("domain dimension must be >= 1"));
        }
        Ok(DomainSpec { kind, dim })
    }

    pub fn simplex(dim: usize) -> Result<Self> {
        Self::new(DomainKind::Simplex, dim)
    }

    pub fn linf_ball(dim: usize) -> Result<Self> {
        Self::new(DomainKind::LinfBall, dim)
    }

    pub fn nonneg(dim: usize) -> Result<Self> {
        Self::new(DomainKind::NonnegativeOrthant, dim)
    }

    fn check_len(&self, x: ArrayView1<'_, f64>) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::invalid(format!(
                "vector has length {}, domain dimension is {}",
                x.len(),
                self.dim
            )));
        }
        Ok(())
    }

    /// Exact Euclidean projection onto the domain.
    ///
    /// Idempotent; returns `x` unchanged (up to rounding) when `x` is already
    /// inside.
    pub fn project(&self, x: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
        self.check_len(x)?;
        let mut out = x.to_owned();
        self.project_in_place_unchecked(out.as_slice_mut().expect("contiguous"));
        Ok(out)
    }

    /// Projects every column of an r×n matrix in place. Used by the solver on
    /// the hot path, after the length contract has been established once.
    pub fn project_columns_in_place(&self, m: &mut Array2<f64>) -> Result<()> {
        if m.nrows() != self.dim {
            return Err(Error::invalid(format!(
                "matrix has {} rows, domain dimension is {}",
                m.nrows(),
                self.dim
            )));
        }
        let mut col = vec![0.0; self.dim];
        for j in 0..m.ncols() {
            for i in 0..self.dim {
                col[i] = m[[i, j]];
            }
            self.project_in_place_unchecked(&mut col);
            for i in 0..self.dim {
                m[[i, j]] = col[i];
            }
        }
        Ok(())
    }

    fn project_in_place_unchecked(&self, x: &mut [f64]) {
        match self.kind {
            DomainKind::LinfBall => {
                for v in x.iter_mut() {
                    *v = v.clamp(-1.0, 1.0);
                }
            }
            DomainKind::NonnegativeOrthant => {
                for v in x.iter_mut() {
                    *v = v.max(0.0);
                }
            }
            DomainKind::Simplex => project_simplex_in_place(x),
        }
    }

    /// Draws `n` i.i.d. uniform samples from the domain as the columns of an
    /// r×n matrix. Deterministic given the rng state.
    ///
    /// The nonnegative orthant has no uniform distribution (infinite volume),
    /// so it is rejected.
    pub fn sample_uniform<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Array2<f64>> {
        if n == 0 {
            return Err(Error::invalid("sample count must be >= 1"));
        }
        match self.kind {
            DomainKind::NonnegativeOrthant => Err(Error::UnsupportedDomain(
                "uniform distribution over the nonnegative orthant is improper".into(),
            )),
            DomainKind::LinfBall => {
                let u = Uniform::new_inclusive(-1.0f64, 1.0f64);
                let mut m = Array2::<f64>::zeros((self.dim, n));
                // column-major draw order so each column is one draw
                for j in 0..n {
                    for i in 0..self.dim {
                        m[[i, j]] = rng.sample(u);
                    }
                }
                Ok(m)
            }
            DomainKind::Simplex => {
                // normalized i.i.d. Exp(1) draws: exact flat Dirichlet
                let mut m = Array2::<f64>::zeros((self.dim, n));
                for j in 0..n {
                    let mut total = 0.0;
                    for i in 0..self.dim {
                        let e: f64 = rng.sample(Exp1);
                        m[[i, j]] = e;
                        total += e;
                    }
                    for i in 0..self.dim {
                        m[[i, j]] /= total;
                    }
                }
                Ok(m)
            }
        }
    }

    /// Membership test within an absolute tolerance.
    pub fn contains(&self, x: ArrayView1<'_, f64>, tol: f64) -> Result<bool> {
        self.check_len(x)?;
        Ok(match self.kind {
            DomainKind::LinfBall => x.iter().all(|v| v.abs() <= 1.0 + tol),
            DomainKind::NonnegativeOrthant => x.iter().all(|v| *v >= -tol),
            DomainKind::Simplex => {
                let sum: f64 = x.iter().sum();
                (sum - 1.0).abs() <= tol && x.iter().all(|v| *v >= -tol)
            }
        })
    }

    /// `contains` at the default tolerance.
    pub fn contains_default(&self, x: ArrayView1<'_, f64>) -> Result<bool> {
        self.contains(x, DEFAULT_MEMBERSHIP_TOL)
    }

    /// True iff every column of the matrix is inside the domain.
    pub fn contains_columns(&self, m: &Array2<f64>, tol: f64) -> Result<bool> {
        for j in 0..m.ncols() {
            if !self.contains(m.column(j), tol)? {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

/// Sort-based simplex projection (O(r log r) thresholding).
fn project_simplex_in_place(x: &mut [f64]) {
    let r = x.len();
    if r == 1 {
        x[0] = 1.0;
        return;
    }
    let mut u = x.to_vec();
    u.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut cumsum = 0.0;
    let mut rho = 0;
    let mut theta = 0.0;
    for (i, &ui) in u.iter().enumerate() {
        cumsum += ui;
        let t = (cumsum - 1.0) / (i as f64 + 1.0);
        if ui - t > 0.0 {
            rho = i + 1;
            theta = t;
        }
    }
    debug_assert!(rho >= 1);
    for v in x.iter_mut() {
        *v = (*v - theta).max(0.0);
    }
}

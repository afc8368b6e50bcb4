//! Recovery-quality evaluation: ambiguity-resolving alignment, SINR, and the
//! linear MMSE benchmark computed with the true mixing matrix.

use ndarray::{Array2, ArrayView2};

use crate::domains::{DomainKind, DomainSpec};
use crate::error::{Error, Result};
use crate::linalg;

/// SINR values above this are reported as the cap (exact recovery).
pub const SINR_CAP_DB: f64 = 200.0;

/// A signed row permutation resolving the inherent factorization ambiguity.
///
/// `perm[i]` is the estimate row matched to reference row `i`; `signs[j]` is
/// the sign applied to estimate row `j` (always +1 for sign-asymmetric
/// domains). `gain` is an optional per-row positive scale, disabled (None)
/// by `align`.
#[derive(Debug, Clone, PartialEq)]
pub struct Alignment {
    pub perm: Vec<usize>,
    pub signs: Vec<i8>,
    pub gain: Option<Vec<f64>>,
    /// Set when a zero-variance row forced its correlations to 0.
    pub had_zero_variance_rows: bool,
}

impl Alignment {
    pub fn identity(r: usize) -> Self {
        Alignment {
            perm: (0..r).collect(),
            signs: vec![1; r],
            gain: None,
            had_zero_variance_rows: false,
        }
    }

    pub fn is_identity(&self) -> bool {
        self.perm.iter().enumerate().all(|(i, &j)| i == j)
            && self.signs.iter().all(|&s| s == 1)
            && self.gain.is_none()
    }

    /// Applies the alignment: row i of the result is
    /// signs[perm[i]]·gain[perm[i]]·S_est[perm[i], :].
    pub fn apply(&self, s_est: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        let r = self.perm.len();
        if s_est.nrows() != r {
            return Err(Error::shape(format!(
                "estimate has {} rows, alignment is over {}",
                s_est.nrows(),
                r
            )));
        }
        let mut out = Array2::<f64>::zeros((r, s_est.ncols()));
        for i in 0..r {
            let j = self.perm[i];
            let scale = self.signs[j] as f64 * self.gain.as_ref().map_or(1.0, |g| g[j]);
            for c in 0..s_est.ncols() {
                out[[i, c]] = scale * s_est[[j, c]];
            }
        }
        Ok(out)
    }
}

/// Pearson correlation matrix between the rows of two equally shaped
/// matrices. Zero-variance rows produce zero correlations and set the flag.
fn correlation_matrix(
    s_ref: ArrayView2<'_, f64>,
    s_est: ArrayView2<'_, f64>,
) -> (Array2<f64>, bool) {
    let r = s_ref.nrows();
    let n = s_ref.ncols() as f64;
    let center = |m: ArrayView2<'_, f64>| -> (Array2<f64>, Vec<f64>) {
        let mut c = m.to_owned();
        let mut stds = Vec::with_capacity(m.nrows());
        for i in 0..m.nrows() {
            let mean = m.row(i).sum() / n;
            let mut var = 0.0;
            let mut rms = 0.0;
            for j in 0..m.ncols() {
                rms += m[[i, j]] * m[[i, j]];
                c[[i, j]] -= mean;
                var += c[[i, j]] * c[[i, j]];
            }
            let std = (var / n).sqrt();
            // a constant row leaves rounding residue after centering; treat
            // anything at that level as zero variance
            let floor = 1e-12 * (rms / n).sqrt().max(f64::MIN_POSITIVE);
            stds.push(if std <= floor { 0.0 } else { std });
        }
        (c, stds)
    };
    let (cr, std_r) = center(s_ref);
    let (ce, std_e) = center(s_est);
    let mut corr = Array2::<f64>::zeros((r, r));
    let mut degenerate = false;
    for i in 0..r {
        for j in 0..r {
            if std_r[i] == 0.0 || std_e[j] == 0.0 {
                degenerate = true;
                continue;
            }
            let dot: f64 = (0..s_ref.ncols()).map(|k| cr[[i, k]] * ce[[j, k]]).sum();
            corr[[i, j]] = dot / (n * std_r[i] * std_e[j]);
        }
    }
    (corr, degenerate)
}

/// Finds the signed permutation maximizing Σ|corr| between matched rows,
/// using an optimal assignment on the |correlation| matrix. Sign flips are
/// allowed only for domains closed under negation; the simplex and the
/// nonnegative orthant get permutation-only alignment.
pub fn align(
    s_ref: ArrayView2<'_, f64>,
    s_est: ArrayView2<'_, f64>,
    domain: &DomainSpec,
) -> Result<Alignment> {
    if s_ref.dim() != s_est.dim() {
        return Err(Error::shape(format!(
            "reference {:?} vs estimate {:?}",
            s_ref.dim(),
            s_est.dim()
        )));
    }
    let r = s_ref.nrows();
    if r == 0 {
        return Err(Error::invalid("empty matrices"));
    }
    let (corr, had_zero_variance_rows) = correlation_matrix(s_ref, s_est);
    // maximize Σ|corr| == minimize Σ(−|corr|)
    let mut cost = Array2::<f64>::zeros((r, r));
    for i in 0..r {
        for j in 0..r {
            cost[[i, j]] = -corr[[i, j]].abs();
        }
    }
    let perm = min_cost_assignment(&cost);
    let allow_signs = matches!(domain.kind, DomainKind::LinfBall);
    let mut signs = vec![1i8; r];
    if allow_signs {
        for (i, &j) in perm.iter().enumerate() {
            if corr[[i, j]] < 0.0 {
                signs[j] = -1;
            }
        }
    }
    Ok(Alignment { perm, signs, gain: None, had_zero_variance_rows })
}

/// Aggregate SINR in dB: 10·log₁₀(‖S_ref‖_F² / ‖S_ref − S_est‖_F²), capped
/// at `SINR_CAP_DB`.
pub fn sinr_db(s_ref: ArrayView2<'_, f64>, s_est_aligned: ArrayView2<'_, f64>) -> Result<f64> {
    if s_ref.dim() != s_est_aligned.dim() {
        return Err(Error::shape(format!(
            "reference {:?} vs estimate {:?}",
            s_ref.dim(),
            s_est_aligned.dim()
        )));
    }
    let signal = linalg::frob_sq(s_ref);
    if signal == 0.0 {
        return Err(Error::invalid("reference signal is identically zero"));
    }
    let err = s_ref
        .iter()
        .zip(s_est_aligned.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>();
    if err == 0.0 {
        return Ok(SINR_CAP_DB);
    }
    Ok((10.0 * (signal / err).log10()).min(SINR_CAP_DB))
}

/// Covariance of the uniform distribution on the domain.
fn source_covariance(domain: &DomainSpec) -> Result<Array2<f64>> {
    let r = domain.dim;
    match domain.kind {
        DomainKind::LinfBall => Ok(Array2::<f64>::eye(r) / 3.0),
        DomainKind::Simplex => {
            // flat Dirichlet: (I/r − 11ᵀ/r²)/(r+1)
            let rf = r as f64;
            let mut c = Array2::<f64>::from_elem((r, r), -1.0 / (rf * rf));
            for i in 0..r {
                c[[i, i]] += 1.0 / rf;
            }
            Ok(c / (rf + 1.0))
        }
        DomainKind::NonnegativeOrthant => Err(Error::UnsupportedDomain(
            "no proper uniform distribution on the nonnegative orthant".into(),
        )),
    }
}

/// Linear MMSE estimate Σ_s·Hᵀ·(H·Σ_s·Hᵀ + σ_v²·I)⁻¹·Y with the source
/// covariance implied by the domain's uniform law. A rank-deficient
/// innovation matrix (e.g. simplex sources with zero noise) is solved in the
/// least-squares sense.
pub fn lmmse_estimate(
    y: ArrayView2<'_, f64>,
    h_g: ArrayView2<'_, f64>,
    sigma_v2: f64,
    domain: &DomainSpec,
) -> Result<Array2<f64>> {
    let (m, r) = h_g.dim();
    if y.nrows() != m {
        return Err(Error::shape(format!(
            "Y has {} rows, H has {}",
            y.nrows(),
            m
        )));
    }
    if r != domain.dim {
        return Err(Error::invalid(format!(
            "H has {} columns, domain dimension is {}",
            r, domain.dim
        )));
    }
    if !(sigma_v2 >= 0.0) {
        return Err(Error::invalid("sigma_v2 must be nonnegative"));
    }
    let sigma_s = source_covariance(domain)?;
    let hs = h_g.dot(&sigma_s); // M×r
    let innovation = linalg::symmetrize(&(hs.dot(&h_g.t()) + Array2::<f64>::eye(m) * sigma_v2));
    let solved = match linalg::cholesky(innovation.view()) {
        Ok(l) => linalg::cholesky_solve(&l, y)?,
        Err(_) => {
            let max_eig = linalg::max_eigenvalue(innovation.view())?;
            if !(max_eig > 0.0) {
                return Err(Error::numerical(
                    "innovation matrix is singular with no usable range",
                ));
            }
            linalg::symmetric_pseudo_solve(innovation.view(), y, 1e-12)?
        }
    };
    Ok(hs.t().dot(&solved))
}

/// Minimum-cost perfect assignment on a square cost matrix (Hungarian
/// algorithm with row/column potentials, O(n³)). Returns `assignment[row] =
/// column`.
pub fn min_cost_assignment(cost: &Array2<f64>) -> Vec<usize> {
    let n = cost.nrows();
    assert_eq!(n, cost.ncols(), "cost matrix must be square");
    // 1-based with column 0 as the virtual start
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[[i0 - 1, j - 1]] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0usize; n];
    for j in 1..=n {
        if p[j] > 0 {
            assignment[p[j] - 1] = j - 1;
        }
    }
    assignment
}

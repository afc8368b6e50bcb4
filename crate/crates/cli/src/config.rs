//! JSON config schema for the command-line front end.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use smf_core::generator::{HRowCovarianceMode, ModelParams};
use smf_core::objective::ObjectiveParams;
use smf_core::solver::SolverConfig;
use smf_core::{psi_from_rho, DomainSpec, Error, Result};

/// Generative-model template: everything but the prior scale matrix, which
/// each cell derives from (ρ, φ).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelConfig {
    pub m: usize,
    pub r: usize,
    pub n: usize,
    pub sigma_v2: f64,
    pub domain: DomainSpec,
}

impl ModelConfig {
    pub fn to_params(&self, rho: f64, phi: f64) -> Result<ModelParams> {
        let params = ModelParams {
            m: self.m,
            r: self.r,
            n: self.n,
            sigma_v2: self.sigma_v2,
            psi: psi_from_rho(rho, phi, self.r)?,
            phi,
            domain: self.domain,
            h_row_covariance_mode: HRowCovarianceMode::Identity,
        };
        params.validate()?;
        Ok(params)
    }
}

/// How the regularization weight is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaRule {
    /// λ = (M + r + φ + 1)·σ_v², the model's own prescription.
    Prescribed,
    /// An explicit λ, realized through an effective noise variance λ/β.
    Manual(f64),
}

impl Default for LambdaRule {
    fn default() -> Self {
        LambdaRule::Prescribed
    }
}

impl LambdaRule {
    /// Builds the objective for one cell. A manual λ keeps the λ/β = σ²
    /// identity by construction, substituting λ/β for the noise variance.
    pub fn objective_params(&self, model: &ModelConfig, rho: f64, phi: f64) -> Result<ObjectiveParams> {
        let psi = psi_from_rho(rho, phi, model.r)?;
        match *self {
            LambdaRule::Prescribed => {
                ObjectiveParams::new(model.sigma_v2, psi, phi, model.m, model.r)
            }
            LambdaRule::Manual(lambda) => {
                if !(lambda > 0.0) {
                    return Err(Error::invalid(format!(
                        "manual lambda must be positive, got {lambda}"
                    )));
                }
                let beta = model.m as f64 + model.r as f64 + phi + 1.0;
                ObjectiveParams::new(lambda / beta, psi, phi, model.m, model.r)
            }
        }
    }
}

fn default_rho_grid() -> Vec<f64> {
    // 13 log-spaced points over [1e-4, 1e2]
    let (lo, hi, k) = (-4.0f64, 2.0f64, 13usize);
    (0..k)
        .map(|i| 10f64.powf(lo + (hi - lo) * i as f64 / (k - 1) as f64))
        .collect()
}

fn default_phi_values() -> Vec<f64> {
    vec![6.0, 250.0]
}

fn default_trials() -> usize {
    10
}

/// Config for a single fit run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitConfig {
    pub model: ModelConfig,
    pub rho: f64,
    pub phi: f64,
    #[serde(default)]
    pub lambda_rule: LambdaRule,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub seed: u64,
    /// Load Y from a matrix CSV instead of generating. Disables the
    /// ground-truth metrics in the summary.
    #[serde(default)]
    pub y_csv: Option<PathBuf>,
    /// Where to write the JSON summary (also printed to stdout).
    #[serde(default)]
    pub output: Option<PathBuf>,
}

/// Config for a (ρ, φ, trial) sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepConfig {
    pub model: ModelConfig,
    #[serde(default = "default_rho_grid")]
    pub rho_grid: Vec<f64>,
    #[serde(default = "default_phi_values")]
    pub phi_values: Vec<f64>,
    #[serde(default = "default_trials")]
    pub trials_per_cell: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub lambda_rule: LambdaRule,
    #[serde(default)]
    pub output_path: Option<PathBuf>,
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rho_grid.is_empty() {
            return Err(Error::invalid("rho_grid must be nonempty"));
        }
        if self.rho_grid.iter().any(|r| !(*r > 0.0)) {
            return Err(Error::invalid("rho_grid entries must be strictly positive"));
        }
        if self.phi_values.is_empty() {
            return Err(Error::invalid("phi_values must be nonempty"));
        }
        if self.trials_per_cell == 0 {
            return Err(Error::invalid("trials_per_cell must be >= 1"));
        }
        Ok(())
    }
}

pub fn load_json<T: serde::de::DeserializeOwned>(path: &std::path::Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Io(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| Error::invalid(format!("malformed config {}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grid_spans_the_stated_range() {
        let g = default_rho_grid();
        assert_eq!(g.len(), 13);
        assert!((g[0] - 1e-4).abs() < 1e-12);
        assert!((g[12] - 1e2).abs() < 1e-9);
        for w in g.windows(2) {
            assert!(w[1] > w[0]);
        }
    }

    #[test]
    fn manual_lambda_keeps_consistency_invariant() {
        let model = ModelConfig {
            m: 20,
            r: 5,
            n: 1000,
            sigma_v2: 0.01,
            domain: DomainSpec::linf_ball(5).unwrap(),
        };
        let p = LambdaRule::Manual(0.5).objective_params(&model, 1.0, 6.0).unwrap();
        assert!((p.lambda - 0.5).abs() < 1e-12);
        assert!((p.lambda / p.beta - p.sigma_v2).abs() < 1e-15);
        let q = LambdaRule::Prescribed.objective_params(&model, 1.0, 6.0).unwrap();
        assert!((q.lambda - 0.32).abs() < 1e-12);
    }

    #[test]
    fn lambda_rule_serde_forms() {
        let p: LambdaRule = serde_json::from_str("\"prescribed\"").unwrap();
        assert_eq!(p, LambdaRule::Prescribed);
        let m: LambdaRule = serde_json::from_str("{\"manual\": 0.25}").unwrap();
        assert_eq!(m, LambdaRule::Manual(0.25));
    }
}

//! Declarative run configuration: model family, observable, and per-stage
//! numeric parameters, with every default spelled out in the `Default`
//! impls below.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::HFamily;
use crate::linalg::Mat;
use crate::model::SystemModel;
use crate::models::{
    make_affine, make_functional_ar, make_matrix_model, AffineLaw, AffineSpec, FunctionalArSpec,
    MatrixModel, NoiseLaw, ObservableKind, PositiveMatrixSpec,
};

fn cfg_err(path: &str, detail: impl Into<String>) -> Error {
    Error::Config { path: path.to_string(), detail: detail.into() }
}

/// Model family section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ModelConfig {
    /// g1 x = x/2, g2 x = (x+1)/2 with equal weights.
    DoublingIfs,
    /// Z' = a Z + b, b ~ N(0, 1).
    Ar1Gaussian { a: f64 },
    /// Finite-support affine maps.
    AffineAtoms {
        dim: usize,
        #[serde(default = "one")]
        alpha: f64,
        atoms: Vec<AffineAtomConfig>,
        weights: Vec<f64>,
    },
    /// Fixed matrix, Gaussian shift.
    AffineGaussian {
        dim: usize,
        #[serde(default = "one")]
        alpha: f64,
        /// Row-major dim x dim matrix.
        a: Vec<f64>,
        sd: Vec<f64>,
    },
    /// gx = f(x) + b with a named fixed Lipschitz map.
    FunctionalAr {
        dim: usize,
        #[serde(default = "one")]
        alpha: f64,
        f: NamedMap,
        noise: NoiseLaw,
    },
    /// Finite set of allowable nonnegative matrices on the simplex.
    PositiveMatrix {
        dim: usize,
        /// Row-major dim x dim matrices.
        matrices: Vec<Vec<f64>>,
        weights: Vec<f64>,
        #[serde(default)]
        gamma1: Option<f64>,
        #[serde(default = "default_positivity_cap")]
        positivity_cap: usize,
    },
    /// Matrices with i.i.d. log-normal entries.
    PositiveMatrixLogNormal {
        dim: usize,
        mu: f64,
        sigma: f64,
        #[serde(default)]
        gamma1: Option<f64>,
    },
}

fn one() -> f64 {
    1.0
}

fn default_positivity_cap() -> usize {
    8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineAtomConfig {
    /// Row-major dim x dim matrix.
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    /// Map label u(g) readable by map-dependent observables.
    #[serde(default)]
    pub tag: f64,
}

/// Named fixed Lipschitz maps for the functional family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NamedMap {
    /// f(x) = 0.5 sin(x) componentwise; Lipschitz constant 0.5.
    HalfSin,
    /// f(x) = 0.8 tanh(x) componentwise; Lipschitz constant 0.8.
    ScaledTanh,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiagnosticsConfig {
    pub gamma0: f64,
    pub n0max: usize,
    pub nsamples: usize,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        DiagnosticsConfig { gamma0: 2.0, n0max: 4, nsamples: 50_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulationConfig {
    /// Cesaro chain length and replica count.
    pub cesaro_n: usize,
    pub cesaro_reps: usize,
    /// Ergodicity-decay horizon and path count.
    pub horizon: usize,
    pub decay_paths: usize,
    /// Start point of the decay run (defaults to x0).
    pub decay_start: Option<Vec<f64>>,
    /// Drift estimation length and paths.
    pub drift_n: usize,
    pub drift_paths: usize,
    /// Burn-in override; by default ceil(10 / -ln kappa0) from diagnostics.
    pub burn_in: Option<usize>,
    /// Sample trajectory length written to paths.csv.
    pub sample_path_n: usize,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            cesaro_n: 4096,
            cesaro_reps: 16,
            horizon: 30,
            decay_paths: 10_000,
            decay_start: None,
            drift_n: 65_536,
            drift_paths: 64,
            burn_in: None,
            sample_path_n: 1024,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VarianceConfig {
    pub n_grid: Vec<usize>,
    pub batch_paths: usize,
    pub poisson_pairs: usize,
    pub poisson_paths: usize,
    pub theta_samples: usize,
    pub neumann_cap: usize,
}

impl Default for VarianceConfig {
    fn default() -> Self {
        VarianceConfig {
            n_grid: vec![1024, 4096, 16384],
            batch_paths: 20_000,
            poisson_pairs: 16_384,
            poisson_paths: 64,
            theta_samples: 8,
            neumann_cap: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpectralConfig {
    pub nodes: usize,
    /// Symmetric eigenvalue table over [-t_max, t_max].
    pub t_max: f64,
    pub t_points: usize,
    /// Finite-difference step; default 0.05/sqrt(sigma2_prior + 1).
    pub fd_step: Option<f64>,
    pub taylor_orders: Vec<usize>,
    pub taylor_ladder: Vec<f64>,
    pub scan_ts: Vec<f64>,
    pub scan_margin: f64,
    /// Also write the dense P(0) matrix to operator_p0.csv.
    pub export_operator: bool,
}

impl Default for SpectralConfig {
    fn default() -> Self {
        SpectralConfig {
            nodes: 513,
            t_max: 0.5,
            t_points: 21,
            fd_step: None,
            taylor_orders: vec![1, 2],
            taylor_ladder: vec![0.2, 0.1, 0.05, 0.025],
            scan_ts: (1..=8).map(|k| 0.4 * k as f64).collect(),
            scan_margin: 1e-3,
            export_operator: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HarnessConfig {
    pub clt_n_grid: Vec<usize>,
    pub clt_paths: usize,
    pub local_h: HFamily,
    pub local_n_grid: Vec<usize>,
    pub local_paths: usize,
    pub arithmetic_override: bool,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        HarnessConfig {
            clt_n_grid: vec![256, 1024, 4096],
            clt_paths: 20_000,
            local_h: HFamily::GaussianBump,
            local_n_grid: vec![1024, 4096],
            local_paths: 50_000,
            arithmetic_override: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Config {
    pub model: ModelConfig,
    /// Ignored by matrix models, which always use the norm cocycle.
    #[serde(default)]
    pub observable: Option<ObservableKind>,
    #[serde(default)]
    pub diagnostics: DiagnosticsConfig,
    #[serde(default)]
    pub simulation: SimulationConfig,
    #[serde(default)]
    pub variance: VarianceConfig,
    #[serde(default)]
    pub spectral: SpectralConfig,
    #[serde(default)]
    pub harness: HarnessConfig,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

fn default_seed() -> u64 {
    0x5eed_2024
}

/// A built model plus the construction metadata the reports carry.
#[derive(Debug, Clone)]
pub struct BuiltModel {
    pub model: SystemModel,
    pub matrix_info: Option<MatrixInfo>,
    /// The observable kind, when the model has one (non-matrix families).
    pub observable: Option<ObservableKind>,
}

#[derive(Debug, Clone, Serialize)]
pub struct MatrixInfo {
    pub gamma1: f64,
    pub gamma1_from_hint: bool,
    pub positivity: crate::models::PositivityCheck,
    pub strictly_positive_atoms: usize,
}

impl From<&MatrixModel> for MatrixInfo {
    fn from(m: &MatrixModel) -> Self {
        MatrixInfo {
            gamma1: m.gamma1,
            gamma1_from_hint: m.gamma1_from_hint,
            positivity: m.positivity.clone(),
            strictly_positive_atoms: m.strictly_positive_atoms,
        }
    }
}

impl Config {
    pub fn from_json(text: &str) -> Result<Config> {
        let config: Config =
            serde_json::from_str(text).map_err(|e| cfg_err("<root>", e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.variance.n_grid.len() < 3 {
            return Err(cfg_err("variance.n_grid", "needs at least 3 entries"));
        }
        if self.variance.n_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(cfg_err("variance.n_grid", "must be strictly increasing"));
        }
        if !(self.diagnostics.gamma0 > 0.0) {
            return Err(cfg_err("diagnostics.gamma0", "must be > 0"));
        }
        if self.spectral.nodes < 9 {
            return Err(cfg_err("spectral.nodes", "needs at least 9 nodes"));
        }
        if self.harness.clt_n_grid.is_empty() || self.harness.local_n_grid.is_empty() {
            return Err(cfg_err("harness", "n grids must be nonempty"));
        }
        match &self.model {
            ModelConfig::AffineAtoms { dim, atoms, weights, alpha } => {
                if atoms.len() != weights.len() || atoms.is_empty() {
                    return Err(cfg_err("model.atoms", "atoms and weights must match"));
                }
                if !(*alpha > 0.0 && *alpha <= 1.0) {
                    return Err(cfg_err("model.alpha", "must lie in (0, 1]"));
                }
                for (i, atom) in atoms.iter().enumerate() {
                    if atom.a.len() != dim * dim || atom.b.len() != *dim {
                        return Err(cfg_err(
                            &format!("model.atoms[{i}]"),
                            "matrix must be dim x dim row-major and b of length dim",
                        ));
                    }
                }
            }
            ModelConfig::AffineGaussian { dim, a, sd, .. } => {
                if a.len() != dim * dim || sd.len() != *dim {
                    return Err(cfg_err("model", "a must be dim x dim and sd of length dim"));
                }
            }
            ModelConfig::PositiveMatrix { dim, matrices, weights, .. } => {
                if matrices.len() != weights.len() || matrices.is_empty() {
                    return Err(cfg_err("model.matrices", "matrices and weights must match"));
                }
                if matrices.iter().any(|m| m.len() != dim * dim) {
                    return Err(cfg_err("model.matrices", "each matrix must be dim x dim"));
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Construct the model, centering left at zero (the pipeline estimates
    /// the drift and re-centers).
    pub fn build_model(&self) -> Result<BuiltModel> {
        let xi = self
            .observable
            .clone()
            .unwrap_or(ObservableKind::Coordinate { index: 0 });
        match &self.model {
            ModelConfig::DoublingIfs => {
                let spec = AffineSpec::scalar_atoms(&[(0.5, 0.0), (0.5, 0.5)], &[0.5, 0.5]);
                Ok(BuiltModel {
                    model: make_affine(&spec, &xi)?,
                    matrix_info: None,
                    observable: Some(xi),
                })
            }
            ModelConfig::Ar1Gaussian { a } => {
                let spec = AffineSpec {
                    dim: 1,
                    alpha: 1.0,
                    law: AffineLaw::FixedGaussian { a: Mat::new(1, 1, vec![*a]), sd: vec![1.0] },
                };
                Ok(BuiltModel {
                    model: make_affine(&spec, &xi)?,
                    matrix_info: None,
                    observable: Some(xi),
                })
            }
            ModelConfig::AffineAtoms { dim, alpha, atoms, weights } => {
                let law_atoms: Vec<(Mat, Vec<f64>, f64)> = atoms
                    .iter()
                    .map(|c| (Mat::new(*dim, *dim, c.a.clone()), c.b.clone(), c.tag))
                    .collect();
                let spec = AffineSpec {
                    dim: *dim,
                    alpha: *alpha,
                    law: AffineLaw::Finite { atoms: law_atoms, weights: weights.clone() },
                };
                Ok(BuiltModel {
                    model: make_affine(&spec, &xi)?,
                    matrix_info: None,
                    observable: Some(xi),
                })
            }
            ModelConfig::AffineGaussian { dim, alpha, a, sd } => {
                let spec = AffineSpec {
                    dim: *dim,
                    alpha: *alpha,
                    law: AffineLaw::FixedGaussian {
                        a: Mat::new(*dim, *dim, a.clone()),
                        sd: sd.clone(),
                    },
                };
                Ok(BuiltModel {
                    model: make_affine(&spec, &xi)?,
                    matrix_info: None,
                    observable: Some(xi),
                })
            }
            ModelConfig::FunctionalAr { dim, alpha, f, noise } => {
                let (map, lip): (
                    std::sync::Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>,
                    f64,
                ) = match f {
                    NamedMap::HalfSin => (
                        std::sync::Arc::new(|x: &[f64]| {
                            x.iter().map(|v| 0.5 * v.sin()).collect()
                        }),
                        0.5,
                    ),
                    NamedMap::ScaledTanh => (
                        std::sync::Arc::new(|x: &[f64]| {
                            x.iter().map(|v| 0.8 * v.tanh()).collect()
                        }),
                        0.8,
                    ),
                };
                let spec = FunctionalArSpec {
                    dim: *dim,
                    alpha: *alpha,
                    f: map,
                    lip_f: lip,
                    noise: noise.clone(),
                };
                Ok(BuiltModel {
                    model: make_functional_ar(&spec, &xi)?,
                    matrix_info: None,
                    observable: Some(xi),
                })
            }
            ModelConfig::PositiveMatrix { dim, matrices, weights, gamma1, positivity_cap } => {
                let mats: Vec<Mat> =
                    matrices.iter().map(|m| Mat::new(*dim, *dim, m.clone())).collect();
                let mut spec = PositiveMatrixSpec::finite(*dim, mats, weights.clone());
                spec.positivity_search_cap = *positivity_cap;
                let built = make_matrix_model(&spec, *gamma1)?;
                Ok(BuiltModel {
                    matrix_info: Some(MatrixInfo::from(&built)),
                    model: built.model,
                    observable: None,
                })
            }
            ModelConfig::PositiveMatrixLogNormal { dim, mu, sigma, gamma1 } => {
                let spec = PositiveMatrixSpec {
                    dim: *dim,
                    law: crate::models::MatrixLaw::LogNormalEntries { mu: *mu, sigma: *sigma },
                    positivity_search_cap: 8,
                };
                let built = make_matrix_model(&spec, *gamma1)?;
                Ok(BuiltModel {
                    matrix_info: Some(MatrixInfo::from(&built)),
                    model: built.model,
                    observable: None,
                })
            }
        }
    }

    /// SHA-256 of the canonical JSON serialization.
    pub fn hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let canonical = serde_json::to_string(self).expect("config serializes");
        let mut hasher = Sha256::new();
        hasher.update(canonical.as_bytes());
        let digest = hasher.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// A ready-to-edit example configuration.
    pub fn example() -> Config {
        Config {
            model: ModelConfig::DoublingIfs,
            observable: Some(ObservableKind::Coordinate { index: 0 }),
            diagnostics: DiagnosticsConfig::default(),
            simulation: SimulationConfig::default(),
            variance: VarianceConfig::default(),
            spectral: SpectralConfig::default(),
            harness: HarnessConfig::default(),
            seed: default_seed(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn example_roundtrips() {
        let cfg = Config::example();
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        let back = Config::from_json(&text).unwrap();
        assert_eq!(cfg, back);
        assert_eq!(cfg.hash(), back.hash());
    }

    #[test]
    fn unknown_family_is_config_error() {
        let text = r#"{"model": {"family": "unknown_thing"}}"#;
        let err = Config::from_json(text);
        assert!(matches!(err, Err(Error::Config { .. })));
    }

    #[test]
    fn bad_grid_is_config_error() {
        let mut cfg = Config::example();
        cfg.variance.n_grid = vec![16, 8, 4];
        assert!(matches!(cfg.validate(), Err(Error::Config { .. })));
    }

    #[test]
    fn matrix_dimension_mismatch_rejected() {
        let text = r#"{
            "model": {"family": "positive_matrix", "dim": 2,
                      "matrices": [[2.0, 1.0, 1.0]], "weights": [1.0]}
        }"#;
        assert!(matches!(Config::from_json(text), Err(Error::Config { .. })));
    }

    #[test]
    fn builds_doubling_model() {
        let built = Config::example().build_model().unwrap();
        assert_eq!(built.model.dim, 1);
        assert!(built.model.pi.is_finite_support());
    }
}

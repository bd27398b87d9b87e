//! Named model constructors used by the config layer and the test suites.

use crate::error::Result;
use crate::linalg::Mat;
use crate::model::SystemModel;

use super::affine::{make_affine, AffineLaw, AffineSpec};
use super::matrix::{make_matrix_model, MatrixModel, PositiveMatrixSpec};
use super::observable::ObservableKind;

/// The doubling IFS on [0, 1]: g1 x = x/2 and g2 x = (x+1)/2 with equal
/// weights. Its invariant measure is Uniform[0, 1].
pub fn doubling_ifs(xi: ObservableKind) -> SystemModel {
    let spec = AffineSpec::scalar_atoms(&[(0.5, 0.0), (0.5, 0.5)], &[0.5, 0.5]);
    make_affine(&spec, &xi).expect("doubling IFS spec is valid")
}

/// AR(1) with fixed contraction a and standard Gaussian noise.
pub fn ar1_gaussian(a: f64, xi: ObservableKind) -> SystemModel {
    let spec = AffineSpec {
        dim: 1,
        alpha: 1.0,
        law: AffineLaw::FixedGaussian { a: Mat::new(1, 1, vec![a]), sd: vec![1.0] },
    };
    make_affine(&spec, &xi).expect("AR(1) spec is valid")
}

/// AR(1) with finite-support noise atoms.
pub fn ar1_noise_atoms(a: f64, noise: &[(f64, f64)], xi: ObservableKind) -> SystemModel {
    let atoms: Vec<(Mat, Vec<f64>, f64)> = noise
        .iter()
        .map(|&(b, u)| (Mat::new(1, 1, vec![a]), vec![b], u))
        .collect();
    let weights: Vec<f64> = vec![1.0 / noise.len() as f64; noise.len()];
    let spec = AffineSpec { dim: 1, alpha: 1.0, law: AffineLaw::Finite { atoms, weights } };
    make_affine(&spec, &xi).expect("AR(1) atom spec is valid")
}

/// Deterministic single-matrix model.
pub fn single_matrix_model(entries: Vec<f64>, dim: usize, gamma1: Option<f64>) -> Result<MatrixModel> {
    let spec = PositiveMatrixSpec::finite(dim, vec![Mat::new(dim, dim, entries)], vec![1.0]);
    make_matrix_model(&spec, gamma1)
}

/// Two-matrix model with equal weights.
pub fn two_matrix_model(
    m1: Vec<f64>,
    m2: Vec<f64>,
    dim: usize,
    gamma1: Option<f64>,
) -> Result<MatrixModel> {
    let spec = PositiveMatrixSpec::finite(
        dim,
        vec![Mat::new(dim, dim, m1), Mat::new(dim, dim, m2)],
        vec![0.5, 0.5],
    );
    make_matrix_model(&spec, gamma1)
}

//! Concrete model families: affine autoregressions, functional
//! autoregressions with a fixed Lipschitz map, and allowable positive-matrix
//! products on the simplex under the Hilbert metric.

mod affine;
mod builtin;
mod functional;
mod matrix;
mod observable;

pub use affine::{make_affine, AffineLaw, AffineSpec};
pub use builtin::{ar1_gaussian, ar1_noise_atoms, doubling_ifs, single_matrix_model, two_matrix_model};
pub use functional::{make_functional_ar, FunctionalArSpec, NoiseLaw};
pub use matrix::{
    cocycle, hilbert_distance, make_matrix_model, MatrixLaw, MatrixModel, PositiveMatrixSpec,
    PositivityCheck,
};
pub use observable::ObservableKind;

pub use crate::linalg::perron_radius;

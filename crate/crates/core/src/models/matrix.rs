//! Products of allowable positive matrices acting projectively on the
//! simplex with the Hilbert metric.
//!
//! A q x q nonnegative matrix is allowable when every row and every column
//! has a strictly positive entry. The action is gy = g(y)/||g(y)||_1 and the
//! additive cocycle a(g, y) = ln ||g(y)||_1 turns norm growth into a Birkhoff
//! sum; its long-run mean is the top Lyapunov exponent gamma_1. The raw
//! matrix product R_n is never formed: iterate the normalized point and
//! accumulate cocycle increments.

use std::collections::HashSet;
use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::model::{
    MapAction, MapDistribution, MapSample, Metric, ModelFamily, Observable, ObservableEnvelope,
    StatePoint, SystemModel,
};

/// Hilbert projective distance on the open simplex:
/// d_H(y, y') = -ln(m_H(y, y') m_H(y', y)) with m_H the minimum coordinate
/// ratio.
pub fn hilbert_distance(y: &StatePoint, y2: &StatePoint) -> Result<f64> {
    if y.coords.len() != y2.coords.len() {
        return Err(Error::RejectedInput("dimension mismatch".into()));
    }
    if y.coords.iter().any(|&c| c <= 0.0) || y2.coords.iter().any(|&c| c <= 0.0) {
        return Err(Error::BoundaryPoint);
    }
    let m_fwd = y
        .coords
        .iter()
        .zip(&y2.coords)
        .map(|(a, b)| a / b)
        .fold(f64::INFINITY, f64::min);
    let m_bwd = y2
        .coords
        .iter()
        .zip(&y.coords)
        .map(|(a, b)| a / b)
        .fold(f64::INFINITY, f64::min);
    Ok((-(m_fwd * m_bwd).ln()).max(0.0))
}

/// Additive cocycle a(g, y) = ln ||g(y)||_1.
pub fn cocycle(g: &MapSample, y: &StatePoint) -> Result<f64> {
    let m = match &g.action {
        MapAction::PositiveMatrix { m } => m,
        _ => return Err(Error::Unsupported("cocycle needs a positive-matrix map".into())),
    };
    if y.coords.iter().any(|&c| c <= 0.0) {
        return Err(Error::RejectedInput("nonpositive simplex coordinate".into()));
    }
    let w = m.matvec(&y.coords);
    let norm: f64 = w.iter().map(|v| v.abs()).sum();
    if norm == 0.0 {
        return Err(Error::DegenerateMatrix);
    }
    Ok(norm.ln())
}

/// ||g|| and v(g): max and min of ||g(y)||_1 over the simplex, i.e. the
/// extreme column sums.
pub fn norm_bounds(m: &Mat) -> (f64, f64) {
    let mut hi = f64::NEG_INFINITY;
    let mut lo = f64::INFINITY;
    for j in 0..m.cols {
        let cs: f64 = (0..m.rows).map(|i| m.get(i, j)).sum();
        hi = hi.max(cs);
        lo = lo.min(cs);
    }
    (hi, lo)
}

fn is_allowable(m: &Mat) -> bool {
    let rows_ok = (0..m.rows).all(|i| (0..m.cols).any(|j| m.get(i, j) > 0.0));
    let cols_ok = (0..m.cols).all(|j| (0..m.rows).any(|i| m.get(i, j) > 0.0));
    rows_ok && cols_ok && m.data.iter().all(|x| x.is_finite() && *x >= 0.0)
}

fn is_strictly_positive(m: &Mat) -> bool {
    m.data.iter().all(|&x| x > 0.0)
}

/// Law of the random matrix.
#[derive(Clone)]
pub enum MatrixLaw {
    Finite { matrices: Vec<Mat>, weights: Vec<f64> },
    /// Entries exp(mu + sigma N(0,1)), i.i.d. — strictly positive a.s.
    LogNormalEntries { mu: f64, sigma: f64 },
}

impl std::fmt::Debug for MatrixLaw {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MatrixLaw::Finite { matrices, .. } => write!(f, "Finite({} matrices)", matrices.len()),
            MatrixLaw::LogNormalEntries { mu, sigma } => {
                write!(f, "LogNormalEntries(mu={mu}, sigma={sigma})")
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct PositiveMatrixSpec {
    pub dim: usize,
    pub law: MatrixLaw,
    /// Cap on n0 when searching composite supports for a strictly positive
    /// matrix.
    pub positivity_search_cap: usize,
}

impl PositiveMatrixSpec {
    pub fn finite(dim: usize, matrices: Vec<Mat>, weights: Vec<f64>) -> Self {
        PositiveMatrixSpec {
            dim,
            law: MatrixLaw::Finite { matrices, weights },
            positivity_search_cap: 8,
        }
    }
}

/// Outcome of the search for a strictly positive matrix in the support of
/// some composite R_{n0}.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub enum PositivityCheck {
    Verified { n0: usize },
    Unverified { searched_up_to: usize },
}

/// A constructed matrix model with its provenance data.
#[derive(Debug, Clone)]
pub struct MatrixModel {
    pub model: SystemModel,
    pub gamma1: f64,
    pub gamma1_from_hint: bool,
    pub positivity: PositivityCheck,
    /// How many atoms (finite law) have all entries strictly positive.
    pub strictly_positive_atoms: usize,
}

fn positivity_pattern(m: &Mat) -> Vec<bool> {
    m.data.iter().map(|&x| x > 0.0).collect()
}

fn pattern_product(a: &[bool], b: &[bool], q: usize) -> Vec<bool> {
    let mut out = vec![false; q * q];
    for i in 0..q {
        for k in 0..q {
            if a[i * q + k] {
                for j in 0..q {
                    if b[k * q + j] {
                        out[i * q + j] = true;
                    }
                }
            }
        }
    }
    out
}

/// Breadth-first search over boolean positivity patterns of support
/// products, up to length `cap`.
fn search_positivity(matrices: &[Mat], q: usize, cap: usize) -> PositivityCheck {
    let base: Vec<Vec<bool>> = matrices.iter().map(positivity_pattern).collect();
    let all_positive = |p: &[bool]| p.iter().all(|&b| b);
    let mut level: Vec<Vec<bool>> = base.clone();
    let mut seen: HashSet<Vec<bool>> = level.iter().cloned().collect();
    for n0 in 1..=cap {
        if level.iter().any(|p| all_positive(p)) {
            return PositivityCheck::Verified { n0 };
        }
        let mut next: Vec<Vec<bool>> = Vec::new();
        for p in &level {
            for b in &base {
                let prod = pattern_product(b, p, q);
                if seen.insert(prod.clone()) {
                    next.push(prod);
                } else if all_positive(&prod) {
                    // already seen but positive: still a witness at n0 + 1
                    next.push(prod);
                }
            }
        }
        if next.is_empty() {
            // pattern semigroup exhausted without a positive element
            return PositivityCheck::Unverified { searched_up_to: n0 };
        }
        level = next;
    }
    PositivityCheck::Unverified { searched_up_to: cap }
}

fn matrix_sample(m: Mat) -> MapSample {
    // provisional lip; replaced by the sampled-pair bound after the model
    // metric exists
    MapSample { action: MapAction::PositiveMatrix { m }, lip: 1.0, disp: 0.0, tag: 0.0 }
}

/// Build the positive-matrix-product model over the Hilbert-metric simplex.
///
/// gamma_1 comes from the hint if given, otherwise from a long-run cocycle
/// average along a calibration chain (deterministic internal seed).
pub fn make_matrix_model(
    spec: &PositiveMatrixSpec,
    gamma1_hint: Option<f64>,
) -> Result<MatrixModel> {
    let q = spec.dim;
    if q < 2 {
        return Err(Error::Spec("matrix model needs dimension >= 2".into()));
    }
    let x0 = StatePoint::new(vec![1.0 / q as f64; q]);
    let metric = Metric::Hilbert;

    let state_sampler = Arc::new(move |rng: &mut rand_chacha::ChaCha8Rng| {
        // Dirichlet(1, ..., 1) via normalized exponentials, clamped interior
        let raw: Vec<f64> = (0..q).map(|_| -rng.gen::<f64>().max(1e-300).ln()).collect();
        let s: f64 = raw.iter().sum();
        StatePoint::new(raw.into_iter().map(|x| x / s).collect())
            .validate_simplex()
            .expect("dirichlet draw is interior")
    });

    let mut strictly_positive_atoms = 0usize;
    let (pi, positivity) = match &spec.law {
        MatrixLaw::Finite { matrices, weights } => {
            for m in matrices {
                if m.rows != q || m.cols != q {
                    return Err(Error::Spec("matrix dimension does not match the model".into()));
                }
                if !is_allowable(m) {
                    return Err(Error::Spec(
                        "matrix is not allowable: a row or column has no positive entry".into(),
                    ));
                }
            }
            strictly_positive_atoms = matrices.iter().filter(|m| is_strictly_positive(m)).count();
            let atoms: Vec<MapSample> = matrices.iter().cloned().map(matrix_sample).collect();
            let pi = MapDistribution::finite(atoms, weights.clone())?;
            let positivity = search_positivity(matrices, q, spec.positivity_search_cap);
            (pi, positivity)
        }
        MatrixLaw::LogNormalEntries { mu, sigma } => {
            let (mu, sigma) = (*mu, *sigma);
            let sampler = Arc::new(move |rng: &mut rand_chacha::ChaCha8Rng| {
                use rand_distr::{Distribution, StandardNormal};
                let data: Vec<f64> = (0..q * q)
                    .map(|_| {
                        let z: f64 = StandardNormal.sample(rng);
                        (mu + sigma * z).exp()
                    })
                    .collect();
                matrix_sample(Mat::new(q, q, data))
            });
            let pi = MapDistribution::Generative { sampler, label: "log-normal-entries".into() };
            (pi, PositivityCheck::Verified { n0: 1 })
        }
    };

    // raw cocycle with its norm-bound envelope: r = 0, s = 0, S = 1,
    // R(g) = 2(|ln ||g|| | + |ln v(g)|)
    let raw: Arc<dyn Fn(&MapSample, &StatePoint) -> f64 + Send + Sync> =
        Arc::new(|g: &MapSample, y: &StatePoint| cocycle(g, y).unwrap_or(f64::NAN));
    let r_fn = Arc::new(|g: &MapSample| match &g.action {
        MapAction::PositiveMatrix { m } => {
            let (hi, lo) = norm_bounds(m);
            2.0 * (hi.ln().abs() + lo.ln().abs())
        }
        _ => f64::INFINITY,
    });
    let envelope = ObservableEnvelope { r: 0.0, s: 0.0, r_fn, s_fn: Arc::new(|_| 1.0) };
    let observable = Observable { raw, envelope, centering: 0.0 };

    let mut model = SystemModel {
        dim: q,
        metric,
        family: ModelFamily::PositiveMatrix,
        pi,
        x0,
        observable,
        state_sampler,
        positivity_search_cap: spec.positivity_search_cap,
    };

    // replace provisional Lipschitz bounds by sampled-pair estimates
    // (clamped at 1: every allowable matrix is a weak contraction)
    if let MapDistribution::Finite { atoms, weights } = model.pi.clone() {
        let mut rng = crate::rng::stream(0x11b_0ff);
        let mut refit = Vec::with_capacity(atoms.len());
        for atom in atoms {
            let lip = model.empirical_lip(&atom, 1000, &mut rng)?.min(1.0);
            let disp = model.displacement(&atom)?;
            refit.push(MapSample { lip, disp, ..atom });
        }
        model.pi = MapDistribution::finite(refit, weights)?;
    }

    let (gamma1, from_hint) = match gamma1_hint {
        Some(g) => (g, true),
        None => (calibrate_gamma1(&model)?, false),
    };
    model.observable.centering = gamma1;

    Ok(MatrixModel { model, gamma1, gamma1_from_hint: from_hint, positivity, strictly_positive_atoms })
}

/// Long-run cocycle mean along a single calibration chain.
fn calibrate_gamma1(model: &SystemModel) -> Result<f64> {
    let mut rng = crate::rng::stream(0xc0c1e);
    let mut z = model.x0.clone();
    let mut scratch = Vec::with_capacity(model.dim);
    for _ in 0..1024 {
        let g = model.pi.draw(&mut rng);
        g.step_in_place(&mut z, &mut scratch)?;
    }
    let n = 131_072usize;
    let mut acc = 0.0f64;
    for _ in 0..n {
        let g = model.pi.draw(&mut rng);
        acc += cocycle(&g, &z)?;
        g.step_in_place(&mut z, &mut scratch)?;
    }
    Ok(acc / n as f64)
}

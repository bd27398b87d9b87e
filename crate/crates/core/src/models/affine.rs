//! Generalized affine autoregressions: Z_{n+1} = a(Y_{n+1}) Z_n + b(Y_{n+1})
//! on R^q with the metric d(x, y) = ||x - y||^alpha and x0 = 0.
//!
//! The Lipschitz constant and displacement are exact here: c(g) = ||a(g)||^alpha
//! (operator norm) and d(g x0, x0) = ||b(g)||^alpha.

use std::sync::Arc;

use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::model::{
    MapAction, MapDistribution, MapSample, Metric, ModelFamily, StatePoint, SystemModel,
};

use super::observable::ObservableKind;

/// Law of the random affine map (a(g), b(g)).
#[derive(Clone)]
pub enum AffineLaw {
    /// Finite support: atoms (a_i, b_i, u_i) with weights; u_i is the map
    /// tag read by map-dependent observables.
    Finite {
        atoms: Vec<(Mat, Vec<f64>, f64)>,
        weights: Vec<f64>,
    },
    /// Fixed contraction matrix, Gaussian noise b ~ N(0, diag(sd^2)).
    FixedGaussian { a: Mat, sd: Vec<f64> },
}

impl std::fmt::Debug for AffineLaw {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AffineLaw::Finite { atoms, .. } => write!(f, "Finite({} atoms)", atoms.len()),
            AffineLaw::FixedGaussian { .. } => write!(f, "FixedGaussian"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct AffineSpec {
    pub dim: usize,
    pub alpha: f64,
    pub law: AffineLaw,
}

impl AffineSpec {
    pub fn scalar_atoms(pairs: &[(f64, f64)], weights: &[f64]) -> Self {
        let atoms = pairs
            .iter()
            .map(|&(a, b)| (Mat::new(1, 1, vec![a]), vec![b], 0.0))
            .collect();
        AffineSpec {
            dim: 1,
            alpha: 1.0,
            law: AffineLaw::Finite { atoms, weights: weights.to_vec() },
        }
    }

    fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::Spec("affine model needs dimension >= 1".into()));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::Spec(format!("metric exponent alpha = {} not in (0, 1]", self.alpha)));
        }
        if let AffineLaw::Finite { atoms, .. } = &self.law {
            for (a, b, _) in atoms {
                if a.rows != self.dim || a.cols != self.dim || b.len() != self.dim {
                    return Err(Error::Spec("atom dimensions do not match the model".into()));
                }
                if a.data.iter().any(|x| !x.is_finite()) || b.iter().any(|x| !x.is_finite()) {
                    return Err(Error::Spec("nonfinite affine atom".into()));
                }
            }
        }
        Ok(())
    }
}

fn affine_sample(a: Mat, b: Vec<f64>, tag: f64, alpha: f64) -> MapSample {
    let lip = a.op_norm2().powf(alpha);
    let disp = b.iter().map(|x| x * x).sum::<f64>().sqrt().powf(alpha);
    MapSample { action: MapAction::Affine { a, b }, lip, disp, tag }
}

/// Build the affine-autoregression model.
pub fn make_affine(spec: &AffineSpec, xi: &ObservableKind) -> Result<SystemModel> {
    spec.validate()?;
    let q = spec.dim;
    let alpha = spec.alpha;
    let metric = Metric::Euclidean { alpha };
    let x0 = StatePoint::new(vec![0.0; q]);

    let pi = match &spec.law {
        AffineLaw::Finite { atoms, weights } => {
            let samples: Vec<MapSample> = atoms
                .iter()
                .map(|(a, b, u)| affine_sample(a.clone(), b.clone(), *u, alpha))
                .collect();
            MapDistribution::finite(samples, weights.clone())?
        }
        AffineLaw::FixedGaussian { a, sd } => {
            if a.rows != q || a.cols != q || sd.len() != q {
                return Err(Error::Spec("fixed-gaussian law dimensions do not match".into()));
            }
            let a = a.clone();
            let sd = sd.clone();
            let lip = a.op_norm2().powf(alpha);
            let sampler = Arc::new(move |rng: &mut rand_chacha::ChaCha8Rng| {
                let b: Vec<f64> = sd
                    .iter()
                    .map(|&s| s * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng))
                    .collect();
                let disp = b.iter().map(|x| x * x).sum::<f64>().sqrt().powf(alpha);
                MapSample {
                    action: MapAction::Affine { a: a.clone(), b: b.clone() },
                    lip,
                    disp,
                    tag: b[0],
                }
            });
            MapDistribution::Generative { sampler, label: "affine-fixed-gaussian".into() }
        }
    };

    // spread for the spot-check state sampler: rough stationary scale
    let (mean_lip, mean_disp) = match &pi {
        MapDistribution::Finite { atoms, weights } => {
            let ml = atoms.iter().zip(weights).map(|(g, w)| w * g.lip).sum::<f64>();
            let md = atoms.iter().zip(weights).map(|(g, w)| w * g.disp).sum::<f64>();
            (ml, md)
        }
        MapDistribution::Generative { sampler, .. } => {
            let mut rng = crate::rng::stream(0x5eed);
            let mut ml = 0.0;
            let mut md = 0.0;
            for _ in 0..64 {
                let g = sampler(&mut rng);
                ml += g.lip / 64.0;
                md += g.disp / 64.0;
            }
            (ml, md)
        }
    };
    let scale = (1.0 + mean_disp) / (1.0 - mean_lip.min(0.9)).max(0.1);
    let state_sampler = Arc::new(move |rng: &mut rand_chacha::ChaCha8Rng| {
        let coords: Vec<f64> = (0..q)
            .map(|_| scale * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng))
            .collect();
        StatePoint::new(coords)
    });

    let observable = xi.build(&x0, &metric)?;
    Ok(SystemModel {
        dim: q,
        metric,
        family: ModelFamily::Affine,
        pi,
        x0,
        observable,
        state_sampler,
        positivity_search_cap: 0,
    })
}

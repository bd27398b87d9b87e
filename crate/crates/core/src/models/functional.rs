//! Functional autoregressions gx = f(x) + b_g with a fixed Lipschitz map f.

use std::sync::Arc;

use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::model::{
    MapAction, MapDistribution, MapSample, Metric, ModelFamily, StatePoint, SystemModel,
};

use super::observable::ObservableKind;

/// Noise law for the additive shift b_g.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseLaw {
    Gaussian { sd: Vec<f64> },
    Atoms { atoms: Vec<Vec<f64>>, weights: Vec<f64> },
}

#[derive(Clone)]
pub struct FunctionalArSpec {
    pub dim: usize,
    pub alpha: f64,
    /// The fixed map f with its known Lipschitz constant (Euclidean norm).
    pub f: Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>,
    pub lip_f: f64,
    pub noise: NoiseLaw,
}

impl std::fmt::Debug for FunctionalArSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "FunctionalArSpec(dim={}, lip_f={})", self.dim, self.lip_f)
    }
}

/// Build the functional-autoregression model. Every sampled map shares the
/// exact Lipschitz bound lip_f^alpha; displacements are exact per sample.
pub fn make_functional_ar(spec: &FunctionalArSpec, xi: &ObservableKind) -> Result<SystemModel> {
    if spec.dim == 0 {
        return Err(Error::Spec("functional model needs dimension >= 1".into()));
    }
    if !(spec.alpha > 0.0 && spec.alpha <= 1.0) {
        return Err(Error::Spec(format!("metric exponent alpha = {} not in (0, 1]", spec.alpha)));
    }
    if !spec.lip_f.is_finite() || spec.lip_f < 0.0 {
        return Err(Error::Spec("functional model needs a finite Lipschitz constant".into()));
    }
    let q = spec.dim;
    let alpha = spec.alpha;
    let metric = Metric::Euclidean { alpha };
    let x0 = StatePoint::new(vec![0.0; q]);
    let lip = spec.lip_f.powf(alpha);
    let f0 = (spec.f)(&x0.coords);

    let mk_sample = {
        let f = spec.f.clone();
        let f0 = f0.clone();
        move |b: Vec<f64>| {
            // d(g x0, x0) = ||f(0) + b||^alpha
            let disp = f0
                .iter()
                .zip(&b)
                .map(|(u, v)| (u + v) * (u + v))
                .sum::<f64>()
                .sqrt()
                .powf(alpha);
            let tag = b[0];
            MapSample { action: MapAction::Func { f: f.clone(), b }, lip, disp, tag }
        }
    };

    let pi = match &spec.noise {
        NoiseLaw::Atoms { atoms, weights } => {
            let samples: Vec<MapSample> = atoms.iter().map(|b| mk_sample(b.clone())).collect();
            MapDistribution::finite(samples, weights.clone())?
        }
        NoiseLaw::Gaussian { sd } => {
            if sd.len() != q {
                return Err(Error::Spec("noise dimension does not match".into()));
            }
            let sd = sd.clone();
            let sampler = Arc::new(move |rng: &mut rand_chacha::ChaCha8Rng| {
                let b: Vec<f64> = sd
                    .iter()
                    .map(|&s| s * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng))
                    .collect();
                mk_sample(b)
            });
            MapDistribution::Generative { sampler, label: "functional-ar".into() }
        }
    };

    let scale = (1.0 + f0.iter().map(|x| x * x).sum::<f64>().sqrt())
        / (1.0 - spec.lip_f.min(0.9)).max(0.1);
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
        family: ModelFamily::FunctionalAr,
        pi,
        x0,
        observable,
        state_sampler,
        positivity_search_cap: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn functional_ar_shares_exact_lip() {
        let spec = FunctionalArSpec {
            dim: 1,
            alpha: 1.0,
            f: Arc::new(|x: &[f64]| vec![0.5 * x[0].sin()]),
            lip_f: 0.5,
            noise: NoiseLaw::Gaussian { sd: vec![1.0] },
        };
        let model = make_functional_ar(&spec, &ObservableKind::Coordinate { index: 0 }).unwrap();
        let mut rng = crate::rng::stream(11);
        let g = model.pi.sample(&mut rng);
        assert_relative_eq!(g.lip, 0.5);
        // empirical bound over pairs stays below the declared constant
        let measured = model.max_contraction_ratio(&g, 200, &mut rng).unwrap();
        assert!(measured <= 0.5 + 1e-9, "measured {measured}");
    }
}

//! Built-in observable selectors with their growth envelopes.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::model::{MapSample, Metric, Observable, ObservableEnvelope, StatePoint};

/// Observable families available to affine and functional models.
///
/// The matrix family always uses the norm cocycle and ignores this selector.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ObservableKind {
    /// xi(g, x) = x_i.
    Coordinate { index: usize },
    /// xi(g, x) = x_i - chi(g x)_i: telescopes, so sigma^2 = 0.
    Coboundary { index: usize },
    /// xi(g, x) = u(g), the tag attached to each sampled map.
    MapValue,
    /// xi(g, x) = u(g) * x_i (the product form of the degeneracy criterion).
    ProductMapCoordinate { index: usize },
}

impl ObservableKind {
    pub(crate) fn build(&self, x0: &StatePoint, metric: &Metric) -> Result<Observable> {
        let alpha = match metric {
            Metric::Euclidean { alpha } => *alpha,
            Metric::Hilbert => {
                return Err(Error::Spec(
                    "matrix models use the built-in cocycle observable".into(),
                ))
            }
        };
        let inv_alpha = 1.0 / alpha;
        // exponents in the metric d = ||.||^alpha
        let r = inv_alpha;
        let s = (1.0 - alpha) / alpha;
        let raw: Arc<dyn Fn(&MapSample, &StatePoint) -> f64 + Send + Sync>;
        let envelope;
        match self {
            ObservableKind::Coordinate { index } => {
                let i = *index;
                let c0 = 1.0 + x0.coords[i].abs();
                raw = Arc::new(move |_g, x| x.coords[i]);
                envelope = ObservableEnvelope::constant(r, s, c0, 1.0);
            }
            ObservableKind::Coboundary { index } => {
                let i = *index;
                raw = Arc::new(move |g: &MapSample, x: &StatePoint| {
                    let gx = g.apply(x).map(|p| p.coords[i]).unwrap_or(f64::NAN);
                    x.coords[i] - gx
                });
                let r_fn = Arc::new(move |g: &MapSample| {
                    1.0 + g.lip.powf(inv_alpha) + g.disp.powf(inv_alpha)
                });
                let s_fn = Arc::new(move |g: &MapSample| 1.0 + g.lip.powf(inv_alpha));
                envelope = ObservableEnvelope { r, s, r_fn, s_fn };
            }
            ObservableKind::MapValue => {
                raw = Arc::new(|g: &MapSample, _x| g.tag);
                envelope = ObservableEnvelope {
                    r: 0.0,
                    s: 0.0,
                    r_fn: Arc::new(|g: &MapSample| g.tag.abs()),
                    s_fn: Arc::new(|_| 0.0),
                };
            }
            ObservableKind::ProductMapCoordinate { index } => {
                let i = *index;
                let c0 = 1.0 + x0.coords[i].abs();
                raw = Arc::new(move |g: &MapSample, x| g.tag * x.coords[i]);
                envelope = ObservableEnvelope {
                    r,
                    s,
                    r_fn: Arc::new(move |g: &MapSample| g.tag.abs() * c0),
                    s_fn: Arc::new(|g: &MapSample| g.tag.abs()),
                };
            }
        }
        Ok(Observable { raw, envelope, centering: 0.0 })
    }

    /// The (u, chi) factorization, if this observable has product form.
    pub fn product_form(&self) -> Option<usize> {
        match self {
            ObservableKind::ProductMapCoordinate { index } => Some(*index),
            _ => None,
        }
    }
}

//! Model abstraction shared by every estimator: a metric state space, a
//! random-mapping distribution, and an observable with its growth envelope.
//!
//! The scalar quantities attached to a sampled map g are its Lipschitz
//! bound c(g), the displacement d(g x0, x0), and the derived weights
//! delta_tilde(g) = 1 + c(g) + d(g x0, x0) and
//! delta_lambda(g) = max{c(g), 1} + lambda d(g x0, x0).

use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::Mat;

/// Tolerance for simplex-sum and weight-sum validation.
pub const SUM_TOL: f64 = 1e-12;

/// Interior clamp for simplex coordinates.
pub const SIMPLEX_CLAMP: f64 = 1e-14;

/// A point of the state space.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct StatePoint {
    pub coords: Vec<f64>,
}

impl StatePoint {
    pub fn new(coords: Vec<f64>) -> Self {
        StatePoint { coords }
    }

    pub fn scalar(x: f64) -> Self {
        StatePoint { coords: vec![x] }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn is_finite(&self) -> bool {
        self.coords.iter().all(|c| c.is_finite())
    }

    /// Validate strict positivity and unit sum, clamping coordinates away
    /// from the boundary at `SIMPLEX_CLAMP`.
    pub fn validate_simplex(&self) -> Result<StatePoint> {
        if !self.is_finite() {
            return Err(Error::RejectedInput("nonfinite simplex coordinates".into()));
        }
        if self.coords.iter().any(|&c| c <= 0.0) {
            return Err(Error::RejectedInput("nonpositive simplex coordinate".into()));
        }
        let s: f64 = self.coords.iter().sum();
        if (s - 1.0).abs() > SUM_TOL {
            return Err(Error::RejectedInput(format!("simplex coordinates sum to {s}, not 1")));
        }
        let clamped: Vec<f64> = self.coords.iter().map(|&c| c.max(SIMPLEX_CLAMP)).collect();
        let s: f64 = clamped.iter().sum();
        Ok(StatePoint::new(clamped.into_iter().map(|c| c / s).collect()))
    }
}

/// Concrete action of a sampled map on the state space.
#[derive(Clone)]
pub enum MapAction {
    /// x -> A x + b.
    Affine { a: Mat, b: Vec<f64> },
    /// x -> f(x) + b with a fixed Lipschitz map f.
    Func {
        f: Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>,
        b: Vec<f64>,
    },
    /// y -> g(y) / ||g(y)||_1 on the positive simplex.
    PositiveMatrix { m: Mat },
    /// Composite, applied left to right.
    Chain(Vec<MapAction>),
}

impl std::fmt::Debug for MapAction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MapAction::Affine { a, b } => write!(f, "Affine(q={}, b={:?})", a.rows, b),
            MapAction::Func { b, .. } => write!(f, "Func(b={b:?})"),
            MapAction::PositiveMatrix { m } => write!(f, "PositiveMatrix(q={})", m.rows),
            MapAction::Chain(parts) => write!(f, "Chain(len={})", parts.len()),
        }
    }
}

impl MapAction {
    /// Write the image of `x` into `out` (cleared first). Allocation-free
    /// for affine and matrix actions once the buffer has capacity.
    fn apply_coords_into(&self, x: &[f64], out: &mut Vec<f64>) -> Result<()> {
        match self {
            MapAction::Affine { a, b } => {
                a.matvec_into(x, out);
                for (yi, bi) in out.iter_mut().zip(b) {
                    *yi += bi;
                }
                Ok(())
            }
            MapAction::Func { f, b } => {
                let y = f(x);
                out.clear();
                out.extend(y.iter().zip(b).map(|(yi, bi)| yi + bi));
                Ok(())
            }
            MapAction::PositiveMatrix { m } => {
                if x.iter().any(|&c| c <= 0.0) {
                    return Err(Error::RejectedInput("nonpositive simplex coordinate".into()));
                }
                m.matvec_into(x, out);
                let norm: f64 = out.iter().map(|v| v.abs()).sum();
                if norm == 0.0 {
                    return Err(Error::DegenerateMatrix);
                }
                for v in out.iter_mut() {
                    *v /= norm;
                }
                Ok(())
            }
            MapAction::Chain(parts) => {
                let mut cur = x.to_vec();
                for part in parts {
                    part.apply_coords_into(&cur.clone(), &mut cur)?;
                }
                out.clear();
                out.extend_from_slice(&cur);
                Ok(())
            }
        }
    }

    fn apply_coords(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(x.len());
        self.apply_coords_into(x, &mut out)?;
        Ok(out)
    }
}

/// One drawn mapping g with its Lipschitz bound and displacement.
#[derive(Debug, Clone)]
pub struct MapSample {
    pub action: MapAction,
    /// Upper bound on the Lipschitz constant c(g) in the model metric.
    pub lip: f64,
    /// d(g x0, x0).
    pub disp: f64,
    /// Scalar label u(g) readable by map-dependent observables.
    pub tag: f64,
}

impl MapSample {
    /// Apply the map; for matrix models the image is renormalized to the
    /// simplex.
    pub fn apply(&self, x: &StatePoint) -> Result<StatePoint> {
        if !x.is_finite() {
            return Err(Error::RejectedInput("nonfinite state coordinates".into()));
        }
        let y = self.action.apply_coords(&x.coords)?;
        if y.iter().any(|c| !c.is_finite()) {
            return Err(Error::RejectedInput("map produced nonfinite coordinates".into()));
        }
        Ok(StatePoint::new(y))
    }

    /// Advance `z` in place through this map, using `scratch` as the image
    /// buffer; allocation-free on the hot path.
    pub fn step_in_place(&self, z: &mut StatePoint, scratch: &mut Vec<f64>) -> Result<()> {
        self.action.apply_coords_into(&z.coords, scratch)?;
        if scratch.iter().any(|c| !c.is_finite()) {
            return Err(Error::RejectedInput("map produced nonfinite coordinates".into()));
        }
        std::mem::swap(&mut z.coords, scratch);
        Ok(())
    }

    /// delta_tilde(g) = 1 + c(g) + d(g x0, x0).
    pub fn delta_tilde(&self) -> f64 {
        1.0 + self.lip + self.disp
    }

    /// delta_lambda(g) = max{c(g), 1} + lambda d(g x0, x0), lambda in (0, 1].
    pub fn delta_lambda(&self, lambda0: f64) -> Result<f64> {
        check_lambda(lambda0)?;
        Ok(self.lip.max(1.0) + lambda0 * self.disp)
    }
}

fn check_lambda(lambda0: f64) -> Result<()> {
    if !(lambda0 > 0.0 && lambda0 <= 1.0) {
        return Err(Error::Parameter(format!("lambda0 = {lambda0} not in (0, 1]")));
    }
    Ok(())
}

/// Distance on the state space.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum Metric {
    /// d(x, y) = ||x - y||_2^alpha with alpha in (0, 1].
    Euclidean { alpha: f64 },
    /// Hilbert projective metric on the interior of the simplex.
    Hilbert,
}

impl Metric {
    pub fn distance(&self, x: &StatePoint, y: &StatePoint) -> Result<f64> {
        match self {
            Metric::Euclidean { alpha } => {
                let d2: f64 = x
                    .coords
                    .iter()
                    .zip(&y.coords)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                Ok(d2.sqrt().powf(*alpha))
            }
            Metric::Hilbert => crate::models::hilbert_distance(x, y),
        }
    }
}

/// Which family built the model; controls composite-constant rules and
/// operator-grid support.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum ModelFamily {
    Affine,
    FunctionalAr,
    PositiveMatrix,
}

/// Distribution of the random mapping.
#[derive(Clone)]
pub enum MapDistribution {
    Finite { atoms: Vec<MapSample>, weights: Vec<f64> },
    Generative {
        sampler: Arc<dyn Fn(&mut ChaCha8Rng) -> MapSample + Send + Sync>,
        label: String,
    },
}

impl std::fmt::Debug for MapDistribution {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MapDistribution::Finite { atoms, .. } => write!(f, "Finite({} atoms)", atoms.len()),
            MapDistribution::Generative { label, .. } => write!(f, "Generative({label})"),
        }
    }
}

impl MapDistribution {
    pub fn finite(atoms: Vec<MapSample>, weights: Vec<f64>) -> Result<Self> {
        if atoms.is_empty() || atoms.len() != weights.len() {
            return Err(Error::Spec("finite support needs matching atoms and weights".into()));
        }
        if weights.iter().any(|&w| w <= 0.0) {
            return Err(Error::Spec("finite-support weights must be positive".into()));
        }
        let s: f64 = weights.iter().sum();
        if (s - 1.0).abs() > SUM_TOL {
            return Err(Error::Spec(format!("weights sum to {s}, not 1")));
        }
        Ok(MapDistribution::Finite { atoms, weights })
    }

    pub fn is_finite_support(&self) -> bool {
        matches!(self, MapDistribution::Finite { .. })
    }

    pub fn support_size(&self) -> Option<usize> {
        match self {
            MapDistribution::Finite { atoms, .. } => Some(atoms.len()),
            MapDistribution::Generative { .. } => None,
        }
    }

    pub fn sample(&self, rng: &mut ChaCha8Rng) -> MapSample {
        match self.draw(rng) {
            Drawn::Atom(g) => g.clone(),
            Drawn::Fresh(g) => g,
        }
    }

    /// Draw a map without cloning finite-support atoms.
    pub fn draw(&self, rng: &mut ChaCha8Rng) -> Drawn<'_> {
        match self {
            MapDistribution::Finite { atoms, weights } => {
                let u: f64 = rng.gen();
                let mut acc = 0.0;
                for (atom, w) in atoms.iter().zip(weights) {
                    acc += w;
                    if u < acc {
                        return Drawn::Atom(atom);
                    }
                }
                Drawn::Atom(atoms.last().unwrap())
            }
            MapDistribution::Generative { sampler, .. } => Drawn::Fresh(sampler(rng)),
        }
    }
}

/// A drawn map: a borrowed finite-support atom or a freshly generated
/// sample.
pub enum Drawn<'a> {
    Atom(&'a MapSample),
    Fresh(MapSample),
}

impl std::ops::Deref for Drawn<'_> {
    type Target = MapSample;

    fn deref(&self) -> &MapSample {
        match self {
            Drawn::Atom(g) => g,
            Drawn::Fresh(g) => g,
        }
    }
}

/// Growth/regularity envelope of the observable: |xi(g, x)| <=
/// R(g)(1 + d(x, x0))^r and |xi(g, x) - xi(g, y)| <=
/// S(g) d(x, y)(1 + d(x, x0) + d(y, x0))^s.
#[derive(Clone)]
pub struct ObservableEnvelope {
    pub r: f64,
    pub s: f64,
    pub r_fn: Arc<dyn Fn(&MapSample) -> f64 + Send + Sync>,
    pub s_fn: Arc<dyn Fn(&MapSample) -> f64 + Send + Sync>,
}

impl std::fmt::Debug for ObservableEnvelope {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "ObservableEnvelope(r={}, s={})", self.r, self.s)
    }
}

impl ObservableEnvelope {
    pub fn constant(r: f64, s: f64, r_val: f64, s_val: f64) -> Self {
        ObservableEnvelope {
            r,
            s,
            r_fn: Arc::new(move |_| r_val),
            s_fn: Arc::new(move |_| s_val),
        }
    }
}

/// The observable xi(g, x) together with its envelope and centering.
#[derive(Clone)]
pub struct Observable {
    pub raw: Arc<dyn Fn(&MapSample, &StatePoint) -> f64 + Send + Sync>,
    pub envelope: ObservableEnvelope,
    /// Mean m under pi (x) nu; subtracted so the working observable is
    /// centered.
    pub centering: f64,
}

/// A complete model: state space, map distribution, base point, observable.
#[derive(Clone)]
pub struct SystemModel {
    pub dim: usize,
    pub metric: Metric,
    pub family: ModelFamily,
    pub pi: MapDistribution,
    pub x0: StatePoint,
    pub observable: Observable,
    /// Draws representative interior states, used by sampled-pair bounds
    /// and envelope spot checks.
    pub state_sampler: Arc<dyn Fn(&mut ChaCha8Rng) -> StatePoint + Send + Sync>,
    /// Cap used when searching the support of composite draws for a
    /// strictly positive matrix (matrix family only).
    pub positivity_search_cap: usize,
}

impl std::fmt::Debug for SystemModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "SystemModel(dim={}, metric={:?}, family={:?}, pi={:?})",
            self.dim, self.metric, self.family, self.pi
        )
    }
}

impl SystemModel {
    /// Centered observable value xi(g, x) - m.
    pub fn xi(&self, g: &MapSample, x: &StatePoint) -> Result<f64> {
        let v = (self.observable.raw)(g, x) - self.observable.centering;
        if !v.is_finite() {
            return Err(Error::Evaluation {
                step: 0,
                detail: format!("xi produced {v} at x = {:?}", x.coords),
            });
        }
        Ok(v)
    }

    /// Uncentered observable value.
    pub fn xi_raw(&self, g: &MapSample, x: &StatePoint) -> Result<f64> {
        Ok(self.xi(g, x)? + self.observable.centering)
    }

    pub fn distance(&self, x: &StatePoint, y: &StatePoint) -> Result<f64> {
        self.metric.distance(x, y)
    }

    /// p_lambda(x) = 1 + lambda d(x, x0), lambda in (0, 1].
    pub fn p_lambda(&self, x: &StatePoint, lambda0: f64) -> Result<f64> {
        check_lambda(lambda0)?;
        Ok(1.0 + lambda0 * self.distance(x, &self.x0)?)
    }

    /// Replace the stored centering (used once the drift has been
    /// estimated).
    pub fn with_centering(&self, m: f64) -> SystemModel {
        let mut out = self.clone();
        out.observable.centering = m;
        out
    }

    pub fn sample_state(&self, rng: &mut ChaCha8Rng) -> StatePoint {
        (self.state_sampler)(rng)
    }

    /// Whether the composite Lipschitz constant of a product of maps is
    /// exact (affine family) or a sampled bound.
    pub fn composite_lip_exact(&self) -> bool {
        matches!(self.family, ModelFamily::Affine)
    }

    /// Compose maps left to right (g_n .. g_1 applied as g_1 first) into a
    /// single `MapSample` with the family composite-constant rule.
    ///
    /// `pair_rng` drives the sampled-pair bound for families without an
    /// exact rule; pass a substream for reproducibility.
    pub fn compose(&self, maps: &[MapSample], pair_rng: &mut ChaCha8Rng) -> Result<MapSample> {
        assert!(!maps.is_empty());
        let alpha = match self.metric {
            Metric::Euclidean { alpha } => alpha,
            Metric::Hilbert => 1.0,
        };
        match self.family {
            ModelFamily::Affine => {
                // (h o g)(x) = A_h (A_g x + b_g) + b_h
                let (mut a, mut b) = match &maps[0].action {
                    MapAction::Affine { a, b } => (a.clone(), b.clone()),
                    _ => return Err(Error::Spec("affine model with non-affine map".into())),
                };
                for g in &maps[1..] {
                    let (ah, bh) = match &g.action {
                        MapAction::Affine { a, b } => (a, b),
                        _ => return Err(Error::Spec("affine model with non-affine map".into())),
                    };
                    a = ah.matmul(&a);
                    let mut nb = ah.matvec(&b);
                    for (x, y) in nb.iter_mut().zip(bh) {
                        *x += y;
                    }
                    b = nb;
                }
                let lip = a.op_norm2().powf(alpha);
                let disp = b.iter().map(|x| x * x).sum::<f64>().sqrt().powf(alpha);
                Ok(MapSample { action: MapAction::Affine { a, b }, lip, disp, tag: 0.0 })
            }
            ModelFamily::PositiveMatrix => {
                let mut m = match &maps[0].action {
                    MapAction::PositiveMatrix { m } => m.clone(),
                    _ => return Err(Error::Spec("matrix model with non-matrix map".into())),
                };
                for g in &maps[1..] {
                    let mh = match &g.action {
                        MapAction::PositiveMatrix { m } => m,
                        _ => return Err(Error::Spec("matrix model with non-matrix map".into())),
                    };
                    m = mh.matmul(&m);
                }
                let action = MapAction::PositiveMatrix { m };
                let sample = MapSample { action, lip: 1.0, disp: 0.0, tag: 0.0 };
                let disp = self.displacement(&sample)?;
                let lip = self.empirical_lip(&sample, 1000, pair_rng)?.min(1.0);
                Ok(MapSample { lip, disp, ..sample })
            }
            ModelFamily::FunctionalAr => {
                let action = MapAction::Chain(maps.iter().map(|g| g.action.clone()).collect());
                let sample = MapSample { action, lip: 0.0, disp: 0.0, tag: 0.0 };
                let disp = self.displacement(&sample)?;
                let lip = self.empirical_lip(&sample, 1000, pair_rng)?;
                Ok(MapSample { lip, disp, ..sample })
            }
        }
    }

    /// Exact displacement d(g x0, x0).
    pub fn displacement(&self, g: &MapSample) -> Result<f64> {
        let img = g.apply(&self.x0)?;
        self.distance(&img, &self.x0)
    }

    /// Sampled upper bound on c(g): max distance ratio over `pairs` random
    /// state pairs, inflated by 5%. Degenerate pairs are skipped.
    pub fn empirical_lip(
        &self,
        g: &MapSample,
        pairs: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<f64> {
        let mut max_ratio = 0.0f64;
        for _ in 0..pairs {
            let x = self.sample_state(rng);
            let y = self.sample_state(rng);
            let dxy = self.distance(&x, &y)?;
            if dxy == 0.0 {
                continue;
            }
            let gx = g.apply(&x)?;
            let gy = g.apply(&y)?;
            let ratio = self.distance(&gx, &gy)? / dxy;
            max_ratio = max_ratio.max(ratio);
        }
        Ok(max_ratio * 1.05)
    }

    /// Maximum sampled contraction ratio d(gx, gy)/d(x, y) without
    /// inflation, for contraction reports.
    pub fn max_contraction_ratio(
        &self,
        g: &MapSample,
        pairs: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<f64> {
        let mut max_ratio = 0.0f64;
        for _ in 0..pairs {
            let x = self.sample_state(rng);
            let y = self.sample_state(rng);
            let dxy = self.distance(&x, &y)?;
            if dxy == 0.0 {
                continue;
            }
            let ratio = self.distance(&g.apply(&x)?, &g.apply(&y)?)? / dxy;
            max_ratio = max_ratio.max(ratio);
        }
        Ok(max_ratio)
    }
}

/// Spot-check report for the sampled model invariants: the Lipschitz bound,
/// the p_lambda ratio bound, and the RS envelope.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ValidationReport {
    pub pairs_checked: usize,
    pub max_lip_violation: f64,
    pub max_ratio_violation: f64,
    pub max_envelope_r_violation: f64,
    pub max_envelope_s_violation: f64,
    pub ok: bool,
}

/// Check the model invariants on sampled (g, x, y, lambda) tuples.
pub fn validate_model(model: &SystemModel, pairs: usize, seed: u64) -> Result<ValidationReport> {
    let mut rng = crate::rng::stream(seed);
    let mut max_lip = 0.0f64;
    let mut max_ratio = 0.0f64;
    let mut max_env_r = 0.0f64;
    let mut max_env_s = 0.0f64;
    for _ in 0..pairs {
        let g = model.pi.sample(&mut rng);
        let x = model.sample_state(&mut rng);
        let y = model.sample_state(&mut rng);
        let dxy = model.distance(&x, &y)?;
        let gx = g.apply(&x)?;
        let gy = g.apply(&y)?;
        if dxy > 0.0 {
            let ratio = model.distance(&gx, &gy)? / dxy;
            max_lip = max_lip.max(ratio - g.lip * (1.0 + 1e-9));
        }
        let lambda: f64 = rng.gen_range(1e-3..=1.0);
        let p_x = model.p_lambda(&x, lambda)?;
        let p_gx = model.p_lambda(&gx, lambda)?;
        max_ratio = max_ratio.max(p_gx / p_x - g.delta_lambda(lambda)? - 1e-9);

        let xi_x = model.xi(&g, &x)?;
        let xi_y = model.xi(&g, &y)?;
        let dx0 = model.distance(&x, &model.x0)?;
        let dy0 = model.distance(&y, &model.x0)?;
        let env = &model.observable.envelope;
        // the centering shifts the raw bound by at most |m|
        let m_abs = model.observable.centering.abs();
        let r_bound = ((env.r_fn)(&g) + m_abs) * (1.0 + dx0).powf(env.r);
        let s_bound = (env.s_fn)(&g) * dxy * (1.0 + dx0 + dy0).powf(env.s);
        max_env_r = max_env_r.max(xi_x.abs() - r_bound - 1e-9);
        max_env_s = max_env_s.max((xi_x - xi_y).abs() - s_bound - 1e-9);
    }
    Ok(ValidationReport {
        pairs_checked: pairs,
        max_lip_violation: max_lip.max(0.0),
        max_ratio_violation: max_ratio.max(0.0),
        max_envelope_r_violation: max_env_r.max(0.0),
        max_envelope_s_violation: max_env_s.max(0.0),
        ok: max_lip <= 0.0 && max_ratio <= 0.0 && max_env_r <= 0.0 && max_env_s <= 0.0,
    })
}

//! Trajectory generation, partial sums, Cesaro invariant-measure
//! estimation, geometric-ergodicity decay, and drift/Lyapunov estimation.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{ModelFamily, StatePoint, SystemModel};
use crate::models::cocycle;
use crate::par;
use crate::rng;
use crate::stats;

/// One trajectory Z_0..Z_n with running sums S_0..S_n of the centered
/// observable. For matrix models the raw cocycle total is kept as well.
#[derive(Debug, Clone, Serialize)]
pub struct PathSample {
    pub states: Vec<StatePoint>,
    pub sums: Vec<f64>,
    pub seed: u64,
    pub cocycle_total: Option<f64>,
}

/// Weighted point set approximating the invariant measure.
#[derive(Debug, Clone, Serialize)]
pub struct EmpiricalMeasure {
    pub points: Vec<StatePoint>,
    pub weights: Vec<f64>,
    pub n_used: usize,
    pub origin: MeasureOrigin,
    /// Cumulative weights for O(log n) draws.
    #[serde(skip)]
    cum: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasureOrigin {
    Cesaro,
    Longrun,
    Resampled,
}

impl EmpiricalMeasure {
    pub fn new(
        points: Vec<StatePoint>,
        weights: Vec<f64>,
        n_used: usize,
        origin: MeasureOrigin,
    ) -> Self {
        let mut cum = Vec::with_capacity(weights.len());
        let mut acc = 0.0;
        for w in &weights {
            acc += w;
            cum.push(acc);
        }
        EmpiricalMeasure { points, weights, n_used, origin, cum }
    }

    /// Draw a support point by weight via binary search on the prefix sums.
    pub fn draw_point(&self, u: f64) -> &StatePoint {
        let total = *self.cum.last().expect("nonempty measure");
        let target = u.clamp(0.0, 1.0) * total;
        let idx = self.cum.partition_point(|&c| c < target).min(self.points.len() - 1);
        &self.points[idx]
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Weighted mean of a function of the state.
    pub fn integrate<F: Fn(&StatePoint) -> f64>(&self, f: F) -> f64 {
        self.points.iter().zip(&self.weights).map(|(x, w)| w * f(x)).sum()
    }

    pub fn mean_coord(&self, i: usize) -> f64 {
        self.integrate(|x| x.coords[i])
    }

    pub fn var_coord(&self, i: usize) -> f64 {
        let m = self.mean_coord(i);
        self.integrate(|x| (x.coords[i] - m).powi(2))
    }

    /// Weighted quantile of coordinate `i`.
    pub fn quantile_coord(&self, i: usize, q: f64) -> f64 {
        let mut pairs: Vec<(f64, f64)> = self
            .points
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| (x.coords[i], *w))
            .collect();
        pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let mut acc = 0.0;
        for (v, w) in &pairs {
            acc += w;
            if acc >= q {
                return *v;
            }
        }
        pairs.last().map(|p| p.0).unwrap_or(f64::NAN)
    }

    /// Uniform-weight subsample of at most `k` points, drawn by weight.
    pub fn subsample(&self, k: usize, seed: u64) -> EmpiricalMeasure {
        if self.len() <= k {
            return self.clone();
        }
        let mut r = rng::stream(seed);
        use rand::Rng;
        let mut points = Vec::with_capacity(k);
        for _ in 0..k {
            let u: f64 = r.gen();
            points.push(self.draw_point(u).clone());
        }
        let w = 1.0 / k as f64;
        EmpiricalMeasure::new(points, vec![w; k], self.n_used, MeasureOrigin::Resampled)
    }

    /// Weighted support of coordinate `i` as (value, weight) pairs.
    pub fn coord_support(&self, i: usize) -> Vec<(f64, f64)> {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| (x.coords[i], *w))
            .collect()
    }
}

/// Initial distribution of Z_0.
#[derive(Clone)]
pub enum InitDist {
    /// Point mass at the model base point (the Cesaro construction).
    X0,
    Point(StatePoint),
    Empirical(Arc<EmpiricalMeasure>),
}

impl std::fmt::Debug for InitDist {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            InitDist::X0 => write!(f, "X0"),
            InitDist::Point(p) => write!(f, "Point({:?})", p.coords),
            InitDist::Empirical(m) => write!(f, "Empirical({} pts)", m.len()),
        }
    }
}

impl InitDist {
    pub fn draw(&self, model: &SystemModel, r: &mut rand_chacha::ChaCha8Rng) -> StatePoint {
        match self {
            InitDist::X0 => model.x0.clone(),
            InitDist::Point(p) => p.clone(),
            InitDist::Empirical(m) => {
                use rand::Rng;
                let u: f64 = r.gen();
                let mut acc = 0.0;
                for (x, w) in m.points.iter().zip(&m.weights) {
                    acc += w;
                    if u < acc {
                        return x.clone();
                    }
                }
                m.points.last().unwrap().clone()
            }
        }
    }
}

fn step_err(step: usize) -> impl FnOnce(Error) -> Error {
    move |e| match e {
        Error::Evaluation { detail, .. } => Error::Evaluation { step, detail },
        other => other,
    }
}

/// Run one chain from `z0` for `n` steps, recording states and centered
/// partial sums. Deterministic in (model, z0, n, seed).
pub fn run_chain(model: &SystemModel, z0: &StatePoint, n: usize, seed: u64) -> Result<PathSample> {
    if n == 0 {
        return Err(Error::Parameter("chain length n must be >= 1".into()));
    }
    let mut r = rng::stream(seed);
    let mut states = Vec::with_capacity(n + 1);
    let mut sums = Vec::with_capacity(n + 1);
    let is_matrix = model.family == ModelFamily::PositiveMatrix;
    let mut cocycle_acc = 0.0f64;
    let mut z = z0.clone();
    states.push(z.clone());
    sums.push(0.0);
    for k in 1..=n {
        let g = model.pi.draw(&mut r);
        let inc = model.xi(&g, &z).map_err(step_err(k))?;
        if is_matrix {
            cocycle_acc += cocycle(&g, &z).map_err(step_err(k))?;
        }
        z = g.apply(&z).map_err(step_err(k))?;
        states.push(z.clone());
        sums.push(sums[k - 1] + inc);
    }
    Ok(PathSample {
        states,
        sums,
        seed,
        cocycle_total: if is_matrix { Some(cocycle_acc) } else { None },
    })
}

/// Replay the chain and confirm the stored increments: S_k - S_{k-1} must
/// equal the observable at the replayed (Y_k, Z_{k-1}) to 1e-12.
pub fn verify_increments(model: &SystemModel, path: &PathSample) -> Result<bool> {
    let n = path.sums.len() - 1;
    let replay = run_chain(model, &path.states[0], n, path.seed)?;
    for k in 1..=n {
        let stored = path.sums[k] - path.sums[k - 1];
        let replayed = replay.sums[k] - replay.sums[k - 1];
        if (stored - replayed).abs() > 1e-12 {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Terminal pairs (Z_n, S_n) over independent paths on disjoint seed
/// substreams.
pub fn sample_terminal(
    model: &SystemModel,
    init: &InitDist,
    n: usize,
    paths: usize,
    seed: u64,
) -> Result<Vec<(StatePoint, f64)>> {
    if paths == 0 {
        return Err(Error::Parameter("paths must be >= 1".into()));
    }
    let results = par::map_indexed(paths, |p| -> Result<(StatePoint, f64)> {
        let mut r = rng::substream(seed, p as u64);
        let mut z = init.draw(model, &mut r);
        let mut scratch = Vec::with_capacity(model.dim);
        let mut s = 0.0f64;
        for k in 1..=n {
            let g = model.pi.draw(&mut r);
            s += model.xi(&g, &z).map_err(step_err(k))?;
            g.step_in_place(&mut z, &mut scratch).map_err(step_err(k))?;
        }
        Ok((z, s))
    });
    results.into_iter().collect()
}

/// Cesaro occupation measure: `reps` chains from x0, uniform weights on the
/// first n states of each (Z_0..Z_{n-1}).
pub fn cesaro_measure(
    model: &SystemModel,
    n: usize,
    seed: u64,
    reps: usize,
) -> Result<EmpiricalMeasure> {
    if n == 0 || reps == 0 {
        return Err(Error::Parameter("cesaro measure needs n >= 1 and reps >= 1".into()));
    }
    let chains = par::map_indexed(reps, |rep| -> Result<Vec<StatePoint>> {
        let mut r = rng::substream(seed, rep as u64);
        let mut z = model.x0.clone();
        let mut scratch = Vec::with_capacity(model.dim);
        let mut states = Vec::with_capacity(n);
        for k in 0..n {
            states.push(z.clone());
            let g = model.pi.draw(&mut r);
            g.step_in_place(&mut z, &mut scratch).map_err(step_err(k + 1))?;
        }
        Ok(states)
    });
    let mut points = Vec::with_capacity(n * reps);
    for chain in chains {
        points.extend(chain?);
    }
    let total = points.len();
    Ok(EmpiricalMeasure::new(
        points,
        vec![1.0 / total as f64; total],
        total,
        MeasureOrigin::Cesaro,
    ))
}

/// Cesaro-invariance spot check: for random bounded-Lipschitz test
/// functions f, nu(f) should match nu(Pf) within pooled noise.
#[derive(Debug, Clone, Serialize)]
pub struct InvarianceReport {
    pub max_abs_z: f64,
    /// (nu(f), nu(Pf), z) per test function.
    pub entries: Vec<(f64, f64, f64)>,
}

pub fn invariance_check(
    model: &SystemModel,
    nu_hat: &EmpiricalMeasure,
    test_fns: usize,
    step_samples: usize,
    seed: u64,
) -> Result<InvarianceReport> {
    use rand::Rng;
    let mut setup = rng::stream(seed);
    let mut entries = Vec::new();
    let mut max_z = 0.0f64;
    for t in 0..test_fns {
        let freq: f64 = setup.gen_range(0.3..3.0);
        let phase: f64 = setup.gen_range(0.0..std::f64::consts::TAU);
        let f = move |x: &StatePoint| (freq * x.coords[0] + phase).cos();

        let nu_f = nu_hat.integrate(f);
        // block means over the stored support estimate the chain noise
        let blocks = 16.min(nu_hat.len());
        let block_size = nu_hat.len() / blocks;
        let mut block_means = Vec::new();
        for b in 0..blocks {
            let lo = b * block_size;
            let hi = if b + 1 == blocks { nu_hat.len() } else { lo + block_size };
            let m: f64 = nu_hat.points[lo..hi].iter().map(f).sum::<f64>() / (hi - lo) as f64;
            block_means.push(m);
        }
        let se_nu = stats::Estimate::from_samples(&block_means).se;

        // one pi-step from every support point
        let vals = par::map_indexed(nu_hat.len(), |j| -> Result<(f64, f64)> {
            let mut r = rng::substream(seed ^ 0xf00d, (t * nu_hat.len() + j) as u64);
            let x = &nu_hat.points[j];
            let mut acc = 0.0;
            let mut acc2 = 0.0;
            for _ in 0..step_samples {
                let g = model.pi.draw(&mut r);
                let v = f(&g.apply(x)?);
                acc += v;
                acc2 += v * v;
            }
            let mean = acc / step_samples as f64;
            let var = (acc2 / step_samples as f64 - mean * mean).max(0.0);
            Ok((mean, var))
        });
        let mut nu_pf = 0.0;
        let mut var_pf = 0.0;
        for (w, v) in nu_hat.weights.iter().zip(vals) {
            let (mean, var) = v?;
            nu_pf += w * mean;
            var_pf += w * w * var / step_samples as f64;
        }
        let pooled = (se_nu * se_nu + var_pf).sqrt();
        let z = if pooled > 0.0 { (nu_f - nu_pf).abs() / pooled } else { 0.0 };
        max_z = max_z.max(z);
        entries.push((nu_f, nu_pf, z));
    }
    Ok(InvarianceReport { max_abs_z: max_z, entries })
}

/// Empirical Wasserstein-1 between a time-n marginal and the reference
/// measure: exact sorted-CDF distance in 1D, max over random unit-vector
/// projections (a lower bound on W1) in higher dimension.
fn marginal_w1(
    samples: &[StatePoint],
    reference: &EmpiricalMeasure,
    dim: usize,
    proj_seed: u64,
) -> f64 {
    if dim == 1 {
        let a: Vec<(f64, f64)> =
            samples.iter().map(|x| (x.coords[0], 1.0 / samples.len() as f64)).collect();
        let b = reference.coord_support(0);
        return stats::wasserstein1_weighted(&a, &b);
    }
    let mut r = rng::stream(proj_seed);
    let mut best: f64 = 0.0;
    for _ in 0..20 {
        let dir: Vec<f64> = (0..dim)
            .map(|_| {
                use rand_distr::{Distribution, StandardNormal};
                <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut r)
            })
            .collect();
        let norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let project = |x: &StatePoint| -> f64 {
            x.coords.iter().zip(&dir).map(|(a, b)| a * b).sum::<f64>() / norm
        };
        let a: Vec<(f64, f64)> =
            samples.iter().map(|x| (project(x), 1.0 / samples.len() as f64)).collect();
        let b: Vec<(f64, f64)> = reference
            .points
            .iter()
            .zip(&reference.weights)
            .map(|(x, w)| (project(x), *w))
            .collect();
        best = best.max(stats::wasserstein1_weighted(&a, &b));
    }
    best
}

/// Per-step Wasserstein decay toward the reference measure, with the
/// fitted log-slope and the rate implied by the contraction diagnostics.
#[derive(Debug, Clone, Serialize)]
pub struct DecayReport {
    pub entries: Vec<(usize, f64)>,
    /// Least-squares slope of ln W1_n over steps above the noise floor.
    pub fitted_slope: f64,
    /// (1/2) ln kappa0 when kappa0 was supplied.
    pub reference_slope: Option<f64>,
    /// W1 between two independent resamples of the reference at the same
    /// sample size; entries at or below 3x this are noise.
    pub noise_floor: f64,
    pub points_fitted: usize,
}

pub fn ergodicity_decay(
    model: &SystemModel,
    mu0: &InitDist,
    nu_hat: &EmpiricalMeasure,
    horizon: usize,
    paths: usize,
    seed: u64,
    kappa0: Option<f64>,
) -> Result<DecayReport> {
    if nu_hat.is_empty() {
        return Err(Error::Parameter("reference measure is empty".into()));
    }
    if horizon == 0 || paths == 0 {
        return Err(Error::Parameter("horizon and paths must be >= 1".into()));
    }
    // all marginals come from one path ensemble
    let trajectories = par::map_indexed(paths, |p| -> Result<Vec<StatePoint>> {
        let mut r = rng::substream(seed, p as u64);
        let mut z = mu0.draw(model, &mut r);
        let mut scratch = Vec::with_capacity(model.dim);
        let mut states = Vec::with_capacity(horizon);
        for k in 1..=horizon {
            let g = model.pi.draw(&mut r);
            g.step_in_place(&mut z, &mut scratch).map_err(step_err(k))?;
            states.push(z.clone());
        }
        Ok(states)
    });
    let trajectories: Vec<Vec<StatePoint>> = trajectories.into_iter().collect::<Result<_>>()?;

    let entries: Vec<(usize, f64)> = (1..=horizon)
        .map(|n| {
            let marginal: Vec<StatePoint> =
                trajectories.iter().map(|t| t[n - 1].clone()).collect();
            (n, marginal_w1(&marginal, nu_hat, model.dim, seed ^ (n as u64)))
        })
        .collect();

    // noise floor: two independent resamples of the reference
    let floor_a = nu_hat.subsample(paths, seed ^ 0xaaaa);
    let floor_b = nu_hat.subsample(paths, seed ^ 0xbbbb);
    let noise_floor = marginal_w1(&floor_a.points, &floor_b, model.dim, seed ^ 0xcccc)
        .max(f64::MIN_POSITIVE);

    let fit_points: Vec<(f64, f64)> = entries
        .iter()
        .filter(|(_, w)| *w > 3.0 * noise_floor)
        .map(|(n, w)| (*n as f64, w.ln()))
        .collect();
    let fitted_slope = if fit_points.len() >= 2 {
        let xs: Vec<f64> = fit_points.iter().map(|p| p.0).collect();
        let ys: Vec<f64> = fit_points.iter().map(|p| p.1).collect();
        stats::fit_line(&xs, &ys).1
    } else {
        f64::NAN
    };

    Ok(DecayReport {
        entries,
        fitted_slope,
        reference_slope: kappa0.map(|k| 0.5 * k.ln()),
        noise_floor,
        points_fitted: fit_points.len(),
    })
}

/// Long-run mean of the uncentered observable (the drift m; the Lyapunov
/// exponent gamma_1 for matrix models), with batch-means standard error.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct DriftEstimate {
    pub m_hat: f64,
    pub se: f64,
    pub steps_used: usize,
}

pub fn estimate_drift(
    model: &SystemModel,
    n: usize,
    paths: usize,
    burn_in: usize,
    seed: u64,
) -> Result<DriftEstimate> {
    if n == 0 || paths == 0 {
        return Err(Error::Parameter("drift estimation needs n >= 1 and paths >= 1".into()));
    }
    let per_path = par::map_indexed(paths, |p| -> Result<(f64, f64)> {
        let mut r = rng::substream(seed, p as u64);
        let mut z = model.x0.clone();
        let mut scratch = Vec::with_capacity(model.dim);
        for k in 0..burn_in {
            let g = model.pi.draw(&mut r);
            g.step_in_place(&mut z, &mut scratch).map_err(step_err(k + 1))?;
        }
        let mut incs = Vec::with_capacity(n);
        for k in 0..n {
            let g = model.pi.draw(&mut r);
            incs.push(model.xi_raw(&g, &z).map_err(step_err(k + 1))?);
            g.step_in_place(&mut z, &mut scratch).map_err(step_err(k + 1))?;
        }
        let mean = incs.iter().sum::<f64>() / n as f64;
        let se = stats::batch_means_se(&incs, 32);
        Ok((mean, se))
    });
    let per_path: Vec<(f64, f64)> = per_path.into_iter().collect::<Result<_>>()?;
    let means: Vec<f64> = per_path.iter().map(|p| p.0).collect();
    let m_hat = means.iter().sum::<f64>() / means.len() as f64;
    let se = if paths > 1 {
        stats::Estimate::from_samples(&means).se
    } else {
        per_path[0].1
    };
    Ok(DriftEstimate { m_hat, se, steps_used: n * paths })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::MapAction;
    use crate::models::{ar1_gaussian, doubling_ifs, single_matrix_model, ObservableKind};
    use approx::assert_relative_eq;

    fn halving_model() -> SystemModel {
        let spec = crate::models::AffineSpec::scalar_atoms(&[(0.5, 0.0)], &[1.0]);
        crate::models::make_affine(&spec, &ObservableKind::Coordinate { index: 0 }).unwrap()
    }

    #[test]
    fn run_chain_deterministic_halving() {
        let model = halving_model();
        let path = run_chain(&model, &StatePoint::scalar(1.0), 3, 9).unwrap();
        let xs: Vec<f64> = path.states.iter().map(|s| s.coords[0]).collect();
        assert_eq!(xs, vec![1.0, 0.5, 0.25, 0.125]);
        // xi = x: S_3 = 1 + 0.5 + 0.25
        assert_relative_eq!(path.sums[3], 1.75);

        let again = run_chain(&model, &StatePoint::scalar(1.0), 3, 9).unwrap();
        assert_eq!(path.states, again.states);
        assert_eq!(path.sums, again.sums);
    }

    #[test]
    fn increments_replay() {
        let model = doubling_ifs(ObservableKind::Coordinate { index: 0 });
        let path = run_chain(&model, &StatePoint::scalar(0.3), 64, 1234).unwrap();
        assert!(verify_increments(&model, &path).unwrap());
    }

    #[test]
    fn terminal_deterministic_model_identical_pairs() {
        let model = halving_model();
        let pairs =
            sample_terminal(&model, &InitDist::Point(StatePoint::scalar(1.0)), 5, 8, 3).unwrap();
        for (z, s) in &pairs {
            assert_relative_eq!(z.coords[0], pairs[0].0.coords[0]);
            assert_relative_eq!(*s, pairs[0].1);
        }
    }

    #[test]
    fn cesaro_doubling_mean_near_half() {
        let model = doubling_ifs(ObservableKind::Coordinate { index: 0 });
        let nu = cesaro_measure(&model, 2048, 77, 8).unwrap();
        let m = nu.mean_coord(0);
        // invariant law is U[0, 1]
        assert!((m - 0.5).abs() < 0.02, "mean {m}");
        let v = nu.var_coord(0);
        assert!((v - 1.0 / 12.0).abs() < 0.01, "var {v}");
    }

    #[test]
    fn cesaro_ar1_stationary_variance() {
        let model = ar1_gaussian(0.5, ObservableKind::Coordinate { index: 0 });
        let nu = cesaro_measure(&model, 4096, 19, 16).unwrap();
        let v = nu.var_coord(0);
        assert!((v - 4.0 / 3.0).abs() < 0.06, "var {v}");
    }

    #[test]
    fn cesaro_deterministic_contraction_concentrates() {
        let model = halving_model();
        let nu = cesaro_measure(&model, 256, 5, 4).unwrap();
        // fixed point is 0; after burn-in most mass sits near it
        let near: f64 = nu
            .points
            .iter()
            .zip(&nu.weights)
            .filter(|(x, _)| x.coords[0].abs() < 1e-3)
            .map(|(_, w)| w)
            .sum();
        assert!(near > 0.9, "mass near fixed point {near}");
    }

    #[test]
    fn cesaro_invariance_doubling() {
        let model = doubling_ifs(ObservableKind::Coordinate { index: 0 });
        let nu = cesaro_measure(&model, 4096, 21, 8).unwrap();
        let report = invariance_check(&model, &nu, 10, 8, 55).unwrap();
        assert!(report.max_abs_z <= 3.0, "max z {}", report.max_abs_z);
    }

    #[test]
    fn decay_deterministic_halving_exact() {
        // gx = x/2 from delta_1 toward delta_0: W1_n = 2^-n exactly
        let model = halving_model();
        let nu = EmpiricalMeasure::new(
            vec![StatePoint::scalar(0.0)],
            vec![1.0],
            1,
            MeasureOrigin::Longrun,
        );
        let report = ergodicity_decay(
            &model,
            &InitDist::Point(StatePoint::scalar(1.0)),
            &nu,
            10,
            4,
            13,
            Some(0.25),
        )
        .unwrap();
        for (n, w) in &report.entries {
            assert_relative_eq!(*w, 2f64.powi(-(*n as i32)), epsilon = 1e-12);
        }
        assert_relative_eq!(report.fitted_slope, -std::f64::consts::LN_2, epsilon = 1e-6);
        assert_relative_eq!(report.reference_slope.unwrap(), 0.5 * 0.25f64.ln());
    }

    #[test]
    fn decay_from_invariant_is_noise() {
        let model = doubling_ifs(ObservableKind::Coordinate { index: 0 });
        let nu = cesaro_measure(&model, 4096, 3, 4).unwrap();
        let report = ergodicity_decay(
            &model,
            &InitDist::Empirical(Arc::new(nu.clone())),
            &nu,
            8,
            2048,
            91,
            None,
        )
        .unwrap();
        for (_, w) in &report.entries {
            assert!(*w < 6.0 * report.noise_floor, "w = {w} floor = {}", report.noise_floor);
        }
    }

    #[test]
    fn drift_identity_matrix_zero() {
        let built = single_matrix_model(vec![1.0, 0.0, 0.0, 1.0], 2, None).unwrap();
        let d = estimate_drift(&built.model, 512, 2, 16, 4).unwrap();
        assert_relative_eq!(d.m_hat, 0.0);
    }

    #[test]
    fn drift_single_matrix_is_lyapunov() {
        let built = single_matrix_model(vec![2.0, 1.0, 1.0, 2.0], 2, None).unwrap();
        let d = estimate_drift(&built.model, 4096, 1, 64, 4).unwrap();
        assert_relative_eq!(d.m_hat, 3.0f64.ln(), epsilon = 1e-9);
    }

    #[test]
    fn drift_doubling_uncentered_near_half() {
        let model = doubling_ifs(ObservableKind::Coordinate { index: 0 });
        let d = estimate_drift(&model, 4096, 16, 128, 6).unwrap();
        assert!((d.m_hat - 0.5).abs() <= 3.0 * d.se + 0.01, "m_hat {}", d.m_hat);
    }

    #[test]
    fn matrix_cocycle_total_matches_renormalized_product() {
        let built = single_matrix_model(vec![2.0, 1.0, 0.5, 2.0], 2, Some(0.0)).unwrap();
        let y0 = StatePoint::new(vec![0.3, 0.7]);
        let n = 40;
        let path = run_chain(&built.model, &y0, n, 17).unwrap();
        // recompute by repeated normalized multiplication
        let m = match &built.model.pi {
            crate::model::MapDistribution::Finite { atoms, .. } => match &atoms[0].action {
                MapAction::PositiveMatrix { m } => m.clone(),
                _ => panic!(),
            },
            _ => panic!(),
        };
        let mut w = y0.coords.clone();
        let mut log_norm = 0.0f64;
        for _ in 0..n {
            w = m.matvec(&w);
            let s: f64 = w.iter().map(|v| v.abs()).sum();
            log_norm += s.ln();
            for v in w.iter_mut() {
                *v /= s;
            }
        }
        assert_relative_eq!(path.cocycle_total.unwrap(), log_norm, epsilon = 1e-8);
    }
}

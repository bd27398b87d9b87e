//! Moment and contraction-in-mean integrals of the map distribution, and
//! the hypothesis checker behind every limit-theorem route.
//!
//! The three integrals, with delta_tilde(g) = 1 + c(g) + d(g x0, x0):
//!
//!   M_eta      = E[ delta_tilde(g)^eta ]
//!   M'_eta     = E[ c(g) delta_tilde(g)^(eta-1) ]
//!   C_eta^(n)  = E[ c(R_n) max{c(R_n), 1}^(eta-1) ]   (R_n an n-fold draw)
//!
//! The hypothesis bundle H(gamma0) asks for M_{gamma0+1} < inf,
//! M'_{2 gamma0+1} < inf, and C^(n0)_{2 gamma0+1} < 1 for some n0.
//! Finite-support distributions are integrated exactly (zero standard
//! error); generative ones are sampled with a tail-stability surrogate for
//! finiteness.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{MapDistribution, MapSample, SystemModel};
use crate::par;
use crate::rng;

/// Default cap on the number of enumerated composites before falling back
/// to Monte Carlo.
pub const ENUM_CAP: usize = 20_000;

/// Tail-ratio cap for the finiteness surrogate.
pub const TAIL_RATIO_CAP: f64 = 50.0;

/// A moment estimate: exact weighted sum (se = 0) on finite supports,
/// Monte Carlo mean otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MomentEstimate {
    pub value: f64,
    pub se: f64,
    pub n_samples: usize,
    pub excluded: usize,
    pub exact: bool,
}

impl MomentEstimate {
    fn exact(value: f64) -> Self {
        MomentEstimate { value, se: 0.0, n_samples: 0, excluded: 0, exact: true }
    }
}

/// Finiteness verdict for a sampled integral.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Finiteness {
    Exact,
    Stable { rel_variation: f64, tail_ratio: f64 },
    Inconclusive { rel_variation: f64, tail_ratio: f64 },
}

impl Finiteness {
    pub fn holds(&self) -> bool {
        !matches!(self, Finiteness::Inconclusive { .. })
    }
}

/// Overall verdict for the hypothesis bundle.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum HVerdict {
    Holds { n0: usize },
    Fails,
    Inconclusive,
}

/// Full report of the hypothesis check.
#[derive(Debug, Clone, Serialize)]
pub struct MomentReport {
    pub gamma0: f64,
    /// M_{gamma0+1}.
    pub m_eta: MomentEstimate,
    pub m_finiteness: Finiteness,
    /// M'_{2 gamma0+1}.
    pub mprime_eta: MomentEstimate,
    pub mprime_finiteness: Finiteness,
    /// C^{(n)}_{2 gamma0+1} for n = 1.. up to the first admissible n0 (or
    /// the search cap).
    pub contraction: Vec<(usize, MomentEstimate)>,
    /// C^{(n0)}_1 at the admissible n0.
    pub c1_at_n0: Option<MomentEstimate>,
    /// Geometric-ergodicity rate kappa0 = (C^{(n0)}_1)^{1/n0}.
    pub kappa0: Option<f64>,
    pub verdict: HVerdict,
}

impl MomentReport {
    pub fn holds(&self) -> bool {
        matches!(self.verdict, HVerdict::Holds { .. })
    }
}

/// Result of the lambda0 grid search.
#[derive(Debug, Clone, Serialize)]
pub struct Lambda0Result {
    pub lambda0: f64,
    pub theta0: MomentEstimate,
    pub n0: usize,
    /// The (lambda, theta0 estimate) values tried, largest lambda first.
    pub scanned: Vec<(f64, f64)>,
}

fn require_eta(eta: f64) -> Result<()> {
    if !(eta >= 1.0) {
        return Err(Error::Parameter(format!("eta = {eta} must be >= 1")));
    }
    Ok(())
}

/// Monte Carlo (or exact) expectation of a per-map integrand under pi.
fn map_moment<F>(
    model: &SystemModel,
    integrand: F,
    nsamples: usize,
    seed: u64,
) -> (MomentEstimate, Vec<f64>)
where
    F: Fn(&MapSample) -> f64 + Sync,
{
    match &model.pi {
        MapDistribution::Finite { atoms, weights } => {
            let value = atoms.iter().zip(weights).map(|(g, w)| w * integrand(g)).sum();
            (MomentEstimate::exact(value), Vec::new())
        }
        MapDistribution::Generative { .. } => {
            let vals = par::map_indexed(nsamples, |i| {
                let mut r = rng::substream(seed, i as u64);
                let g = model.pi.sample(&mut r);
                integrand(&g)
            });
            mc_estimate(vals)
        }
    }
}

fn mc_estimate(vals: Vec<f64>) -> (MomentEstimate, Vec<f64>) {
    let kept: Vec<f64> = vals.iter().copied().filter(|v| v.is_finite()).collect();
    let excluded = vals.len() - kept.len();
    let est = crate::stats::Estimate::from_samples(&kept);
    (
        MomentEstimate {
            value: est.value,
            se: est.se,
            n_samples: kept.len(),
            excluded,
            exact: false,
        },
        kept,
    )
}

/// Tail-stability surrogate for "the integral is finite": the running mean
/// over 10 logarithmic checkpoints varies by < 10%, and the largest sample
/// does not dwarf the mean of the top 0.1%.
fn finiteness_check(samples: &[f64]) -> Finiteness {
    if samples.is_empty() {
        return Finiteness::Exact;
    }
    let n = samples.len();
    let mut checkpoints = Vec::new();
    for k in 0..10u32 {
        // log-spaced between n/8 and n; earlier checkpoints would be
        // dominated by Monte Carlo noise rather than tail growth
        let m = ((n as f64) * 8f64.powf(-(9 - k as i32) as f64 / 9.0)).ceil() as usize;
        checkpoints.push(m.clamp(1, n));
    }
    checkpoints.dedup();
    let mut running = 0.0;
    let mut idx = 0usize;
    let mut means = Vec::new();
    for (i, v) in samples.iter().enumerate() {
        running += v;
        if idx < checkpoints.len() && i + 1 == checkpoints[idx] {
            means.push(running / (i + 1) as f64);
            idx += 1;
        }
    }
    let last = *means.last().unwrap();
    let lo = means.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = means.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let rel_variation = if last.abs() > 0.0 { (hi - lo) / last.abs() } else { 0.0 };

    let mut sorted = samples.to_vec();
    sorted.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
    let top_k = ((n as f64) * 0.001).ceil() as usize;
    let top = &sorted[n - top_k.max(1)..];
    let top_mean = top.iter().sum::<f64>() / top.len() as f64;
    let tail_ratio = if top_mean > 0.0 { sorted[n - 1] / top_mean } else { 1.0 };

    if rel_variation < 0.10 && tail_ratio < TAIL_RATIO_CAP {
        Finiteness::Stable { rel_variation, tail_ratio }
    } else {
        Finiteness::Inconclusive { rel_variation, tail_ratio }
    }
}

/// M_eta = E[delta_tilde(g)^eta].
pub fn moment_m(
    model: &SystemModel,
    eta: f64,
    nsamples: usize,
    seed: u64,
) -> Result<MomentEstimate> {
    require_eta(eta)?;
    Ok(map_moment(model, |g| g.delta_tilde().powf(eta), nsamples, seed).0)
}

/// M'_eta = E[c(g) delta_tilde(g)^(eta-1)].
pub fn moment_m_prime(
    model: &SystemModel,
    eta: f64,
    nsamples: usize,
    seed: u64,
) -> Result<MomentEstimate> {
    require_eta(eta)?;
    Ok(map_moment(model, |g| g.lip * g.delta_tilde().powf(eta - 1.0), nsamples, seed).0)
}

fn moment_m_with_samples(
    model: &SystemModel,
    eta: f64,
    nsamples: usize,
    seed: u64,
) -> (MomentEstimate, Finiteness) {
    let (est, samples) = map_moment(model, |g| g.delta_tilde().powf(eta), nsamples, seed);
    let fin = if est.exact { Finiteness::Exact } else { finiteness_check(&samples) };
    (est, fin)
}

fn moment_mprime_with_samples(
    model: &SystemModel,
    eta: f64,
    nsamples: usize,
    seed: u64,
) -> (MomentEstimate, Finiteness) {
    let (est, samples) =
        map_moment(model, |g| g.lip * g.delta_tilde().powf(eta - 1.0), nsamples, seed);
    let fin = if est.exact { Finiteness::Exact } else { finiteness_check(&samples) };
    (est, fin)
}

/// All n-fold composites with their weights, when the support is finite and
/// small enough to enumerate.
fn enumerate_composites(
    model: &SystemModel,
    n: usize,
    seed: u64,
) -> Result<Option<Vec<(MapSample, f64)>>> {
    let MapDistribution::Finite { atoms, weights } = &model.pi else {
        return Ok(None);
    };
    let k = atoms.len();
    if k.checked_pow(n as u32).map_or(true, |total| total > ENUM_CAP) {
        return Ok(None);
    }
    let total = k.pow(n as u32);
    let mut out = Vec::with_capacity(total);
    let mut pair_rng = rng::substream(seed, 0xc0de);
    for idx in 0..total {
        let mut rem = idx;
        let mut maps = Vec::with_capacity(n);
        let mut weight = 1.0;
        for _ in 0..n {
            let j = rem % k;
            rem /= k;
            maps.push(atoms[j].clone());
            weight *= weights[j];
        }
        let composite = model.compose(&maps, &mut pair_rng)?;
        out.push((composite, weight));
    }
    Ok(Some(out))
}

/// Expectation of an integrand of the composite map R_n under pi^{*n}.
///
/// Exact enumeration for small finite supports (the composite constant
/// itself is exact only for affine models); Monte Carlo otherwise.
fn composite_moment<F>(
    model: &SystemModel,
    n: usize,
    integrand: F,
    nsamples: usize,
    seed: u64,
) -> Result<MomentEstimate>
where
    F: Fn(&MapSample) -> f64 + Sync,
{
    if n == 0 {
        return Err(Error::Parameter("composite length n must be >= 1".into()));
    }
    if let Some(composites) = enumerate_composites(model, n, seed)? {
        let mut value = 0.0;
        for (g, w) in &composites {
            value += w * integrand(g);
        }
        let exact = model.composite_lip_exact();
        return Ok(MomentEstimate {
            value,
            se: 0.0,
            n_samples: composites.len(),
            excluded: 0,
            exact,
        });
    }
    let vals: Vec<f64> = par::map_indexed(nsamples, |i| {
        let mut r = rng::substream(seed, i as u64);
        let maps: Vec<MapSample> = (0..n).map(|_| model.pi.sample(&mut r)).collect();
        match model.compose(&maps, &mut r) {
            Ok(g) => integrand(&g),
            Err(_) => f64::NAN,
        }
    });
    Ok(mc_estimate(vals).0)
}

/// C^{(n)}_eta = E[c(R_n) max{c(R_n), 1}^(eta-1)].
pub fn contraction_c(
    model: &SystemModel,
    eta: f64,
    n: usize,
    nsamples: usize,
    seed: u64,
) -> Result<MomentEstimate> {
    require_eta(eta)?;
    composite_moment(model, n, |g| g.lip * g.lip.max(1.0).powf(eta - 1.0), nsamples, seed)
}

/// Check the hypothesis bundle at gamma0, searching n0 in 1..=n0max for a
/// certified contraction (estimate + 2 se < 1).
pub fn check_h(
    model: &SystemModel,
    gamma0: f64,
    n0max: usize,
    nsamples: usize,
    seed: u64,
) -> Result<MomentReport> {
    if !(gamma0 > 0.0) {
        return Err(Error::Parameter(format!("gamma0 = {gamma0} must be > 0")));
    }
    let (m_eta, m_fin) = moment_m_with_samples(model, gamma0 + 1.0, nsamples, seed);
    let (mprime_eta, mprime_fin) =
        moment_mprime_with_samples(model, 2.0 * gamma0 + 1.0, nsamples, seed ^ 1);

    let eta = 2.0 * gamma0 + 1.0;
    let mut contraction = Vec::new();
    let mut found: Option<usize> = None;
    let mut all_fail_certainly = true;
    for n in 1..=n0max.max(1) {
        let est = contraction_c(model, eta, n, nsamples, seed.wrapping_add(n as u64))?;
        let admissible = est.value + 2.0 * est.se < 1.0;
        if est.value - 2.0 * est.se < 1.0 {
            all_fail_certainly = false;
        }
        contraction.push((n, est));
        if admissible {
            found = Some(n);
            break;
        }
    }

    let (c1_at_n0, kappa0) = match found {
        Some(n0) => {
            let c1 = contraction_c(model, 1.0, n0, nsamples, seed ^ 2)?;
            let kappa = c1.value.powf(1.0 / n0 as f64);
            (Some(c1), Some(kappa))
        }
        None => (None, None),
    };

    let verdict = match found {
        Some(n0) if m_fin.holds() && mprime_fin.holds() => HVerdict::Holds { n0 },
        Some(_) => HVerdict::Inconclusive,
        None if all_fail_certainly => HVerdict::Fails,
        None => HVerdict::Inconclusive,
    };

    Ok(MomentReport {
        gamma0,
        m_eta,
        m_finiteness: m_fin,
        mprime_eta,
        mprime_finiteness: mprime_fin,
        contraction,
        c1_at_n0,
        kappa0,
        verdict,
    })
}

/// Largest lambda0 on the geometric grid {1, 1/2, ..., 2^-20} with
///
///   theta0 = E[c(R_n0) (max{c(R_n0), 1} + lambda0 d(R_n0 x0, x0))^(2 gamma0)]
///
/// certified below 1 (estimate + 2 se < 1). theta0 is monotone increasing
/// in lambda0, so the grid answer is certified-admissible.
pub fn find_lambda0(
    model: &SystemModel,
    gamma0: f64,
    n0: usize,
    nsamples: usize,
    seed: u64,
) -> Result<Lambda0Result> {
    if !(gamma0 > 0.0) {
        return Err(Error::Parameter(format!("gamma0 = {gamma0} must be > 0")));
    }
    let mut scanned = Vec::new();
    for k in 0..=20u32 {
        let lambda = 2f64.powi(-(k as i32));
        let est = composite_moment(
            model,
            n0,
            |g| g.lip * (g.lip.max(1.0) + lambda * g.disp).powf(2.0 * gamma0),
            nsamples,
            seed,
        )?;
        scanned.push((lambda, est.value));
        if est.value + 2.0 * est.se < 1.0 {
            return Ok(Lambda0Result { lambda0: lambda, theta0: est, n0, scanned });
        }
    }
    Err(Error::HypothesisFailure(format!(
        "no admissible lambda0 on the geometric grid; theta0 values: {scanned:?}"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{ar1_gaussian, doubling_ifs, single_matrix_model, ObservableKind};
    use approx::assert_relative_eq;

    fn point_mass_model(a: f64, b: f64) -> SystemModel {
        let spec = crate::models::AffineSpec::scalar_atoms(&[(a, b)], &[1.0]);
        crate::models::make_affine(&spec, &ObservableKind::Coordinate { index: 0 }).unwrap()
    }

    #[test]
    fn moment_m_point_mass() {
        // lip = 0.5, disp = 1, eta = 2: (2.5)^2 = 6.25 exactly
        let model = point_mass_model(0.5, 1.0);
        let est = moment_m(&model, 2.0, 0, 0).unwrap();
        assert_relative_eq!(est.value, 6.25);
        assert_eq!(est.se, 0.0);
        assert!(est.exact);
    }

    #[test]
    fn moment_m_identity_only() {
        // delta_tilde(id) = 2, so M_eta = 2^eta
        let model = point_mass_model(1.0, 0.0);
        for eta in [1.0, 2.0, 3.5] {
            let est = moment_m(&model, eta, 0, 0).unwrap();
            assert_relative_eq!(est.value, 2f64.powf(eta));
        }
    }

    #[test]
    fn moment_m_gaussian_noise_half_normal() {
        // a = 0.5, b ~ N(0,1), eta = 1: E[1.5 + |b|] = 1.5 + sqrt(2/pi)
        let model = ar1_gaussian(0.5, ObservableKind::Coordinate { index: 0 });
        let est = moment_m(&model, 1.0, 200_000, 42).unwrap();
        let expect = 1.5 + (2.0 / std::f64::consts::PI).sqrt();
        assert!(
            (est.value - expect).abs() < 4.0 * est.se + 1e-3,
            "estimate {} vs {}",
            est.value,
            expect
        );
    }

    #[test]
    fn moment_mprime_examples() {
        let model = point_mass_model(0.5, 1.0);
        let est = moment_m_prime(&model, 2.0, 0, 0).unwrap();
        assert_relative_eq!(est.value, 0.5 * 2.5);

        let ident = point_mass_model(1.0, 0.0);
        assert_relative_eq!(moment_m_prime(&ident, 1.0, 0, 0).unwrap().value, 1.0);

        // two atoms lip in {0.2, 1.2}, disp = 0, eta = 1: mean of c = 0.7
        let spec = crate::models::AffineSpec::scalar_atoms(&[(0.2, 0.0), (1.2, 0.0)], &[0.5, 0.5]);
        let two =
            crate::models::make_affine(&spec, &ObservableKind::Coordinate { index: 0 }).unwrap();
        assert_relative_eq!(moment_m_prime(&two, 1.0, 0, 0).unwrap().value, 0.7);
    }

    #[test]
    fn eta_below_one_rejected() {
        let model = point_mass_model(0.5, 1.0);
        assert!(moment_m(&model, 0.5, 0, 0).is_err());
        assert!(moment_m_prime(&model, 0.99, 0, 0).is_err());
    }

    #[test]
    fn contraction_point_mass_powers() {
        let model = point_mass_model(0.5, 0.3);
        for n in 1..=4usize {
            let est = contraction_c(&model, 3.0, n, 0, 0).unwrap();
            assert_relative_eq!(est.value, 0.5f64.powi(n as i32), epsilon = 1e-12);
            assert_eq!(est.se, 0.0);
        }
    }

    #[test]
    fn contraction_two_atom_enumeration() {
        // a in {0.2, 1.2} equal weights, eta = 1, n = 2:
        // mean of {0.04, 0.24, 0.24, 1.44} = 0.49 exactly
        let spec = crate::models::AffineSpec::scalar_atoms(&[(0.2, 0.0), (1.2, 0.0)], &[0.5, 0.5]);
        let model =
            crate::models::make_affine(&spec, &ObservableKind::Coordinate { index: 0 }).unwrap();
        let est = contraction_c(&model, 1.0, 2, 0, 0).unwrap();
        assert_relative_eq!(est.value, 0.49, epsilon = 1e-12);
        assert_eq!(est.se, 0.0);
        assert!(est.exact);
    }

    #[test]
    fn contraction_identity_not_below_one() {
        let model = point_mass_model(1.0, 0.0);
        let est = contraction_c(&model, 1.0, 1, 0, 0).unwrap();
        assert_relative_eq!(est.value, 1.0);
    }

    #[test]
    fn check_h_gaussian_ar1_holds() {
        let model = ar1_gaussian(0.5, ObservableKind::Coordinate { index: 0 });
        let report = check_h(&model, 2.0, 3, 50_000, 7).unwrap();
        assert_eq!(report.verdict, HVerdict::Holds { n0: 1 });
        // C^{(1)}_{5} = 0.5 * max{0.5,1}^4 = 0.5 exactly (lip deterministic)
        let (n, c) = &report.contraction[0];
        assert_eq!(*n, 1);
        assert!((c.value - 0.5).abs() < 1e-12);
        assert!((report.kappa0.unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn check_h_identity_fails() {
        let model = point_mass_model(1.0, 0.0);
        let report = check_h(&model, 1.0, 3, 0, 0).unwrap();
        assert_eq!(report.verdict, HVerdict::Fails);
    }

    #[test]
    fn check_h_strictly_positive_matrix() {
        let built = single_matrix_model(vec![2.0, 1.0, 1.0, 2.0], 2, Some(3.0f64.ln())).unwrap();
        let report = check_h(&built.model, 1.5, 3, 0, 11).unwrap();
        assert_eq!(report.verdict, HVerdict::Holds { n0: 1 });
    }

    #[test]
    fn find_lambda0_disp_free_point_mass() {
        // lip = 0.5, disp = 0: theta0 is lambda-independent, so lambda0 = 1
        let model = point_mass_model(0.5, 0.0);
        let res = find_lambda0(&model, 1.0, 1, 0, 0).unwrap();
        assert_relative_eq!(res.lambda0, 1.0);
        assert_relative_eq!(res.theta0.value, 0.5);
    }

    #[test]
    fn find_lambda0_grid_answer() {
        // lip = 0.5, disp = 1, gamma0 = 1: theta0(lambda) = 0.5 (1+lambda)^2,
        // admissible iff lambda < sqrt(2) - 1; grid answer 1/4 with 0.78125
        let model = point_mass_model(0.5, 1.0);
        let res = find_lambda0(&model, 1.0, 1, 0, 0).unwrap();
        assert_relative_eq!(res.lambda0, 0.25);
        assert_relative_eq!(res.theta0.value, 0.78125);
        assert_eq!(res.theta0.se, 0.0);
    }

    #[test]
    fn find_lambda0_identity_errors() {
        let model = point_mass_model(1.0, 0.0);
        assert!(find_lambda0(&model, 1.0, 1, 0, 0).is_err());
    }

    #[test]
    fn monotone_in_eta_on_finite_support() {
        let model = point_mass_model(0.5, 1.0);
        let mut last = 0.0;
        for eta in [1.0, 1.5, 2.0, 3.0] {
            let v = moment_m(&model, eta, 0, 0).unwrap().value;
            assert!(v >= last);
            last = v;
        }
    }

    #[test]
    fn doubling_ifs_theta0_bounded_by_mprime() {
        let model = doubling_ifs(ObservableKind::Coordinate { index: 0 });
        let res = find_lambda0(&model, 1.0, 1, 0, 0).unwrap();
        let mprime = moment_m_prime(&model, 3.0, 0, 0).unwrap();
        assert!(res.theta0.value <= mprime.value + 1e-12);
    }

    #[test]
    fn contraction_submultiplicative_trend() {
        // c submultiplicative: C_1(n1 + n2) <= C_1(n1) C_1(n2) + slack
        let spec = crate::models::AffineSpec::scalar_atoms(
            &[(0.3, 0.5), (0.9, -0.2)],
            &[0.5, 0.5],
        );
        let model =
            crate::models::make_affine(&spec, &ObservableKind::Coordinate { index: 0 }).unwrap();
        for (n1, n2) in [(1usize, 1usize), (1, 2), (2, 2)] {
            let a = contraction_c(&model, 1.0, n1, 0, 0).unwrap();
            let b = contraction_c(&model, 1.0, n2, 0, 0).unwrap();
            let ab = contraction_c(&model, 1.0, n1 + n2, 0, 0).unwrap();
            let pooled = a.se + b.se + ab.se;
            assert!(
                ab.value <= a.value * b.value + 3.0 * pooled + 1e-12,
                "C({}) = {} vs C({n1}) C({n2}) = {}",
                n1 + n2,
                ab.value,
                a.value * b.value
            );
        }

        // Monte Carlo side of the same trend on a generative model
        let model = ar1_gaussian(0.5, ObservableKind::Coordinate { index: 0 });
        let a = contraction_c(&model, 1.0, 1, 4000, 5).unwrap();
        let ab = contraction_c(&model, 1.0, 2, 4000, 6).unwrap();
        let pooled = 2.0 * a.se + ab.se;
        assert!(ab.value <= a.value * a.value + 3.0 * pooled + 1e-12);
    }
}

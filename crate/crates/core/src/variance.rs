//! Asymptotic variance of S_n/sqrt(n) by two independent routes — batch
//! extrapolation of n^-1 E[S_n^2] and the Poisson-equation formula
//! sigma^2 = E[xi (xi + 2 w o j)] with (1 - P)w = theta — plus the
//! degenerate-coboundary detector.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{MapDistribution, StatePoint, SystemModel};
use crate::models::ObservableKind;
use crate::par;
use crate::rng;
use crate::simulate::{EmpiricalMeasure, InitDist};
use crate::stats::{self, Estimate};

/// Which route produced the estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceMethod {
    Batch,
    Poisson,
}

#[derive(Debug, Clone, Serialize)]
pub struct VarianceEstimate {
    pub sigma2: f64,
    pub method: VarianceMethod,
    pub se: f64,
    /// Neumann-series truncation bound propagated into sigma^2 (Poisson
    /// route only).
    pub tail_bound: f64,
    /// Raw value before clamping at zero.
    pub raw: f64,
    pub clamped: bool,
    /// Batch route: the (n, estimate, se) grid behind the extrapolation.
    pub per_n: Vec<(usize, f64, f64)>,
    /// Poisson route: Neumann truncation orders used (min/max over solves).
    pub truncation: Option<(usize, usize)>,
}

impl VarianceEstimate {
    fn finalize(method: VarianceMethod, raw: f64, se: f64, tail: f64) -> Result<(f64, bool)> {
        if raw < -3.0 * (se + tail) - 1e-12 {
            return Err(Error::NumericalInconsistency(format!(
                "{method:?} variance {raw} is negative beyond noise (se {se}, tail {tail})"
            )));
        }
        Ok((raw.max(0.0), raw < 0.0))
    }
}

/// theta(x) = E_pi[xi(g, x)] (centered observable). Exact on finite
/// supports.
pub fn theta_eval(
    model: &SystemModel,
    x: &StatePoint,
    nsamples: usize,
    seed: u64,
) -> Result<Estimate> {
    match &model.pi {
        MapDistribution::Finite { atoms, weights } => {
            let mut v = 0.0;
            for (g, w) in atoms.iter().zip(weights) {
                v += w * model.xi(g, x)?;
            }
            Ok(Estimate::exact(v))
        }
        MapDistribution::Generative { .. } => {
            let mut r = rng::stream(seed);
            let vals: Result<Vec<f64>> = (0..nsamples.max(2))
                .map(|_| {
                    let g = model.pi.draw(&mut r);
                    model.xi(&g, x)
                })
                .collect();
            Ok(Estimate::from_samples(&vals?))
        }
    }
}

/// Options for the Poisson solver.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct PoissonOpts {
    /// Chains run from each evaluation point (common random numbers across
    /// the series terms).
    pub paths: usize,
    /// Monte Carlo draws per theta evaluation (generative pi only).
    pub theta_samples: usize,
    /// Hard cap on the Neumann truncation.
    pub n_cap: usize,
    /// Stop once the fitted geometric tail drops below this fraction of
    /// the partial sum.
    pub tail_rel: f64,
}

impl Default for PoissonOpts {
    fn default() -> Self {
        PoissonOpts { paths: 128, theta_samples: 8, n_cap: 200, tail_rel: 1e-4 }
    }
}

/// w(x) at one point with its truncation diagnostics.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct PoissonValue {
    pub w: f64,
    pub se: f64,
    pub tail_bound: f64,
    pub truncation: usize,
}

/// theta without the Estimate wrapper, for the solver's inner loop.
fn theta_value(
    model: &SystemModel,
    x: &StatePoint,
    nsamples: usize,
    r: &mut rand_chacha::ChaCha8Rng,
) -> Result<f64> {
    match &model.pi {
        MapDistribution::Finite { atoms, weights } => {
            let mut v = 0.0;
            for (g, w) in atoms.iter().zip(weights) {
                v += w * model.xi(g, x)?;
            }
            Ok(v)
        }
        MapDistribution::Generative { .. } => {
            let k = nsamples.max(2);
            let mut acc = 0.0;
            for _ in 0..k {
                let g = model.pi.draw(r);
                acc += model.xi(&g, x)?;
            }
            Ok(acc / k as f64)
        }
    }
}

/// Solve (1 - P)w = theta at `x` by the truncated Neumann series
/// w = sum_n P^n theta, estimated along chains from x. The same chains
/// serve every term of the series, and the truncation adapts: stop once
/// |E[theta(R_n x)]| has sat inside its noise band for three terms or the
/// fitted geometric tail is negligible.
pub fn solve_poisson_at(
    model: &SystemModel,
    x: &StatePoint,
    opts: &PoissonOpts,
    seed: u64,
) -> Result<PoissonValue> {
    let paths = opts.paths.max(2);
    let n_cap = opts.n_cap.max(4);

    let mut rngs: Vec<rand_chacha::ChaCha8Rng> =
        (0..paths).map(|p| rng::substream(seed, p as u64)).collect();
    let mut theta_rng = rng::substream(seed ^ 0x7e7a, 0);
    let mut states: Vec<StatePoint> = vec![x.clone(); paths];
    let mut scratch = Vec::with_capacity(model.dim);
    let mut path_sums = vec![0.0f64; paths];
    let mut m: Vec<f64> = Vec::with_capacity(32);
    let mut se_n: Vec<f64> = Vec::with_capacity(32);

    let mut partial = 0.0f64;
    let mut quiet = 0usize;
    let mut stop = n_cap;
    for n in 0..=n_cap {
        let mut sum = 0.0f64;
        let mut sumsq = 0.0f64;
        for (p, z) in states.iter().enumerate() {
            let th = theta_value(model, z, opts.theta_samples, &mut theta_rng)?;
            path_sums[p] += th;
            sum += th;
            sumsq += th * th;
        }
        let mean = sum / paths as f64;
        let var = (sumsq / paths as f64 - mean * mean).max(0.0);
        m.push(mean);
        se_n.push((var / (paths as f64 - 1.0)).sqrt());
        partial += mean;

        if mean.abs() <= (2.0 * se_n[n]).max(1e-14) {
            quiet += 1;
        } else {
            quiet = 0;
        }
        if n >= 4 && quiet >= 3 {
            stop = n;
            break;
        }
        if n >= 8 {
            if let Some((c, kappa)) = fit_geometric(&m, &se_n, n) {
                let tail = c * kappa.powi(n as i32 + 1) / (1.0 - kappa);
                if tail.abs() <= opts.tail_rel * partial.abs().max(1e-12) {
                    stop = n;
                    break;
                }
            }
        }
        if n < n_cap {
            for (p, z) in states.iter_mut().enumerate() {
                let g = model.pi.draw(&mut rngs[p]);
                g.step_in_place(z, &mut scratch)?;
            }
        }
    }
    let stop = stop.min(m.len() - 1);

    // decay sanity: the above-noise segment must shrink
    let clean: Vec<(f64, f64)> = m
        .iter()
        .zip(&se_n)
        .enumerate()
        .filter(|(_, (v, se))| v.abs() > 2.0 * *se && v.abs() > 1e-13)
        .map(|(n, (v, _))| (n as f64, v.abs().ln()))
        .collect();
    let tail_bound = if clean.len() >= 4 {
        let xs: Vec<f64> = clean.iter().map(|p| p.0).collect();
        let ys: Vec<f64> = clean.iter().map(|p| p.1).collect();
        let (intercept, slope) = stats::fit_line(&xs, &ys);
        if slope >= 0.0 && stop == n_cap {
            return Err(Error::NonDecayingSeries { slope });
        }
        let kappa = slope.exp().min(0.999_999);
        intercept.exp() * kappa.powi(stop as i32 + 1) / (1.0 - kappa)
    } else {
        // series died into noise almost immediately
        se_n.get(stop).copied().unwrap_or(0.0)
    };

    let w = m.iter().sum::<f64>();
    // se of w from the per-path partial sums (correlations included)
    let se = Estimate::from_samples(&path_sums).se;
    Ok(PoissonValue { w, se, tail_bound: tail_bound.abs(), truncation: stop })
}

fn fit_geometric(m: &[f64], se: &[f64], upto: usize) -> Option<(f64, f64)> {
    let pts: Vec<(f64, f64)> = m
        .iter()
        .zip(se)
        .take(upto + 1)
        .enumerate()
        .filter(|(_, (v, s))| v.abs() > 2.0 * *s && v.abs() > 1e-13)
        .map(|(n, (v, _))| (n as f64, v.abs().ln()))
        .collect();
    if pts.len() < 4 {
        return None;
    }
    let xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
    let (intercept, slope) = stats::fit_line(&xs, &ys);
    if slope >= 0.0 {
        return None;
    }
    Some((intercept.exp(), slope.exp().min(0.999_999)))
}

/// Solve the Poisson equation at several points.
pub fn solve_poisson(
    model: &SystemModel,
    eval_points: &[StatePoint],
    opts: &PoissonOpts,
    seed: u64,
) -> Result<Vec<PoissonValue>> {
    par::map_indexed(eval_points.len(), |i| {
        solve_poisson_at(model, &eval_points[i], opts, rng::substream_seed(seed, i as u64))
    })
    .into_iter()
    .collect()
}

/// Poisson-route variance: sigma^2 = E_{x ~ nu, g ~ pi}[xi(g,x)(xi(g,x) +
/// 2 w(g x))], sampling (x, g) pairs and solving for w at each image.
pub fn sigma2_poisson(
    model: &SystemModel,
    nu_hat: &EmpiricalMeasure,
    pairs: usize,
    opts: &PoissonOpts,
    seed: u64,
) -> Result<VarianceEstimate> {
    if nu_hat.is_empty() {
        return Err(Error::MissingDependency("empirical measure is empty".into()));
    }
    let pairs = pairs.max(16);
    let results = par::map_indexed(pairs, |j| -> Result<(f64, f64, f64, usize)> {
        use rand::Rng;
        let mut r = rng::substream(seed, j as u64);
        let u: f64 = r.gen();
        let x = nu_hat.draw_point(u).clone();
        let g = model.pi.draw(&mut r);
        let xi = model.xi(&g, &x)?;
        let gx = g.apply(&x)?;
        let wv = solve_poisson_at(model, &gx, opts, rng::substream_seed(seed ^ 0x9a55, j as u64))?;
        let value = xi * (xi + 2.0 * wv.w);
        let tail_contrib = 2.0 * xi.abs() * wv.tail_bound;
        Ok((value, tail_contrib, wv.se, wv.truncation))
    });
    let results: Vec<(f64, f64, f64, usize)> = results.into_iter().collect::<Result<_>>()?;

    let vals: Vec<f64> = results.iter().map(|r| r.0).collect();
    let est = Estimate::from_samples(&vals);
    let tail = results.iter().map(|r| r.1).sum::<f64>() / pairs as f64;
    let trunc_min = results.iter().map(|r| r.3).min().unwrap_or(0);
    let trunc_max = results.iter().map(|r| r.3).max().unwrap_or(0);

    let (sigma2, clamped) =
        VarianceEstimate::finalize(VarianceMethod::Poisson, est.value, est.se, tail)?;
    Ok(VarianceEstimate {
        sigma2,
        method: VarianceMethod::Poisson,
        se: est.se,
        tail_bound: tail,
        raw: est.value,
        clamped,
        per_n: Vec::new(),
        truncation: Some((trunc_min, trunc_max)),
    })
}

/// Batch-route variance: per-n estimates of n^-1 E[S_n^2] on a common path
/// ensemble, extrapolated by a weighted a + b/n fit; sigma^2 = a.
pub fn sigma2_batch(
    model: &SystemModel,
    init: &InitDist,
    n_grid: &[usize],
    paths: usize,
    seed: u64,
) -> Result<VarianceEstimate> {
    if n_grid.len() < 3 {
        return Err(Error::Parameter("n_grid needs at least 3 increasing entries".into()));
    }
    if n_grid.windows(2).any(|w| w[1] <= w[0]) || n_grid[0] == 0 {
        return Err(Error::Parameter("n_grid must be strictly increasing and positive".into()));
    }
    let n_max = *n_grid.last().unwrap();
    let grid = n_grid.to_vec();

    // each path walks to n_max once, checkpointing S_n at the grid points
    let per_path = par::map_indexed(paths.max(2), |p| -> Result<Vec<f64>> {
        let mut r = rng::substream(seed, p as u64);
        let mut z = init.draw(model, &mut r);
        let mut scratch = Vec::with_capacity(model.dim);
        let mut s = 0.0f64;
        let mut out = Vec::with_capacity(grid.len());
        let mut next = 0usize;
        for k in 1..=n_max {
            let g = model.pi.draw(&mut r);
            s += model.xi(&g, &z)?;
            g.step_in_place(&mut z, &mut scratch)?;
            if next < grid.len() && k == grid[next] {
                out.push(s);
                next += 1;
            }
        }
        Ok(out)
    });
    let per_path: Vec<Vec<f64>> = per_path.into_iter().collect::<Result<_>>()?;

    let mut per_n = Vec::with_capacity(grid.len());
    for (i, &n) in grid.iter().enumerate() {
        let sq: Vec<f64> = per_path.iter().map(|p| p[i] * p[i] / n as f64).collect();
        let est = Estimate::from_samples(&sq);
        per_n.push((n, est.value, est.se));
    }

    // weighted least squares of y = a + b / n
    let (a, se_a) = wls_intercept_inverse_n(&per_n);
    let (sigma2, clamped) = VarianceEstimate::finalize(VarianceMethod::Batch, a, se_a, 0.0)?;
    Ok(VarianceEstimate {
        sigma2,
        method: VarianceMethod::Batch,
        se: se_a,
        tail_bound: 0.0,
        raw: a,
        clamped,
        per_n,
        truncation: None,
    })
}

/// WLS fit of y_i = a + b x_i with x_i = 1/n_i and weights 1/se_i^2;
/// returns (a, se(a)).
fn wls_intercept_inverse_n(per_n: &[(usize, f64, f64)]) -> (f64, f64) {
    let mut sw = 0.0;
    let mut swx = 0.0;
    let mut swy = 0.0;
    let mut swxx = 0.0;
    let mut swxy = 0.0;
    for &(n, y, se) in per_n {
        let x = 1.0 / n as f64;
        let w = if se > 0.0 { 1.0 / (se * se) } else { 1.0 };
        sw += w;
        swx += w * x;
        swy += w * y;
        swxx += w * x * x;
        swxy += w * x * y;
    }
    let det = sw * swxx - swx * swx;
    if det.abs() < 1e-300 {
        return (swy / sw, (1.0 / sw).sqrt());
    }
    let a = (swxx * swy - swx * swxy) / det;
    let var_a = swxx / det;
    (a, var_a.sqrt())
}

/// Verdict of the degeneracy detector.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum DegeneracyVerdict {
    Nondegenerate,
    /// sigma^2 > 0 certified by the product-form criterion.
    GuaranteedPositive,
    DegenerateCoboundarySuspected,
    Inconclusive,
}

#[derive(Debug, Clone, Serialize)]
pub struct DegeneracyReport {
    pub verdict: DegeneracyVerdict,
    /// RMS residual of the coboundary fit, when attempted.
    pub residual: Option<f64>,
    /// Fitted basis coefficients of xi_tilde_1 (coordinates then squares).
    pub coefficients: Option<Vec<f64>>,
    /// Fitted constant offset; a coboundary cannot produce one, so this
    /// estimates the residual centering error.
    pub intercept: Option<f64>,
    /// pi(u) estimate for the declared product form.
    pub pi_u: Option<Estimate>,
    pub chi_nonzero_on_support: Option<bool>,
}

/// Decide the sigma^2 = 0 question from the two route estimates; in the
/// product-form case apply the sufficient criterion (pi(u) = 0 and chi not
/// identically zero on the support implies sigma^2 > 0); in the suspected
/// coboundary case fit xi_tilde_1 by least squares on the telescoping
/// identity and report the residual.
pub fn degeneracy_test(
    model: &SystemModel,
    est_batch: &VarianceEstimate,
    est_poisson: &VarianceEstimate,
    product_form: Option<&ObservableKind>,
    nu_hat: &EmpiricalMeasure,
    seed: u64,
) -> Result<DegeneracyReport> {
    // scale of xi^2 under (pi (x) nu_hat), for relative smallness
    let scale = {
        let sub = nu_hat.subsample(512, seed ^ 0x5ca1e);
        let mut r = rng::stream(seed ^ 0x77);
        let mut acc = 0.0;
        let mut count = 0usize;
        for x in &sub.points {
            let g = model.pi.draw(&mut r);
            acc += model.xi(&g, x)?.powi(2);
            count += 1;
        }
        (acc / count.max(1) as f64).max(1e-12)
    };

    let mut pi_u = None;
    let mut chi_nonzero = None;
    if let Some(kind) = product_form {
        if let Some(index) = kind.product_form() {
            let u_est = match &model.pi {
                MapDistribution::Finite { atoms, weights } => Estimate::exact(
                    atoms.iter().zip(weights).map(|(g, w)| w * g.tag).sum::<f64>(),
                ),
                MapDistribution::Generative { .. } => {
                    let mut r = rng::stream(seed ^ 0xfeed);
                    let vals: Vec<f64> =
                        (0..4096).map(|_| model.pi.sample(&mut r).tag).collect();
                    Estimate::from_samples(&vals)
                }
            };
            let nonzero = nu_hat.points.iter().any(|x| x.coords[index].abs() > 1e-9);
            let u_zero = u_est.value.abs() <= 2.0 * u_est.se + 1e-12;
            pi_u = Some(u_est);
            chi_nonzero = Some(nonzero);
            if u_zero && nonzero {
                return Ok(DegeneracyReport {
                    verdict: DegeneracyVerdict::GuaranteedPositive,
                    residual: None,
                    coefficients: None,
                    intercept: None,
                    pi_u,
                    chi_nonzero_on_support: chi_nonzero,
                });
            }
        }
    }

    let small_batch = est_batch.raw <= 0.02 * scale + 3.0 * est_batch.se;
    let small_poisson =
        est_poisson.raw <= 0.02 * scale + 3.0 * (est_poisson.se + est_poisson.tail_bound);
    let big_batch = est_batch.sigma2 > 3.0 * est_batch.se;
    let big_poisson = est_poisson.sigma2 > 3.0 * (est_poisson.se + est_poisson.tail_bound);

    if small_batch && small_poisson {
        let (residual, intercept, coeffs) = fit_coboundary(model, nu_hat, seed ^ 0xc0b0)?;
        return Ok(DegeneracyReport {
            verdict: DegeneracyVerdict::DegenerateCoboundarySuspected,
            residual: Some(residual),
            coefficients: Some(coeffs),
            intercept: Some(intercept),
            pi_u,
            chi_nonzero_on_support: chi_nonzero,
        });
    }
    if big_batch && big_poisson {
        return Ok(DegeneracyReport {
            verdict: DegeneracyVerdict::Nondegenerate,
            residual: None,
            coefficients: None,
            intercept: None,
            pi_u,
            chi_nonzero_on_support: chi_nonzero,
        });
    }
    Ok(DegeneracyReport {
        verdict: DegeneracyVerdict::Inconclusive,
        residual: None,
        coefficients: None,
        intercept: None,
        pi_u,
        chi_nonzero_on_support: chi_nonzero,
    })
}

/// Least-squares fit of xi(g, x) = c0 + xi_tilde_1(x) - xi_tilde_1(g x)
/// over the basis {x_i, x_i^2}, with an intercept column that absorbs
/// residual centering error (a true coboundary admits no constant term).
/// Returns the RMS residual, the intercept, and the coefficients.
fn fit_coboundary(
    model: &SystemModel,
    nu_hat: &EmpiricalMeasure,
    seed: u64,
) -> Result<(f64, f64, Vec<f64>)> {
    let dim = model.dim;
    let nbasis = 1 + 2 * dim;
    let basis = |x: &StatePoint| -> Vec<f64> {
        let mut v = Vec::with_capacity(nbasis - 1);
        for c in &x.coords {
            v.push(*c);
        }
        for c in &x.coords {
            v.push(c * c);
        }
        v
    };

    let sub = nu_hat.subsample(1024, seed);
    let mut r = rng::stream(seed ^ 0x1);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut ys: Vec<f64> = Vec::new();
    for x in &sub.points {
        let g = model.pi.draw(&mut r);
        let gx = g.apply(x)?;
        let bx = basis(x);
        let bgx = basis(&gx);
        let mut row = Vec::with_capacity(nbasis);
        row.push(1.0);
        row.extend(bx.iter().zip(&bgx).map(|(a, b)| a - b));
        rows.push(row);
        ys.push(model.xi(&g, x)?);
    }

    // normal equations with a tiny ridge for collinear bases
    let mut ata = vec![0.0f64; nbasis * nbasis];
    let mut aty = vec![0.0f64; nbasis];
    for (row, y) in rows.iter().zip(&ys) {
        for i in 0..nbasis {
            aty[i] += row[i] * y;
            for j in 0..nbasis {
                ata[i * nbasis + j] += row[i] * row[j];
            }
        }
    }
    let trace: f64 = (0..nbasis).map(|i| ata[i * nbasis + i]).sum();
    let ridge = 1e-12 * trace.max(1e-12);
    for i in 0..nbasis {
        ata[i * nbasis + i] += ridge;
    }
    let coeffs = solve_dense(&mut ata, &mut aty, nbasis)?;

    let mut ss = 0.0;
    for (row, y) in rows.iter().zip(&ys) {
        let pred: f64 = row.iter().zip(&coeffs).map(|(a, c)| a * c).sum();
        ss += (y - pred) * (y - pred);
    }
    let intercept = coeffs[0];
    Ok(((ss / ys.len() as f64).sqrt(), intercept, coeffs[1..].to_vec()))
}

/// Gaussian elimination with partial pivoting on a small dense system.
fn solve_dense(a: &mut [f64], b: &mut [f64], n: usize) -> Result<Vec<f64>> {
    for col in 0..n {
        let mut pivot = col;
        for row in col + 1..n {
            if a[row * n + col].abs() > a[pivot * n + col].abs() {
                pivot = row;
            }
        }
        if a[pivot * n + col].abs() < 1e-300 {
            return Err(Error::NumericalInconsistency("singular normal equations".into()));
        }
        if pivot != col {
            for j in 0..n {
                a.swap(col * n + j, pivot * n + j);
            }
            b.swap(col, pivot);
        }
        let d = a[col * n + col];
        for row in col + 1..n {
            let factor = a[row * n + col] / d;
            if factor == 0.0 {
                continue;
            }
            for j in col..n {
                a[row * n + j] -= factor * a[col * n + j];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for col in (0..n).rev() {
        let mut acc = b[col];
        for j in col + 1..n {
            acc -= a[col * n + j] * x[j];
        }
        x[col] = acc / a[col * n + col];
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{ar1_gaussian, ar1_noise_atoms, doubling_ifs, ObservableKind};
    use crate::simulate::cesaro_measure;
    use approx::assert_relative_eq;

    fn doubling_centered() -> SystemModel {
        doubling_ifs(ObservableKind::Coordinate { index: 0 }).with_centering(0.5)
    }

    #[test]
    fn theta_exact_for_doubling() {
        // xi = x - 1/2 is independent of g, so theta(x) = x - 1/2 exactly
        let model = doubling_centered();
        let th = theta_eval(&model, &StatePoint::scalar(0.8), 0, 0).unwrap();
        assert_relative_eq!(th.value, 0.3, epsilon = 1e-15);
        assert_eq!(th.se, 0.0);
    }

    #[test]
    fn theta_product_form_zero() {
        // xi = u(g) x with pi(u) = 0: theta vanishes identically
        let model = ar1_noise_atoms(
            0.5,
            &[(1.0, 1.0), (-1.0, -1.0)],
            ObservableKind::ProductMapCoordinate { index: 0 },
        );
        let th = theta_eval(&model, &StatePoint::scalar(0.7), 0, 0).unwrap();
        assert_relative_eq!(th.value, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn poisson_solution_doubling() {
        // P theta = theta / 2, so w = 2 theta = 2x - 1; at x = 1, w = 1
        let model = doubling_centered();
        let opts = PoissonOpts { paths: 512, ..Default::default() };
        let v = solve_poisson_at(&model, &StatePoint::scalar(1.0), &opts, 42).unwrap();
        assert!(
            (v.w - 1.0).abs() <= 3.0 * v.se + v.tail_bound + 0.02,
            "w = {} se = {} tail = {}",
            v.w,
            v.se,
            v.tail_bound
        );
    }

    #[test]
    fn poisson_solution_ar1() {
        // theta(x) = x, P^n theta = x/2^n, w(x) = 2x; at x = 1, w = 2
        let model = ar1_gaussian(0.5, ObservableKind::Coordinate { index: 0 });
        let opts = PoissonOpts { paths: 2048, theta_samples: 8, ..Default::default() };
        let v = solve_poisson_at(&model, &StatePoint::scalar(1.0), &opts, 7).unwrap();
        assert!(
            (v.w - 2.0).abs() <= 3.0 * v.se + v.tail_bound + 0.05,
            "w = {} se = {}",
            v.w,
            v.se
        );
    }

    #[test]
    fn poisson_zero_observable() {
        let model = ar1_noise_atoms(0.5, &[(1.0, 0.0), (-1.0, 0.0)], ObservableKind::MapValue);
        let v = solve_poisson_at(&model, &StatePoint::scalar(0.3), &PoissonOpts::default(), 3)
            .unwrap();
        assert_relative_eq!(v.w, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn batch_iid_increments() {
        // maps ignore x, xi = u(g) = +/-1: n^-1 E[S_n^2] = 1 for every n
        let model = ar1_noise_atoms(0.0, &[(0.0, 1.0), (0.0, -1.0)], ObservableKind::MapValue);
        let est = sigma2_batch(&model, &InitDist::X0, &[64, 256, 1024], 4096, 5).unwrap();
        assert!((est.sigma2 - 1.0).abs() < 0.05, "sigma2 = {}", est.sigma2);
    }

    #[test]
    fn batch_rejects_short_grid() {
        let model = doubling_centered();
        assert!(sigma2_batch(&model, &InitDist::X0, &[16, 64], 64, 0).is_err());
    }

    #[test]
    fn batch_coboundary_telescopes() {
        let model = ar1_gaussian(0.5, ObservableKind::Coboundary { index: 0 });
        let est =
            sigma2_batch(&model, &InitDist::X0, &[256, 1024, 4096], 4096, 11).unwrap();
        assert!(est.sigma2 <= 0.01, "sigma2 = {}", est.sigma2);
    }

    #[test]
    fn poisson_route_doubling_quarter() {
        let model = doubling_centered();
        let nu = cesaro_measure(&model, 4096, 9, 8).unwrap();
        let opts = PoissonOpts { paths: 96, ..Default::default() };
        let est = sigma2_poisson(&model, &nu, 4096, &opts, 21).unwrap();
        assert!(
            (est.sigma2 - 0.25).abs() <= 3.0 * (est.se + est.tail_bound) + 0.01,
            "sigma2 = {} se = {}",
            est.sigma2,
            est.se
        );
    }

    #[test]
    fn degeneracy_product_form_guaranteed() {
        let model = ar1_noise_atoms(
            0.5,
            &[(1.0, 1.0), (-1.0, -1.0)],
            ObservableKind::ProductMapCoordinate { index: 0 },
        );
        let nu = cesaro_measure(&model, 1024, 3, 4).unwrap();
        let fake = VarianceEstimate {
            sigma2: 1.0,
            method: VarianceMethod::Batch,
            se: 0.1,
            tail_bound: 0.0,
            raw: 1.0,
            clamped: false,
            per_n: Vec::new(),
            truncation: None,
        };
        let report = degeneracy_test(
            &model,
            &fake,
            &fake,
            Some(&ObservableKind::ProductMapCoordinate { index: 0 }),
            &nu,
            17,
        )
        .unwrap();
        assert_eq!(report.verdict, DegeneracyVerdict::GuaranteedPositive);
        assert_eq!(report.pi_u.unwrap().value, 0.0);
    }

    #[test]
    fn degeneracy_coboundary_fit_recovers_chi() {
        // xi = chi(x) - chi(gx) with chi = x: exact representation in the
        // basis, so the residual is numerically zero
        let model = ar1_gaussian(0.5, ObservableKind::Coboundary { index: 0 });
        let nu = cesaro_measure(&model, 2048, 13, 4).unwrap();
        let batch = sigma2_batch(&model, &InitDist::X0, &[256, 1024, 4096], 2048, 3).unwrap();
        let opts = PoissonOpts { paths: 64, theta_samples: 16, ..Default::default() };
        let poisson = sigma2_poisson(&model, &nu, 512, &opts, 29).unwrap();
        let report = degeneracy_test(&model, &batch, &poisson, None, &nu, 31).unwrap();
        assert_eq!(report.verdict, DegeneracyVerdict::DegenerateCoboundarySuspected);
        let residual = report.residual.unwrap();
        assert!(residual <= 1e-6, "residual = {residual}");
        let coeffs = report.coefficients.unwrap();
        assert_relative_eq!(coeffs[0], 1.0, epsilon = 1e-6);
    }

    #[test]
    fn poisson_residual_identity() {
        // (1 - P)w = theta, rearranged: w(x) - theta(x) - (Pw)(x) = 0
        // within tail bound and noise, with Pw averaged over the atoms
        let model = doubling_centered();
        let opts = PoissonOpts { paths: 384, ..Default::default() };
        for (i, xv) in [0.15f64, 0.5, 0.85].iter().enumerate() {
            let x = StatePoint::scalar(*xv);
            let wx = solve_poisson_at(&model, &x, &opts, 600 + i as u64).unwrap();
            let th = theta_eval(&model, &x, 0, 0).unwrap();
            let atoms = match &model.pi {
                MapDistribution::Finite { atoms, .. } => atoms.clone(),
                _ => unreachable!(),
            };
            let mut pw = 0.0;
            let mut pw_noise = 0.0;
            for (j, g) in atoms.iter().enumerate() {
                let gx = g.apply(&x).unwrap();
                let wgx = solve_poisson_at(&model, &gx, &opts, 700 + (i * 2 + j) as u64).unwrap();
                pw += 0.5 * wgx.w;
                pw_noise += 0.5 * (wgx.se + wgx.tail_bound);
            }
            let residual = (wx.w - th.value - pw).abs();
            let allowance = wx.tail_bound + 3.0 * (wx.se + pw_noise);
            assert!(
                residual <= allowance,
                "x = {xv}: residual {residual} allowance {allowance}"
            );
        }
    }

    #[test]
    fn zero_observable_degenerate_zero_residual() {
        let model = ar1_noise_atoms(0.5, &[(1.0, 0.0), (-1.0, 0.0)], ObservableKind::MapValue);
        let nu = cesaro_measure(&model, 512, 3, 2).unwrap();
        let batch = sigma2_batch(&model, &InitDist::X0, &[64, 128, 256], 256, 3).unwrap();
        let opts = PoissonOpts { paths: 32, ..Default::default() };
        let poisson = sigma2_poisson(&model, &nu, 64, &opts, 5).unwrap();
        assert_relative_eq!(batch.sigma2, 0.0, epsilon = 1e-20);
        let report = degeneracy_test(&model, &batch, &poisson, None, &nu, 7).unwrap();
        assert_eq!(report.verdict, DegeneracyVerdict::DegenerateCoboundarySuspected);
        assert!(report.residual.unwrap() <= 1e-9);
    }
}

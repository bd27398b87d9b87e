//! Discretized Markov and Fourier kernels on an interpolation grid, the
//! leading-eigenvalue extractor, eigenvalue Taylor checks, and the
//! peripheral-spectrum scan behind the nonarithmeticity heuristic.
//!
//! The Fourier kernel P(t)f(y) = E_pi[e^{it xi(g,y)} f(gy)] is represented
//! as a dense complex matrix over grid nodes: row x_j accumulates
//! p_i e^{it xi(g_i, x_j)} times the interpolation weights of g_i x_j.
//! Interpolation weights are nonnegative and sum to one, so P(0) is a
//! stochastic matrix exactly. Only finite-support map distributions can be
//! discretized; generative models are directed to the Monte Carlo routes.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{cdot, cnorm2, CMat};
use crate::model::{MapDistribution, Metric, StatePoint, SystemModel};
use crate::par;
use crate::rng;
use crate::simulate::EmpiricalMeasure;
use crate::stats;

/// How grid coordinates map to states.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GridKind {
    /// 1D Euclidean state: state = [c].
    Line,
    /// 2D simplex under the Hilbert metric: state = [c, 1 - c].
    Simplex2,
}

/// Ordered interpolation nodes covering a truncation window.
#[derive(Debug, Clone, Serialize)]
pub struct OperatorGrid {
    pub nodes: Vec<f64>,
    pub kind: GridKind,
}

impl OperatorGrid {
    pub fn uniform_line(lo: f64, hi: f64, n: usize) -> Self {
        assert!(n >= 2 && hi > lo);
        let nodes = (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect();
        OperatorGrid { nodes, kind: GridKind::Line }
    }

    /// Window over the [0.005, 0.995] quantiles of the measure, padded by
    /// 10% of the window width on each side.
    pub fn from_measure(
        model: &SystemModel,
        nu_hat: &EmpiricalMeasure,
        n_nodes: usize,
    ) -> Result<Self> {
        if nu_hat.is_empty() {
            return Err(Error::Parameter("empty measure for grid construction".into()));
        }
        let kind = match (model.dim, &model.metric) {
            (1, Metric::Euclidean { .. }) => GridKind::Line,
            (2, Metric::Hilbert) => GridKind::Simplex2,
            _ => {
                return Err(Error::Unsupported(
                    "operator grids cover 1D Euclidean models and 2D simplex models; \
                     use the Monte Carlo routes for this state space"
                        .into(),
                ))
            }
        };
        let lo_q = nu_hat.quantile_coord(0, 0.005);
        let hi_q = nu_hat.quantile_coord(0, 0.995);
        let pad = 0.10 * (hi_q - lo_q).max(1e-9);
        let (lo, hi) = match kind {
            GridKind::Line => (lo_q - pad, hi_q + pad),
            GridKind::Simplex2 => ((lo_q - pad).max(1e-12), (hi_q + pad).min(1.0 - 1e-12)),
        };
        let nodes = (0..n_nodes.max(2))
            .map(|i| lo + (hi - lo) * i as f64 / (n_nodes - 1) as f64)
            .collect();
        Ok(OperatorGrid { nodes, kind })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Grid with doubled node density over the same window.
    pub fn refine(&self) -> Self {
        let mut nodes = Vec::with_capacity(self.nodes.len() * 2 - 1);
        for w in self.nodes.windows(2) {
            nodes.push(w[0]);
            nodes.push(0.5 * (w[0] + w[1]));
        }
        nodes.push(*self.nodes.last().unwrap());
        OperatorGrid { nodes, kind: self.kind }
    }

    pub fn state_at(&self, i: usize) -> StatePoint {
        let c = self.nodes[i];
        match self.kind {
            GridKind::Line => StatePoint::new(vec![c]),
            GridKind::Simplex2 => StatePoint::new(vec![c, 1.0 - c]),
        }
    }

    pub fn coord_of(&self, x: &StatePoint) -> f64 {
        x.coords[0]
    }

    /// Piecewise-linear interpolation of coordinate `c`: (lower index,
    /// weight on lower node, clamped-outside-window flag).
    pub fn locate(&self, c: f64) -> (usize, f64, bool) {
        let n = self.nodes.len();
        if c <= self.nodes[0] {
            return (0, 1.0, c < self.nodes[0]);
        }
        if c >= self.nodes[n - 1] {
            return (n - 2, 0.0, c > self.nodes[n - 1]);
        }
        let mut lo = 0usize;
        let mut hi = n - 1;
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if self.nodes[mid] <= c {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let t = (c - self.nodes[lo]) / (self.nodes[lo + 1] - self.nodes[lo]);
        (lo, 1.0 - t, false)
    }

    /// Project a weighted empirical measure onto node weights.
    pub fn project_measure(&self, nu: &EmpiricalMeasure) -> Vec<f64> {
        let mut w = vec![0.0f64; self.len()];
        for (x, wt) in nu.points.iter().zip(&nu.weights) {
            let (i, wl, _) = self.locate(self.coord_of(x));
            w[i] += wt * wl;
            w[i + 1] += wt * (1.0 - wl);
        }
        w
    }

    /// Interpolate node values at a state.
    pub fn interp(&self, values: &[Complex64], x: &StatePoint) -> Complex64 {
        let (i, wl, _) = self.locate(self.coord_of(x));
        values[i] * wl + values[i + 1] * (1.0 - wl)
    }
}

/// Dense discretization of the Fourier kernel P(t).
#[derive(Debug, Clone)]
pub struct FourierMatrix {
    pub t: f64,
    pub mat: CMat,
    /// Fraction of transition mass clamped to the window boundary.
    pub leak_mass: f64,
}

fn finite_atoms(model: &SystemModel) -> Result<(&[crate::model::MapSample], &[f64])> {
    match &model.pi {
        MapDistribution::Finite { atoms, weights } => Ok((atoms, weights)),
        MapDistribution::Generative { label, .. } => Err(Error::Unsupported(format!(
            "operator discretization needs a finite-support map distribution \
             (got generative '{label}'); use the Monte Carlo routes"
        ))),
    }
}

/// Row of interpolation entries shared by P(t) and the derivative kernels.
fn assemble<W>(model: &SystemModel, grid: &OperatorGrid, weight: W) -> Result<FourierMatrix>
where
    W: Fn(f64) -> Complex64 + Sync,
{
    let (atoms, probs) = finite_atoms(model)?;
    let n = grid.len();
    let rows = par::map_indexed(n, |j| -> Result<(Vec<Complex64>, f64)> {
        let x = grid.state_at(j);
        let mut row = vec![Complex64::new(0.0, 0.0); n];
        let mut leak = 0.0f64;
        for (g, p) in atoms.iter().zip(probs) {
            let xi = model.xi(g, &x)?;
            let img = g.apply(&x)?;
            let (i, wl, clamped) = grid.locate(grid.coord_of(&img));
            if clamped {
                leak += p;
            }
            let a = weight(xi) * *p;
            row[i] += a * wl;
            row[i + 1] += a * (1.0 - wl);
        }
        Ok((row, leak))
    });
    let mut mat = CMat::zeros(n);
    let mut leak_mass = 0.0;
    for (j, r) in rows.into_iter().enumerate() {
        let (row, leak) = r?;
        mat.data[j * n..(j + 1) * n].copy_from_slice(&row);
        leak_mass += leak;
    }
    Ok(FourierMatrix { t: 0.0, mat, leak_mass: leak_mass / n as f64 })
}

/// Discretize P(t). At t = 0 the matrix is row-stochastic.
pub fn build_operator(model: &SystemModel, grid: &OperatorGrid, t: f64) -> Result<FourierMatrix> {
    let mut fm = assemble(model, grid, |xi| {
        // e^{i t xi}
        Complex64::new(0.0, t * xi).exp()
    })?;
    fm.t = t;
    Ok(fm)
}

/// Derivative kernels L_k f(x) = E[(i xi(g,x))^k f(gx)], k = 1..=kmax.
pub fn derivative_kernels(
    model: &SystemModel,
    grid: &OperatorGrid,
    kmax: usize,
) -> Result<Vec<CMat>> {
    (1..=kmax)
        .map(|k| {
            let fm = assemble(model, grid, |xi| Complex64::new(0.0, xi).powu(k as u32))?;
            Ok(fm.mat)
        })
        .collect()
}

/// Dominant eigenpair with the spectral gap.
#[derive(Debug, Clone, Serialize)]
pub struct EigenPair {
    pub lambda: Complex64,
    #[serde(skip)]
    pub vector: Vec<Complex64>,
    /// |lambda| - |second eigenvalue| by one deflation step.
    pub gap: f64,
    pub second_modulus: f64,
    pub iterations: usize,
    pub residual: f64,
}

const EIG_TOL: f64 = 1e-12;
const EIG_MAX_ITER: usize = 20_000;

struct MatOp<'a> {
    mat: &'a CMat,
}

impl LinOp for MatOp<'_> {
    fn apply(&self, x: &[Complex64]) -> Vec<Complex64> {
        self.mat.matvec(x)
    }
}

fn power_iterate(
    mat: &CMat,
    start: Vec<Complex64>,
) -> Result<(Complex64, Vec<Complex64>, usize, f64)> {
    power_iterate_op(&MatOp { mat }, start)
}

/// Dominant eigenvalue by power iteration; eigenvector normalized so its
/// nu-weighted average is 1 when possible; gap estimated by deflating with
/// the left eigenvector.
pub fn leading_eigen(fm: &FourierMatrix, nu_weights: &[f64]) -> Result<EigenPair> {
    let n = fm.mat.n;
    assert_eq!(nu_weights.len(), n);
    let ones = vec![Complex64::new(1.0, 0.0); n];
    let (lambda, mut v, iterations, residual) = power_iterate(&fm.mat, ones)?;

    // normalization <nu, v> = 1
    let nu_v: Complex64 = v
        .iter()
        .zip(nu_weights)
        .map(|(x, w)| x * Complex64::new(*w, 0.0))
        .sum();
    if nu_v.norm() > 1e-10 {
        for x in v.iter_mut() {
            *x /= nu_v;
        }
    }

    // left eigenvector of the same eigenvalue
    let start_left: Vec<Complex64> = nu_weights
        .iter()
        .map(|w| Complex64::new((*w).max(1e-12), 0.0))
        .collect();
    let adj = AdjointOp { mat: &fm.mat };
    let (_, phi, _, _) = power_iterate_op(&adj, start_left)?;

    // one deflation step: A2 x = A x - lambda v <phi, x> / <phi, v>
    let phi_v = cdot(&phi, &v);
    if phi_v.norm() < 1e-14 {
        return Ok(EigenPair {
            lambda,
            vector: v,
            gap: f64::NAN,
            second_modulus: f64::NAN,
            iterations,
            residual,
        });
    }
    let deflated = DeflatedOp { mat: &fm.mat, lambda, v: &v, phi: &phi, phi_v };
    // start orthogonal-ish to v: ramp over node index
    let start2: Vec<Complex64> = (0..n)
        .map(|i| Complex64::new(i as f64 / n as f64 - 0.5, 0.0))
        .collect();
    let second_modulus = match power_iterate_op(&deflated, start2) {
        Ok((l2, _, _, _)) => l2.norm(),
        // two near-equal moduli below the dominant one still bound the gap
        Err(Error::AmbiguousDominance { lambda1, .. }) => lambda1.norm(),
        Err(e) => return Err(e),
    };
    Ok(EigenPair {
        lambda,
        vector: v,
        gap: lambda.norm() - second_modulus,
        second_modulus,
        iterations,
        residual,
    })
}

trait LinOp {
    fn apply(&self, x: &[Complex64]) -> Vec<Complex64>;
}

struct AdjointOp<'a> {
    mat: &'a CMat,
}

impl LinOp for AdjointOp<'_> {
    fn apply(&self, x: &[Complex64]) -> Vec<Complex64> {
        self.mat.matvec_adjoint(x)
    }
}

struct DeflatedOp<'a> {
    mat: &'a CMat,
    lambda: Complex64,
    v: &'a [Complex64],
    phi: &'a [Complex64],
    phi_v: Complex64,
}

impl LinOp for DeflatedOp<'_> {
    fn apply(&self, x: &[Complex64]) -> Vec<Complex64> {
        let mut ax = self.mat.matvec(x);
        let coef = self.lambda * cdot(self.phi, x) / self.phi_v;
        for (a, vi) in ax.iter_mut().zip(self.v) {
            *a -= coef * vi;
        }
        ax
    }
}

fn power_iterate_op<O: LinOp>(
    op: &O,
    start: Vec<Complex64>,
) -> Result<(Complex64, Vec<Complex64>, usize, f64)> {
    let mut v = start;
    let norm = cnorm2(&v);
    if norm == 0.0 {
        return Err(Error::Parameter("zero start vector".into()));
    }
    for x in v.iter_mut() {
        *x /= norm;
    }
    let mut lambda = Complex64::new(0.0, 0.0);
    let mut growth = GrowthTracker::new();
    for it in 1..=EIG_MAX_ITER {
        let av = op.apply(&v);
        let new_lambda = cdot(&v, &av);
        let mut res = 0.0f64;
        for (a, b) in av.iter().zip(&v) {
            res += (a - new_lambda * b).norm_sqr();
        }
        res = res.sqrt();
        let norm = cnorm2(&av);
        if norm == 0.0 {
            return Ok((Complex64::new(0.0, 0.0), v, it, 0.0));
        }
        growth.push(norm);
        v = av.into_iter().map(|x| x / norm).collect();
        if res <= EIG_TOL * new_lambda.norm().max(1.0) {
            return Ok((new_lambda, v, it, res));
        }
        lambda = new_lambda;
    }
    // stagnation: the Rayleigh quotient rotates between near-equal moduli;
    // the trailing geometric growth rate still estimates the modulus
    Err(Error::AmbiguousDominance {
        lambda1: lambda,
        lambda2: Complex64::new(growth.rate(), 0.0),
    })
}

/// Trailing geometric mean of iterate norm ratios.
struct GrowthTracker {
    ring: [f64; 64],
    len: usize,
    pos: usize,
}

impl GrowthTracker {
    fn new() -> Self {
        GrowthTracker { ring: [0.0; 64], len: 0, pos: 0 }
    }

    fn push(&mut self, norm_ratio: f64) {
        self.ring[self.pos] = norm_ratio.max(1e-300).ln();
        self.pos = (self.pos + 1) % self.ring.len();
        self.len = (self.len + 1).min(self.ring.len());
    }

    fn rate(&self) -> f64 {
        if self.len == 0 {
            return 0.0;
        }
        (self.ring[..self.len].iter().sum::<f64>() / self.len as f64).exp()
    }
}

/// Leading eigenvalue of P(t) on the grid.
pub fn lambda_at(
    model: &SystemModel,
    grid: &OperatorGrid,
    nu_weights: &[f64],
    t: f64,
) -> Result<Complex64> {
    let fm = build_operator(model, grid, t)?;
    Ok(leading_eigen(&fm, nu_weights)?.lambda)
}

/// Drift and variance read off the eigenvalue expansion
/// lambda(t) = 1 + i m t - sigma^2 t^2 / 2 + O(t^3).
#[derive(Debug, Clone, Serialize)]
pub struct ExpansionReport {
    pub m_hat: f64,
    pub sigma2_hat: f64,
    pub h: f64,
    /// |lambda(t) - (1 + i m t - sigma^2 t^2/2)| / |t|^3 over the t grid;
    /// bounded when the third-order remainder holds.
    pub remainder: Vec<(f64, f64)>,
    /// Richardson pair disagreement for the second derivative.
    pub richardson_spread: f64,
}

/// Central finite differences at steps h and h/2 with Richardson
/// combination. The default step is 0.05 / sqrt(sigma2_prior + 1).
pub fn lambda_expansion(
    model: &SystemModel,
    grid: &OperatorGrid,
    nu_weights: &[f64],
    t_grid: &[f64],
    h: Option<f64>,
    sigma2_prior: Option<f64>,
) -> Result<ExpansionReport> {
    let h = h.unwrap_or_else(|| 0.05 / (sigma2_prior.unwrap_or(0.0) + 1.0).sqrt());
    if !(h > 0.0) {
        return Err(Error::StepSize(format!("step h = {h} must be positive")));
    }
    let lam = |t: f64| lambda_at(model, grid, nu_weights, t);
    let l0 = lam(0.0)?;
    let (lp, lm) = (lam(h)?, lam(-h)?);
    let (lp2, lm2) = (lam(h / 2.0)?, lam(-h / 2.0)?);

    let d1 = |p: Complex64, m: Complex64, step: f64| (p - m) / Complex64::new(2.0 * step, 0.0);
    let d2 = |p: Complex64, m: Complex64, step: f64| {
        (p - l0 * 2.0 + m) / Complex64::new(step * step, 0.0)
    };

    let d1_h = d1(lp, lm, h);
    let d1_h2 = d1(lp2, lm2, h / 2.0);
    let first = (d1_h2 * 4.0 - d1_h) / 3.0;

    let d2_h = d2(lp, lm, h);
    let d2_h2 = d2(lp2, lm2, h / 2.0);
    let second = (d2_h2 * 4.0 - d2_h) / 3.0;

    let spread = (d2_h2 - d2_h).norm();
    if spread > 0.5 * d2_h2.norm().max(1e-3) {
        return Err(Error::StepSize(format!(
            "Richardson pair disagrees: D2(h) = {d2_h}, D2(h/2) = {d2_h2}; reduce h = {h}"
        )));
    }

    let m_hat = first.im;
    let sigma2_hat = -second.re;

    let mut remainder = Vec::new();
    for &t in t_grid {
        if t == 0.0 {
            continue;
        }
        let l = lam(t)?;
        let approx = Complex64::new(1.0 - 0.5 * sigma2_hat * t * t, m_hat * t);
        remainder.push((t, (l - approx).norm() / t.abs().powi(3)));
    }

    Ok(ExpansionReport { m_hat, sigma2_hat, h, remainder, richardson_spread: spread })
}

/// Entrywise residual table for the operator Taylor expansion of order n:
/// max |P(t) - P - sum_{k<=n} t^k/k! L_k| over a decreasing t ladder.
#[derive(Debug, Clone, Serialize)]
pub struct TaylorResidualRow {
    pub order: usize,
    pub residuals: Vec<(f64, f64)>,
}

pub fn taylor_residuals(
    model: &SystemModel,
    grid: &OperatorGrid,
    orders: &[usize],
    t_ladder: &[f64],
) -> Result<Vec<TaylorResidualRow>> {
    let kmax = orders.iter().copied().max().unwrap_or(1);
    let kernels = derivative_kernels(model, grid, kmax)?;
    let p0 = build_operator(model, grid, 0.0)?;
    let mut rows = Vec::new();
    for &order in orders {
        let mut residuals = Vec::new();
        for &t in t_ladder {
            let pt = build_operator(model, grid, t)?;
            let mut max_res = 0.0f64;
            let mut factorial = 1.0f64;
            // accumulate sum_{k<=order} t^k/k! L_k entrywise
            let mut approx = p0.mat.clone();
            for (k, lk) in kernels.iter().take(order).enumerate() {
                factorial *= (k + 1) as f64;
                let coef = Complex64::new(t.powi(k as i32 + 1) / factorial, 0.0);
                for (a, b) in approx.data.iter_mut().zip(&lk.data) {
                    *a += coef * b;
                }
            }
            for (a, b) in pt.mat.data.iter().zip(&approx.data) {
                max_res = max_res.max((a - b).norm());
            }
            residuals.push((t, max_res));
        }
        rows.push(TaylorResidualRow { order, residuals });
    }
    Ok(rows)
}

/// Both sides of the identity E[f(R_n Z) e^{i t S_n}] = mu(P(t)^n f) with a
/// z-score combining Monte Carlo error and an interpolation allowance from
/// one grid refinement.
#[derive(Debug, Clone, Serialize)]
pub struct CharCheck {
    pub t: f64,
    pub n: usize,
    pub operator_value: Complex64,
    pub mc_value: Complex64,
    pub mc_se: f64,
    pub interp_allowance: f64,
    pub z: f64,
}

pub fn char_function_check(
    model: &SystemModel,
    grid: &OperatorGrid,
    z0: &StatePoint,
    f_nodes: &[f64],
    t: f64,
    n: usize,
    paths: usize,
    seed: u64,
) -> Result<CharCheck> {
    if f_nodes.len() != grid.len() {
        return Err(Error::Parameter("f must be given on the grid nodes".into()));
    }
    let f_c: Vec<Complex64> = f_nodes.iter().map(|&v| Complex64::new(v, 0.0)).collect();

    let operator_value = operator_side(model, grid, z0, &f_c, t, n)?;

    // the same piecewise-linear f on a doubled grid bounds the
    // discretization error
    let fine = grid.refine();
    let f_fine: Vec<Complex64> = fine
        .nodes
        .iter()
        .map(|&c| {
            grid.interp(&f_c, &match grid.kind {
                GridKind::Line => StatePoint::new(vec![c]),
                GridKind::Simplex2 => StatePoint::new(vec![c, 1.0 - c]),
            })
        })
        .collect();
    let op_fine = operator_side(model, &fine, z0, &f_fine, t, n)?;
    let interp_allowance = (operator_value - op_fine).norm();

    // Monte Carlo side, evaluating the same interpolated f
    let samples = par::map_indexed(paths, |p| -> Result<Complex64> {
        let mut r = rng::substream(seed, p as u64);
        let mut z = z0.clone();
        let mut s = 0.0f64;
        for _ in 0..n {
            let g = model.pi.sample(&mut r);
            s += model.xi(&g, &z)?;
            z = g.apply(&z)?;
        }
        Ok(grid.interp(&f_c, &z) * Complex64::new(0.0, t * s).exp())
    });
    let samples: Vec<Complex64> = samples.into_iter().collect::<Result<_>>()?;
    let mean = samples.iter().sum::<Complex64>() / paths as f64;
    let var_re = samples.iter().map(|z| (z.re - mean.re).powi(2)).sum::<f64>()
        / (paths as f64 - 1.0);
    let var_im = samples.iter().map(|z| (z.im - mean.im).powi(2)).sum::<f64>()
        / (paths as f64 - 1.0);
    let mc_se = ((var_re + var_im) / paths as f64).sqrt();

    let gap = (mean - operator_value).norm();
    let z = gap / (mc_se + interp_allowance).max(1e-300);
    Ok(CharCheck {
        t,
        n,
        operator_value,
        mc_value: mean,
        mc_se,
        interp_allowance,
        z,
    })
}

fn operator_side(
    model: &SystemModel,
    grid: &OperatorGrid,
    z0: &StatePoint,
    f_nodes: &[Complex64],
    t: f64,
    n: usize,
) -> Result<Complex64> {
    let fm = build_operator(model, grid, t)?;
    let mut v = f_nodes.to_vec();
    for _ in 0..n {
        v = fm.mat.matvec(&v);
    }
    Ok(grid.interp(&v, z0))
}

/// One scanned point of the peripheral spectrum.
#[derive(Debug, Clone, Serialize)]
pub struct PeripheralPoint {
    pub t: f64,
    pub modulus: Option<f64>,
    pub ambiguous: bool,
}

/// Continued-fraction rational-dependence check of ln(rho2)/ln(rho1).
#[derive(Debug, Clone, Serialize)]
pub struct RationalCheck {
    pub ratio: f64,
    /// (p, q, error) for the smallest admissible denominator, if any.
    pub found: Option<(i64, u64, f64)>,
}

/// Scan verdict.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum ScanVerdict {
    NonarithmeticConsistent,
    ArithmeticSuspect { at_t: f64, modulus: f64 },
    Inconclusive,
}

#[derive(Debug, Clone, Serialize)]
pub struct PeripheralScan {
    pub points: Vec<PeripheralPoint>,
    pub max_modulus: f64,
    pub margin: f64,
    pub verdict: ScanVerdict,
    pub rational: Option<RationalCheck>,
}

/// Estimate r(P(t)) over a t-grid excluding 0; the scan is
/// nonarithmetic-consistent when every modulus stays below 1 - margin.
/// For matrix models with two strictly positive atoms the log-ratio
/// rational-dependence heuristic runs as well.
pub fn peripheral_scan(
    model: &SystemModel,
    grid: &OperatorGrid,
    nu_weights: &[f64],
    ts: &[f64],
    margin: f64,
) -> Result<PeripheralScan> {
    let mut points = Vec::new();
    let mut max_modulus = 0.0f64;
    let mut suspect: Option<(f64, f64)> = None;
    let mut ambiguous_near_threshold = false;
    for &t in ts {
        if t == 0.0 {
            continue;
        }
        let fm = build_operator(model, grid, t)?;
        match leading_eigen(&fm, nu_weights) {
            Ok(pair) => {
                let m = pair.lambda.norm();
                max_modulus = max_modulus.max(m);
                if m >= 1.0 - margin && suspect.is_none() {
                    suspect = Some((t, m));
                }
                points.push(PeripheralPoint { t, modulus: Some(m), ambiguous: false });
            }
            Err(Error::AmbiguousDominance { lambda1, lambda2 }) => {
                let m = lambda1.norm().max(lambda2.norm());
                max_modulus = max_modulus.max(m);
                if m >= 1.0 - margin && suspect.is_none() {
                    suspect = Some((t, m));
                } else if m >= 1.0 - 10.0 * margin {
                    // an unresolved modulus this close to 1 taints the scan
                    ambiguous_near_threshold = true;
                }
                points.push(PeripheralPoint { t, modulus: Some(m), ambiguous: true });
            }
            Err(e) => return Err(e),
        }
    }

    let rational = rational_check_for_model(model)?;

    let verdict = if let Some((at_t, modulus)) = suspect {
        ScanVerdict::ArithmeticSuspect { at_t, modulus }
    } else if rational.as_ref().is_some_and(|r| r.found.is_some()) {
        ScanVerdict::ArithmeticSuspect { at_t: f64::NAN, modulus: f64::NAN }
    } else if ambiguous_near_threshold {
        ScanVerdict::Inconclusive
    } else {
        ScanVerdict::NonarithmeticConsistent
    };

    Ok(PeripheralScan { points, max_modulus, margin, verdict, rational })
}

fn rational_check_for_model(model: &SystemModel) -> Result<Option<RationalCheck>> {
    if model.family != crate::model::ModelFamily::PositiveMatrix {
        return Ok(None);
    }
    let MapDistribution::Finite { atoms, .. } = &model.pi else {
        return Ok(None);
    };
    let mut radii = Vec::new();
    for atom in atoms {
        if let crate::model::MapAction::PositiveMatrix { m } = &atom.action {
            if m.data.iter().all(|&x| x > 0.0) {
                radii.push(crate::linalg::perron_radius(m)?);
            }
        }
        if radii.len() == 2 {
            break;
        }
    }
    if radii.len() < 2 {
        return Ok(None);
    }
    Ok(Some(rational_log_ratio_check(radii[0], radii[1])))
}

/// Rational-dependence detector for the pair of spectral radii: expands
/// x = ln(rho2)/ln(rho1) in continued fractions and reports the smallest
/// denominator q <= 10^6 whose convergent matches x at double-precision
/// exactness (error < 1e-12 and below the 1e-14 (1 + |x|) rounding scale;
/// a plain 1e-12 window would accept a convergent of every real number).
pub fn rational_log_ratio_check(rho1: f64, rho2: f64) -> RationalCheck {
    let ratio = rho2.ln() / rho1.ln();
    let mut found = None;
    for (p, q, err) in stats::convergents(ratio, 1_000_000) {
        if err < 1e-12 && err <= 1e-14 * (1.0 + ratio.abs()) {
            found = Some((p, q, err));
            break;
        }
    }
    RationalCheck { ratio, found }
}

//! Shared statistical utilities: running moments, batch means, KS distance,
//! Spearman trend test, line fits, quantiles, and 1D Wasserstein distance.

use statrs::distribution::{ContinuousCDF, Normal};

/// Mean and standard error of a sample.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
    pub n: usize,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Estimate { value, se: 0.0, n: 0 }
    }

    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return Estimate { value: f64::NAN, se: f64::NAN, n: 0 };
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        if n == 1 {
            return Estimate { value: mean, se: f64::INFINITY, n };
        }
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
        Estimate { value: mean, se: (var / n as f64).sqrt(), n }
    }
}

/// Standard normal CDF.
pub fn std_normal_cdf(u: f64) -> f64 {
    let normal = Normal::new(0.0, 1.0).unwrap();
    normal.cdf(u)
}

/// Exact Kolmogorov–Smirnov sup-distance between the empirical CDF of `xs`
/// and a reference CDF, taking both one-sided gaps at every order statistic.
pub fn ks_distance<F: Fn(f64) -> f64>(xs: &[f64], cdf: F) -> f64 {
    let mut sorted = xs.to_vec();
    sorted.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in sorted.iter().enumerate() {
        let f = cdf(x);
        let upper = ((i as f64 + 1.0) / n - f).abs();
        let lower = (f - i as f64 / n).abs();
        d = d.max(upper).max(lower);
    }
    d
}

/// Spearman rank correlation of `ys` against their index order.
pub fn spearman_vs_index(ys: &[f64]) -> f64 {
    let n = ys.len();
    let ranks = ranks(ys);
    let idx: Vec<f64> = (0..n).map(|i| i as f64 + 1.0).collect();
    pearson(&idx, &ranks)
}

fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].partial_cmp(&xs[b]).unwrap());
    let mut r = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        // average ranks over ties
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            r[order[k]] = avg;
        }
        i = j + 1;
    }
    r
}

fn pearson(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        0.0
    } else {
        sxy / (sxx * syy).sqrt()
    }
}

/// One-sided p-value for positive Spearman correlation against the index.
///
/// Exact by permutation enumeration for m <= 8, normal approximation above.
pub fn spearman_increasing_pvalue(ys: &[f64]) -> f64 {
    let m = ys.len();
    if m < 3 {
        return 1.0;
    }
    let observed = spearman_vs_index(ys);
    if m <= 8 {
        let mut perm: Vec<usize> = (0..m).collect();
        let mut count = 0usize;
        let mut total = 0usize;
        permute(&mut perm, 0, &mut |p| {
            let vals: Vec<f64> = p.iter().map(|&i| ys[i]).collect();
            let rho = spearman_vs_index(&vals);
            if rho >= observed - 1e-12 {
                count += 1;
            }
            total += 1;
        });
        count as f64 / total as f64
    } else {
        // z = rho * sqrt(m - 1)
        let z = observed * ((m - 1) as f64).sqrt();
        1.0 - std_normal_cdf(z)
    }
}

fn permute<F: FnMut(&[usize])>(perm: &mut Vec<usize>, k: usize, visit: &mut F) {
    if k == perm.len() {
        visit(perm);
        return;
    }
    for i in k..perm.len() {
        perm.swap(k, i);
        permute(perm, k + 1, visit);
        perm.swap(k, i);
    }
}

/// Batch-means standard error for a correlated series (MCMC style).
///
/// Splits the series into `nbatches` contiguous batches and uses the
/// variance of the batch means.
pub fn batch_means_se(xs: &[f64], nbatches: usize) -> f64 {
    let n = xs.len();
    if n < 2 * nbatches || nbatches < 2 {
        return Estimate::from_samples(xs).se;
    }
    let bsize = n / nbatches;
    let means: Vec<f64> = (0..nbatches)
        .map(|b| {
            let chunk = &xs[b * bsize..(b + 1) * bsize];
            chunk.iter().sum::<f64>() / bsize as f64
        })
        .collect();
    Estimate::from_samples(&means).se
}

/// Ordinary least squares line fit `y = a + b x`; returns (a, b).
pub fn fit_line(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
    }
    if sxx == 0.0 {
        return (my, 0.0);
    }
    let b = sxy / sxx;
    (my - b * mx, b)
}

/// Quantile of a sample by linear interpolation of order statistics.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 0 {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

/// Exact Wasserstein-1 distance between two weighted empirical measures on
/// the line, by sweeping the merged support and integrating |F - G|.
pub fn wasserstein1_weighted(a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
    let mut pa: Vec<(f64, f64)> = a.to_vec();
    let mut pb: Vec<(f64, f64)> = b.to_vec();
    pa.sort_by(|u, v| u.0.partial_cmp(&v.0).unwrap());
    pb.sort_by(|u, v| u.0.partial_cmp(&v.0).unwrap());
    let wa: f64 = pa.iter().map(|p| p.1).sum();
    let wb: f64 = pb.iter().map(|p| p.1).sum();

    let (mut i, mut j) = (0usize, 0usize);
    let (mut fa, mut fb) = (0.0f64, 0.0f64);
    let mut prev = f64::NAN;
    let mut total = 0.0f64;
    while i < pa.len() || j < pb.len() {
        let x = match (pa.get(i), pb.get(j)) {
            (Some(u), Some(v)) => u.0.min(v.0),
            (Some(u), None) => u.0,
            (None, Some(v)) => v.0,
            (None, None) => break,
        };
        if prev.is_finite() && x > prev {
            total += (fa - fb).abs() * (x - prev);
        }
        while i < pa.len() && pa[i].0 <= x {
            fa += pa[i].1 / wa;
            i += 1;
        }
        while j < pb.len() && pb[j].0 <= x {
            fb += pb[j].1 / wb;
            j += 1;
        }
        prev = x;
    }
    total
}

/// Continued-fraction convergents of `x` with denominators bounded by `qmax`.
pub fn convergents(x: f64, qmax: u64) -> Vec<(i64, u64, f64)> {
    let mut out = Vec::new();
    let (mut p0, mut q0, mut p1, mut q1): (i64, u64, i64, u64) = (1, 0, x.floor() as i64, 1);
    out.push((p1, q1, (x - p1 as f64).abs()));
    let mut frac = x - x.floor();
    for _ in 0..64 {
        if frac.abs() < 1e-18 {
            break;
        }
        let y = 1.0 / frac;
        let a = y.floor();
        frac = y - a;
        if a <= 0.0 || a > (u64::MAX / 2) as f64 {
            break;
        }
        let a = a as i64;
        let p2 = a.saturating_mul(p1).saturating_add(p0);
        let q2 = (a as u64).saturating_mul(q1).saturating_add(q0);
        if q2 > qmax {
            break;
        }
        let err = (x - p2 as f64 / q2 as f64).abs();
        out.push((p2, q2, err));
        p0 = p1;
        q0 = q1;
        p1 = p2;
        q1 = q2;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn ks_distance_takes_both_gaps() {
        // single point at 0.5 against U[0,1]: D = 0.5 from both sides
        let d = ks_distance(&[0.5], |x| x.clamp(0.0, 1.0));
        assert_relative_eq!(d, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn ks_distance_exact_small_case() {
        // two points {0.2, 0.9} vs U[0,1]:
        // at 0.2: |1/2 - 0.2| = 0.3, |0.2 - 0| = 0.2
        // at 0.9: |1 - 0.9| = 0.1, |0.9 - 1/2| = 0.4
        let d = ks_distance(&[0.9, 0.2], |x| x.clamp(0.0, 1.0));
        assert_relative_eq!(d, 0.4, epsilon = 1e-12);
    }

    #[test]
    fn spearman_monotone_is_one() {
        assert_relative_eq!(spearman_vs_index(&[1.0, 2.0, 5.0, 9.0]), 1.0);
        assert_relative_eq!(spearman_vs_index(&[9.0, 5.0, 2.0, 1.0]), -1.0);
    }

    #[test]
    fn spearman_small_sample_cannot_reject() {
        // m = 3 strictly increasing: p = 1/6 > 0.05
        let p = spearman_increasing_pvalue(&[1.0, 2.0, 3.0]);
        assert!(p > 0.05 && p < 0.2, "p = {p}");
    }

    #[test]
    fn wasserstein_point_masses() {
        let a = [(0.0, 1.0)];
        let b = [(2.0, 1.0)];
        assert_relative_eq!(wasserstein1_weighted(&a, &b), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn wasserstein_sorted_sample_formula() {
        // equal-size uniform-weight samples: W1 = mean |x_(i) - y_(i)|
        let a: Vec<(f64, f64)> = [1.0, 3.0, 5.0].iter().map(|&x| (x, 1.0)).collect();
        let b: Vec<(f64, f64)> = [2.0, 3.0, 7.0].iter().map(|&x| (x, 1.0)).collect();
        let expect = (1.0 + 0.0 + 2.0) / 3.0;
        assert_relative_eq!(wasserstein1_weighted(&a, &b), expect, epsilon = 1e-12);
    }

    #[test]
    fn convergents_of_exact_rational() {
        let cs = convergents(2.0, 1_000_000);
        assert_eq!(cs[0], (2, 1, 0.0));
    }

    #[test]
    fn fit_line_recovers_slope() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let ys: Vec<f64> = xs.iter().map(|x| 0.5 - 2.0 * x).collect();
        let (a, b) = fit_line(&xs, &ys);
        assert_relative_eq!(a, 0.5, epsilon = 1e-12);
        assert_relative_eq!(b, -2.0, epsilon = 1e-12);
    }
}

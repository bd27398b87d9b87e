//! Small dense-matrix helpers: real matrices for model maps, complex
//! matrices for discretized Fourier operators.

use crate::error::{Error, Result};
use crate::par;
use num_complex::Complex64;

/// Dense real matrix, row-major, square or rectangular.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols);
        Mat { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = rows[0].len();
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c);
            data.extend_from_slice(row);
        }
        Mat::new(r, c, data)
    }

    pub fn identity(n: usize) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        Mat::new(n, n, data)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.rows);
        self.matvec_into(x, &mut out);
        out
    }

    /// y = A x written into `out` (cleared first); no allocation when the
    /// buffer has capacity.
    pub fn matvec_into(&self, x: &[f64], out: &mut Vec<f64>) {
        assert_eq!(x.len(), self.cols);
        out.clear();
        for i in 0..self.rows {
            let row = &self.data[i * self.cols..(i + 1) * self.cols];
            out.push(row.iter().zip(x).map(|(a, b)| a * b).sum());
        }
    }

    pub fn matmul(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.rows);
        let mut data = vec![0.0; self.rows * other.cols];
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    data[i * other.cols + j] += a * other.get(k, j);
                }
            }
        }
        Mat::new(self.rows, other.cols, data)
    }

    pub fn transpose(&self) -> Mat {
        let mut data = vec![0.0; self.rows * self.cols];
        for i in 0..self.rows {
            for j in 0..self.cols {
                data[j * self.rows + i] = self.get(i, j);
            }
        }
        Mat::new(self.cols, self.rows, data)
    }

    /// Spectral norm (largest singular value) via power iteration on AᵀA.
    pub fn op_norm2(&self) -> f64 {
        if self.rows == 1 && self.cols == 1 {
            return self.data[0].abs();
        }
        let ata = self.transpose().matmul(self);
        let n = ata.cols;
        let mut v = vec![1.0 / (n as f64).sqrt(); n];
        let mut lambda = 0.0f64;
        for _ in 0..10_000 {
            let w = ata.matvec(&v);
            let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 {
                return 0.0;
            }
            let next: Vec<f64> = w.iter().map(|x| x / norm).collect();
            let new_lambda = next
                .iter()
                .zip(ata.matvec(&next))
                .map(|(a, b)| a * b)
                .sum::<f64>();
            v = next;
            if (new_lambda - lambda).abs() <= 1e-15 * new_lambda.abs().max(1.0) {
                lambda = new_lambda;
                break;
            }
            lambda = new_lambda;
        }
        lambda.max(0.0).sqrt()
    }
}

/// Dominant eigenvalue of a nonnegative matrix by power iteration, to
/// relative tolerance 1e-12.
pub fn perron_radius(m: &Mat) -> Result<f64> {
    assert_eq!(m.rows, m.cols);
    let n = m.rows;
    if m.data.iter().any(|&x| x < 0.0 || !x.is_finite()) {
        return Err(Error::Spec("perron radius needs a finite nonnegative matrix".into()));
    }
    let mut v = vec![1.0 / n as f64; n];
    let mut lambda = 0.0f64;
    let max_iter = 200_000;
    for it in 0..max_iter {
        let w = m.matvec(&v);
        let s: f64 = w.iter().map(|x| x.abs()).sum();
        if s == 0.0 {
            return Err(Error::DegenerateMatrix);
        }
        let next: Vec<f64> = w.iter().map(|x| x / s).collect();
        let num: f64 = next.iter().zip(m.matvec(&next)).map(|(a, b)| a * b).sum();
        let den: f64 = next.iter().map(|x| x * x).sum();
        let new_lambda = num / den;
        let done = (new_lambda - lambda).abs() <= 1e-12 * new_lambda.abs().max(1e-300);
        v = next;
        lambda = new_lambda;
        if done && it > 0 {
            let residual: f64 = m
                .matvec(&v)
                .iter()
                .zip(&v)
                .map(|(a, b)| (a - lambda * b).powi(2))
                .sum::<f64>()
                .sqrt();
            if residual <= 1e-9 * lambda.abs().max(1.0) {
                return Ok(lambda);
            }
        }
    }
    let residual: f64 = m
        .matvec(&v)
        .iter()
        .zip(&v)
        .map(|(a, b)| (a - lambda * b).powi(2))
        .sum::<f64>()
        .sqrt();
    Err(Error::NonConvergence { residual, iterations: max_iter })
}

/// Dense complex matrix, row-major.
#[derive(Debug, Clone)]
pub struct CMat {
    pub n: usize,
    pub data: Vec<Complex64>,
}

impl CMat {
    pub fn zeros(n: usize) -> Self {
        CMat { n, data: vec![Complex64::new(0.0, 0.0); n * n] }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn add_to(&mut self, i: usize, j: usize, v: Complex64) {
        self.data[i * self.n + j] += v;
    }

    /// y = A x, rows in parallel.
    pub fn matvec(&self, x: &[Complex64]) -> Vec<Complex64> {
        let n = self.n;
        par::map_indexed(n, |i| {
            let row = &self.data[i * n..(i + 1) * n];
            row.iter().zip(x).map(|(a, b)| a * b).sum()
        })
    }

    /// y = Aᴴ x (conjugate transpose), rows of Aᴴ in parallel.
    pub fn matvec_adjoint(&self, x: &[Complex64]) -> Vec<Complex64> {
        let n = self.n;
        par::map_indexed(n, |j| {
            (0..n).map(|i| self.get(i, j).conj() * x[i]).sum()
        })
    }

    pub fn max_abs_entry(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

pub fn cnorm2(x: &[Complex64]) -> f64 {
    x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn cdot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(u, v)| u.conj() * v).sum()
}

//! Minimum-norm least squares through a one-sided Jacobi SVD.
//!
//! Design matrices here are tall and thin (a few hundred rows, at most a
//! dozen columns), which is the regime where one-sided Jacobi is both simple
//! and accurate to working precision.

/// Relative cutoff below which singular values are treated as zero.
pub const RCOND: f64 = 1e-10;

const MAX_SWEEPS: usize = 60;

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        let mut m = Self::zeros(rows.len(), cols);
        for (r, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), cols, "ragged matrix");
            m.data[r * cols..(r + 1) * cols].copy_from_slice(row);
        }
        m
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.rows)
            .map(|r| (0..self.cols).map(|c| self.get(r, c) * x[c]).sum())
            .collect()
    }
}

/// Thin SVD `A = U diag(s) V^T`, with `U` stored as unnormalized columns `U_i * s_i`.
struct Jacobi {
    // column-major n x p, column i equals s_i * u_i
    us: Vec<Vec<f64>>,
    // column-major p x p
    v: Vec<Vec<f64>>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn rotate(cols: &mut [Vec<f64>], i: usize, j: usize, c: f64, s: f64) {
    let (lo, hi) = cols.split_at_mut(j);
    let (ci, cj) = (&mut lo[i], &mut hi[0]);
    for (a, b) in ci.iter_mut().zip(cj.iter_mut()) {
        let (x, y) = (*a, *b);
        *a = c * x - s * y;
        *b = s * x + c * y;
    }
}

fn jacobi_svd(a: &Matrix) -> Jacobi {
    let (n, p) = (a.nrows(), a.ncols());
    let mut us: Vec<Vec<f64>> = (0..p)
        .map(|c| (0..n).map(|r| a.get(r, c)).collect())
        .collect();
    let mut v: Vec<Vec<f64>> = (0..p)
        .map(|c| (0..p).map(|r| if r == c { 1.0 } else { 0.0 }).collect())
        .collect();
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for i in 0..p {
            for j in i + 1..p {
                let alpha = dot(&us[i], &us[i]);
                let beta = dot(&us[j], &us[j]);
                let gamma = dot(&us[i], &us[j]);
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut us, i, j, c, s);
                rotate(&mut v, i, j, c, s);
            }
        }
        if !rotated {
            break;
        }
    }
    Jacobi { us, v }
}

/// Singular values of `a`, unordered.
pub fn singular_values(a: &Matrix) -> Vec<f64> {
    jacobi_svd(a).us.iter().map(|c| dot(c, c).sqrt()).collect()
}

/// Solves `min ||A x - b||` with the smallest-norm `x`.
///
/// Singular values under `rcond * sigma_max` are dropped, so rank-deficient
/// systems still return a finite answer.
pub fn lstsq_min_norm(a: &Matrix, b: &[f64], rcond: f64) -> Vec<f64> {
    assert_eq!(a.nrows(), b.len(), "right-hand side length");
    let p = a.ncols();
    let mut x = vec![0.0; p];
    if a.nrows() == 0 || p == 0 {
        return x;
    }
    let svd = jacobi_svd(a);
    let sq: Vec<f64> = svd.us.iter().map(|c| dot(c, c)).collect();
    let sigma_max = sq.iter().copied().fold(0.0, f64::max).sqrt();
    let cutoff = rcond * sigma_max;
    for ((us, &s2), v) in svd.us.iter().zip(&sq).zip(&svd.v) {
        let sigma = s2.sqrt();
        if sigma <= cutoff || sigma == 0.0 {
            continue;
        }
        // u_i^T b / s_i with u_i = us_i / s_i
        let coef = dot(us, b) / s2;
        for (xk, vk) in x.iter_mut().zip(v) {
            *xk += coef * vk;
        }
    }
    x
}

//! Naive reference implementations and generators shared by the test crates.
#![allow(dead_code)]

use edmkit::embedding::{EmbeddingLibrary, EmbeddingSpec, LibraryPoint, Metric, Query};
use edmkit::timeseries::{load_csv, Dataset, TimeSeries};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn bundled() -> Dataset {
    load_csv(
        concat!(env!("CARGO_MANIFEST_DIR"), "/data/leo_debris_1960_2022.csv"),
        "year",
    )
    .unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_walk(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let mut x = 0.0;
    (0..n)
        .map(|_| {
            x += gaussian(rng);
            x
        })
        .collect()
}

pub fn random_library(rng: &mut ChaCha8Rng, n: usize, e: usize, radius: usize) -> EmbeddingLibrary {
    let points = (0..n)
        .map(|i| LibraryPoint {
            time: i as i32,
            vector: (0..e).map(|_| rng.random_range(-1.0..1.0)).collect(),
            target: rng.random_range(-5.0..5.0),
        })
        .collect();
    EmbeddingLibrary {
        points,
        tp: 1,
        spec: EmbeddingSpec::univariate("x", e).with_exclusion_radius(radius),
        target: "x".into(),
    }
}

pub fn random_query(rng: &mut ChaCha8Rng, e: usize, time: i32) -> Query {
    Query::new(time, (0..e).map(|_| rng.random_range(-1.0..1.0)).collect())
}

pub fn naive_distance(metric: Metric, a: &[f64], b: &[f64]) -> f64 {
    match metric {
        Metric::Euclidean => a
            .iter()
            .zip(b)
            .map(|(x, y)| (x - y).powi(2))
            .sum::<f64>()
            .sqrt(),
        Metric::Manhattan => a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum(),
    }
}

/// (distance, time, index) for every admissible point, fully sorted.
pub fn brute_sorted(
    lib: &EmbeddingLibrary,
    q: &Query,
    metric: Metric,
    radius: usize,
) -> Vec<(f64, i32, usize)> {
    let mut v: Vec<_> = lib
        .points
        .iter()
        .enumerate()
        .filter(|(_, p)| radius == 0 || (p.time - q.time).unsigned_abs() as usize > radius)
        .map(|(i, p)| (naive_distance(metric, &p.vector, &q.vector), p.time, i))
        .collect();
    v.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    v
}

/// Solves `M x = v` by Gaussian elimination with partial pivoting.
pub fn gauss_solve(mut m: Vec<Vec<f64>>, mut v: Vec<f64>) -> Vec<f64> {
    let n = v.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&a, &b| m[a][col].abs().partial_cmp(&m[b][col].abs()).unwrap())
            .unwrap();
        m.swap(col, piv);
        v.swap(col, piv);
        for r in col + 1..n {
            let f = m[r][col] / m[col][col];
            let pivot_row = m[col].clone();
            for (a, b) in m[r][col..].iter_mut().zip(&pivot_row[col..]) {
                *a -= f * b;
            }
            v[r] -= f * v[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| m[r][c] * x[c]).sum();
        x[r] = (v[r] - s) / m[r][r];
    }
    x
}

/// Weighted least squares via the normal equations; row weight `w^2` because
/// rows are scaled by `w` before the fit.
pub fn smap_oracle(lib: &EmbeddingLibrary, q: &Query, theta: f64) -> f64 {
    let e = lib.e();
    let rows: Vec<&LibraryPoint> = lib
        .points
        .iter()
        .filter(|p| {
            lib.exclusion_radius() == 0
                || (p.time - q.time).unsigned_abs() as usize > lib.exclusion_radius()
        })
        .collect();
    let d: Vec<f64> = rows
        .iter()
        .map(|p| naive_distance(Metric::Euclidean, &p.vector, &q.vector))
        .collect();
    let mean = d.iter().sum::<f64>() / d.len() as f64;
    let w: Vec<f64> = d
        .iter()
        .map(|x| {
            if theta == 0.0 {
                1.0
            } else {
                (-theta * x / mean).exp()
            }
        })
        .collect();
    let p = e + 1;
    let mut m = vec![vec![0.0; p]; p];
    let mut v = vec![0.0; p];
    for (pt, wi) in rows.iter().zip(&w) {
        let x: Vec<f64> = std::iter::once(1.0)
            .chain(pt.vector.iter().copied())
            .collect();
        for a in 0..p {
            for b in 0..p {
                m[a][b] += wi * wi * x[a] * x[b];
            }
            v[a] += wi * wi * x[a] * pt.target;
        }
    }
    let c = gauss_solve(m, v);
    c[0] + q
        .vector
        .iter()
        .zip(&c[1..])
        .map(|(a, b)| a * b)
        .sum::<f64>()
}

pub fn logistic(n: usize, x0: f64) -> Vec<f64> {
    let mut x = x0;
    (0..n)
        .map(|_| {
            x = 3.8 * x * (1.0 - x);
            x
        })
        .collect()
}

/// x drives y; y does not feed back.
pub fn coupled_logistic(n: usize) -> (Vec<f64>, Vec<f64>) {
    let (mut x, mut y) = (0.4, 0.2);
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    for _ in 0..n {
        let nx = x * (3.8 - 3.8 * x);
        let ny = y * (3.5 - 3.5 * y - 0.32 * x);
        x = nx;
        y = ny;
        xs.push(x);
        ys.push(y);
    }
    (xs, ys)
}

pub fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.random_range(f64::EPSILON..1.0);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

pub fn single(name: &str, values: Vec<f64>) -> Dataset {
    Dataset::new(vec![TimeSeries::new(name, 0, values).unwrap()]).unwrap()
}

/// Cross-map estimate written out directly from the raw arrays.
pub fn brute_cross_map(cause: &[f64], effect: &[f64], e: usize) -> f64 {
    let n = effect.len();
    let times: Vec<usize> = (e - 1..n).collect();
    let vec_at = |t: usize| (0..e).map(|j| effect[t - j]).collect::<Vec<f64>>();
    let mut est = Vec::new();
    let mut obs = Vec::new();
    for &t in &times {
        let q = vec_at(t);
        let mut cand: Vec<(f64, usize)> = times
            .iter()
            .filter(|&&s| s != t)
            .map(|&s| {
                (
                    vec_at(s).iter().zip(&q).map(|(a, b)| (a - b).abs()).sum(),
                    s,
                )
            })
            .collect();
        cand.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        let nn = &cand[..e + 1];
        let w: Vec<f64> = nn.iter().map(|c| (-c.0 / nn[0].0).exp()).collect();
        let ws: f64 = w.iter().sum();
        est.push(w.iter().zip(nn).map(|(w, c)| w * cause[c.1]).sum::<f64>() / ws);
        obs.push(cause[t]);
    }
    let m = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (me, mo) = (m(&est), m(&obs));
    let cov: f64 = est.iter().zip(&obs).map(|(a, b)| (a - me) * (b - mo)).sum();
    let va: f64 = est.iter().map(|a| (a - me).powi(2)).sum();
    let vb: f64 = obs.iter().map(|b| (b - mo).powi(2)).sum();
    cov / (va * vb).sqrt()
}

//! Convergent cross mapping.
//!
//! If `A` drives `B`, the delay reconstruction of `B` carries a signature of
//! `A`: nearest neighbors on `B`'s shadow manifold sit at times where `A` took
//! similar values. Cross-map skill (Pearson rho between estimated and actual
//! `A`) that rises with library size and levels off at a positive value is the
//! evidence for causation.

use std::io::Write;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::embedding::{delay_embed, EmbeddingLibrary, EmbeddingSpec, Metric};
use crate::error::{EdmError, Result};
use crate::timeseries::{pearson, Skill, TimeSeries};

/// Library subsampling scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Sampling {
    #[default]
    Random,
    Contiguous,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CcmConfig {
    pub e: usize,
    pub tau: usize,
    pub library_sizes: Vec<usize>,
    pub samples_per_size: usize,
    pub seed: u64,
    /// Random sampling with replacement (ignored for contiguous blocks).
    pub replacement: bool,
    pub sampling: Sampling,
    /// Temporal exclusion inside the sampled library; 0 disables it.
    pub exclusion_radius: usize,
    /// Let a prediction point use itself as a neighbor.
    pub self_match: bool,
    /// Required rise from the first to the last mean rho.
    pub convergence_margin: f64,
    /// Largest change between the last two mean rho values for a plateau.
    pub plateau_tolerance: f64,
}

impl CcmConfig {
    pub fn new(e: usize, library_sizes: Vec<usize>, samples_per_size: usize, seed: u64) -> Self {
        Self {
            e,
            tau: 1,
            library_sizes,
            samples_per_size,
            seed,
            replacement: false,
            sampling: Sampling::Random,
            exclusion_radius: 0,
            self_match: false,
            convergence_margin: 0.05,
            plateau_tolerance: 0.02,
        }
    }

    /// `count` sizes spread evenly from `E + 2` up to `available` points.
    pub fn even_sizes(e: usize, available: usize, count: usize) -> Vec<usize> {
        let lo = e + 2;
        if count <= 1 || available <= lo {
            return vec![available];
        }
        let mut sizes: Vec<usize> = (0..count)
            .map(|i| {
                let f = i as f64 / (count - 1) as f64;
                (lo as f64 + f * (available - lo) as f64).round() as usize
            })
            .collect();
        sizes.dedup();
        sizes
    }

    fn cross_mapper(&self) -> CrossMap {
        CrossMap {
            e: self.e,
            tau: self.tau,
            exclusion_radius: self.exclusion_radius,
            self_match: self.self_match,
        }
    }

    fn validate(&self, available: usize) -> Result<()> {
        if self.library_sizes.is_empty() || self.samples_per_size == 0 {
            return Err(EdmError::InvalidConfig(
                "need at least one library size and one sample".into(),
            ));
        }
        if self.library_sizes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(EdmError::InvalidConfig(
                "library sizes must be strictly increasing".into(),
            ));
        }
        let (min, max) = (self.library_sizes[0], *self.library_sizes.last().unwrap());
        if min < self.e + 2 {
            return Err(EdmError::InvalidConfig(format!(
                "smallest library size {min} is below E + 2 = {}",
                self.e + 2
            )));
        }
        if max > available {
            return Err(EdmError::InvalidConfig(format!(
                "largest library size {max} exceeds the {available} embedded points"
            )));
        }
        Ok(())
    }
}

/// Cross-map estimator settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossMap {
    pub e: usize,
    pub tau: usize,
    pub exclusion_radius: usize,
    pub self_match: bool,
}

impl CrossMap {
    pub fn new(e: usize, tau: usize) -> Self {
        Self {
            e,
            tau,
            exclusion_radius: 0,
            self_match: false,
        }
    }

    /// Shadow manifold of `effect`; point times index both series.
    pub fn manifold(&self, effect: &TimeSeries) -> Result<EmbeddingLibrary> {
        let spec = EmbeddingSpec::univariate(effect.name.clone(), self.e)
            .with_tau(self.tau)
            .with_exclusion_radius(self.exclusion_radius);
        delay_embed(effect, &spec, 0)
    }

    /// Estimates `cause` at every manifold point from neighbors in `library`
    /// (indices into the manifold) and returns the Pearson skill.
    pub fn skill(
        &self,
        cause: &TimeSeries,
        manifold: &EmbeddingLibrary,
        library: &[usize],
    ) -> Result<Skill> {
        let k = self.e + 1;
        if library.len() < self.e + 2 {
            return Err(EdmError::InsufficientNeighbors {
                requested: self.e + 2,
                available: library.len(),
            });
        }
        let cause_at = |t: i32| {
            cause.at(t).ok_or_else(|| {
                EdmError::InvalidData(format!("`{}` has no value at {t}", cause.name))
            })
        };
        let mut estimates = Vec::with_capacity(manifold.len());
        let mut actual = Vec::with_capacity(manifold.len());
        let mut candidates: Vec<(f64, i32)> = Vec::with_capacity(library.len());
        for p in &manifold.points {
            candidates.clear();
            for &i in library {
                let q = &manifold.points[i];
                let dt = (q.time - p.time).unsigned_abs() as usize;
                if (!self.self_match && dt == 0)
                    || (self.exclusion_radius > 0 && dt <= self.exclusion_radius)
                {
                    continue;
                }
                candidates.push((Metric::Manhattan.distance(&p.vector, &q.vector), q.time));
            }
            if candidates.len() < k {
                return Err(EdmError::InsufficientNeighbors {
                    requested: k,
                    available: candidates.len(),
                });
            }
            let order = |a: &(f64, i32), b: &(f64, i32)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
            candidates.select_nth_unstable_by(k - 1, order);
            candidates.truncate(k);
            candidates.sort_by(order);
            let weights = cross_map_weights(candidates.iter().map(|c| c.0));
            let total: f64 = weights.iter().sum();
            let mut est = 0.0;
            for (w, (_, t)) in weights.iter().zip(&candidates) {
                est += w / total * cause_at(*t)?;
            }
            estimates.push(est);
            actual.push(cause_at(p.time)?);
        }
        pearson(&actual, &estimates)
    }
}

/// `exp(-d / d_1)`; with an exact match the zero-distance neighbors share all the weight.
fn cross_map_weights(distances: impl Iterator<Item = f64>) -> Vec<f64> {
    let d: Vec<f64> = distances.collect();
    let d1 = d[0];
    if d1 > 0.0 {
        d.iter().map(|x| (-x / d1).exp()).collect()
    } else {
        d.iter()
            .map(|&x| if x == 0.0 { 1.0 } else { 0.0 })
            .collect()
    }
}

/// Cross-map skill for estimating `cause` from the manifold of `effect`.
///
/// `library_indices` index the embedded points of `effect` (point `i` sits at
/// `effect.start_year + (E-1) tau + i`). The prediction point itself is never
/// its own neighbor.
pub fn cross_map(
    cause: &TimeSeries,
    effect: &TimeSeries,
    e: usize,
    tau: usize,
    library_indices: &[usize],
) -> Result<Skill> {
    let cm = CrossMap::new(e, tau);
    let manifold = cm.manifold(effect)?;
    check_aligned(cause, effect)?;
    if let Some(&bad) = library_indices.iter().find(|&&i| i >= manifold.len()) {
        return Err(EdmError::InvalidConfig(format!(
            "library index {bad} out of range ({} embedded points)",
            manifold.len()
        )));
    }
    cm.skill(cause, &manifold, library_indices)
}

fn check_aligned(a: &TimeSeries, b: &TimeSeries) -> Result<()> {
    if a.start_year != b.start_year || a.len() != b.len() {
        return Err(EdmError::InvalidData(format!(
            "`{}` and `{}` are not aligned",
            a.name, b.name
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    ConvergentPositive,
    NonConvergent,
    Negative,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CcmPoint {
    pub library_size: usize,
    pub mean_rho: Skill,
    /// Standard deviation of rho across samples.
    pub spread: f64,
    pub rhos: Vec<Skill>,
}

/// Skill curve for recovering `cause` from the manifold of `effect`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CcmDirection {
    pub cause: String,
    pub effect: String,
    pub curve: Vec<CcmPoint>,
    pub verdict: Verdict,
}

impl CcmDirection {
    pub fn final_rho(&self) -> Skill {
        self.curve.last().map_or(Skill::Undefined, |p| p.mean_rho)
    }

    /// `cause:effect` label, e.g. `debris:total`.
    pub fn label(&self) -> String {
        format!("{}:{}", self.cause, self.effect)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CcmResult {
    /// `A` estimated from the manifold of `B`.
    pub a_from_b: CcmDirection,
    /// `B` estimated from the manifold of `A`.
    pub b_from_a: CcmDirection,
    /// Fewer than two library sizes; verdicts are not meaningful.
    pub insufficient_grid: bool,
}

impl CcmResult {
    /// `direction,library_size,sample,rho` rows for both directions.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let fail = |e: csv::Error| EdmError::Csv {
            path: "<output>".into(),
            message: e.to_string(),
        };
        w.write_record(["direction", "library_size", "sample", "rho"])
            .map_err(fail)?;
        for dir in [&self.a_from_b, &self.b_from_a] {
            let label = dir.label();
            for p in &dir.curve {
                for (s, rho) in p.rhos.iter().enumerate() {
                    let rho = rho.value().map(|v| v.to_string()).unwrap_or_default();
                    w.write_record([
                        label.as_str(),
                        &p.library_size.to_string(),
                        &s.to_string(),
                        &rho,
                    ])
                    .map_err(fail)?;
                }
            }
        }
        w.flush().map_err(|e| EdmError::Csv {
            path: "<output>".into(),
            message: e.to_string(),
        })
    }
}

fn cell_seed(seed: u64, size: usize, sample: usize) -> u64 {
    // splitmix64 finalizer over the packed cell coordinates
    let mut z = seed
        ^ (size as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (sample as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn draw_library(cfg: &CcmConfig, available: usize, size: usize, sample: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(cell_seed(cfg.seed, size, sample));
    match cfg.sampling {
        Sampling::Contiguous => {
            let start = rng.random_range(0..=available - size);
            (start..start + size).collect()
        }
        Sampling::Random if cfg.replacement => {
            (0..size).map(|_| rng.random_range(0..available)).collect()
        }
        Sampling::Random => {
            let mut v = index::sample(&mut rng, available, size).into_vec();
            v.sort_unstable();
            v
        }
    }
}

fn summarize(size: usize, rhos: Vec<Skill>) -> CcmPoint {
    let vals: Vec<f64> = rhos.iter().filter_map(|s| s.value()).collect();
    let (mean_rho, spread) = if vals.is_empty() {
        (Skill::Undefined, 0.0)
    } else {
        let n = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / n;
        let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        (Skill::Value(mean), var.sqrt())
    };
    CcmPoint {
        library_size: size,
        mean_rho,
        spread,
        rhos,
    }
}

fn judge(curve: &[CcmPoint], cfg: &CcmConfig) -> Verdict {
    if curve.len() < 2 {
        return Verdict::NonConvergent;
    }
    let at = |i: usize| curve[i].mean_rho.value();
    let n = curve.len();
    let (Some(first), Some(prev), Some(last)) = (at(0), at(n - 2), at(n - 1)) else {
        return Verdict::NonConvergent;
    };
    if last <= 0.0 {
        Verdict::Negative
    } else if last - first > cfg.convergence_margin && (last - prev).abs() < cfg.plateau_tolerance {
        Verdict::ConvergentPositive
    } else {
        Verdict::NonConvergent
    }
}

/// Sweeps library size in both directions with identical subsamples.
pub fn convergence_sweep(a: &TimeSeries, b: &TimeSeries, cfg: &CcmConfig) -> Result<CcmResult> {
    check_aligned(a, b)?;
    let cm = cfg.cross_mapper();
    let manifold_a = cm.manifold(a)?;
    let manifold_b = cm.manifold(b)?;
    let available = manifold_a.len();
    cfg.validate(available)?;

    let cells: Vec<(usize, usize)> = cfg
        .library_sizes
        .iter()
        .flat_map(|&size| (0..cfg.samples_per_size).map(move |s| (size, s)))
        .collect();
    let skills = cells
        .par_iter()
        .map(|&(size, sample)| {
            let library = draw_library(cfg, available, size, sample);
            let a_from_b = cm.skill(a, &manifold_b, &library)?;
            let b_from_a = cm.skill(b, &manifold_a, &library)?;
            Ok((a_from_b, b_from_a))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut curve_ab = Vec::new();
    let mut curve_ba = Vec::new();
    for (i, &size) in cfg.library_sizes.iter().enumerate() {
        let chunk = &skills[i * cfg.samples_per_size..(i + 1) * cfg.samples_per_size];
        curve_ab.push(summarize(size, chunk.iter().map(|s| s.0).collect()));
        curve_ba.push(summarize(size, chunk.iter().map(|s| s.1).collect()));
    }
    let direction = |cause: &TimeSeries, effect: &TimeSeries, curve: Vec<CcmPoint>| CcmDirection {
        cause: cause.name.clone(),
        effect: effect.name.clone(),
        verdict: judge(&curve, cfg),
        curve,
    };
    Ok(CcmResult {
        a_from_b: direction(a, b, curve_ab),
        b_from_a: direction(b, a, curve_ba),
        insufficient_grid: cfg.library_sizes.len() < 2,
    })
}

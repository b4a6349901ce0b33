//! Simplex projection: forecast as an exponentially weighted average of the
//! forward targets of the nearest reconstructed states.

use rayon::prelude::*;
use serde::Serialize;

use crate::embedding::{knn, EmbeddingLibrary, EmbeddingSpec, Metric, Query};
use crate::error::{EdmError, Result};
use crate::forecast::{self, Extrapolation, ForecastResult, LibraryMode, Prediction, Predictor};
use crate::timeseries::{Dataset, Skill};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimplexConfig {
    pub spec: EmbeddingSpec,
    pub tp: usize,
    /// Neighbor count; `None` means `E + 1`.
    pub k: Option<usize>,
}

impl SimplexConfig {
    pub fn new(spec: EmbeddingSpec) -> Self {
        Self {
            spec,
            tp: 1,
            k: None,
        }
    }

    pub fn with_k(mut self, k: usize) -> Self {
        self.k = Some(k);
        self
    }

    pub fn k(&self) -> usize {
        self.k.unwrap_or(self.spec.e() + 1)
    }
}

/// Raw (unnormalized) weights for neighbor distances sorted ascending.
///
/// `u_j = exp(-d_j / d_1)`. When the nearest distance is zero, zero-distance
/// neighbors get weight 1 and the rest are scaled by the smallest positive
/// distance instead; if every distance is zero the weights are uniform.
pub fn simplex_weights(distances: &[f64]) -> Vec<f64> {
    let Some(&d1) = distances.first() else {
        return Vec::new();
    };
    if d1 > 0.0 {
        return distances.iter().map(|d| (-d / d1).exp()).collect();
    }
    let scale = distances.iter().copied().find(|d| *d > 0.0);
    distances
        .iter()
        .map(|&d| match scale {
            Some(s) if d > 0.0 => (-d / s).exp(),
            _ => 1.0,
        })
        .collect()
}

/// Returns `(prediction, weighted variance of the neighbor targets)`.
pub fn simplex_predict(
    library: &EmbeddingLibrary,
    query: &Query,
    cfg: &SimplexConfig,
) -> Result<(f64, f64)> {
    let neighbors = knn(library, query, cfg.k(), Metric::Euclidean)?;
    let distances: Vec<f64> = neighbors.entries.iter().map(|n| n.distance).collect();
    let raw = simplex_weights(&distances);
    let total: f64 = raw.iter().sum();
    let targets: Vec<f64> = neighbors
        .entries
        .iter()
        .map(|n| library.points[n.index].target)
        .collect();
    let prediction: f64 = raw.iter().zip(&targets).map(|(u, y)| u / total * y).sum();
    let variance: f64 = raw
        .iter()
        .zip(&targets)
        .map(|(u, y)| u / total * (y - prediction) * (y - prediction))
        .sum();
    Ok((prediction, variance))
}

impl Predictor for SimplexConfig {
    fn spec(&self) -> &EmbeddingSpec {
        &self.spec
    }

    fn tp(&self) -> usize {
        self.tp
    }

    fn predict(&self, library: &EmbeddingLibrary, query: &Query) -> Result<Prediction> {
        let (value, variance) = simplex_predict(library, query, self)?;
        Ok(Prediction {
            value,
            variance,
            coefficients: None,
        })
    }
}

/// Expanding-window one-step skill over `eval_range`, which must start after `train_end`.
pub fn skill_eval(
    data: &Dataset,
    target: &str,
    cfg: &SimplexConfig,
    train_end: i32,
    eval_range: (i32, i32),
) -> Result<ForecastResult> {
    let (from, to) = eval_range;
    if from <= train_end {
        return Err(EdmError::InvalidConfig(format!(
            "evaluation starts at {from}, not after training end {train_end}"
        )));
    }
    forecast::evaluate(data, target, cfg, from, to)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SkillRow {
    pub e: usize,
    pub rho: Skill,
    pub rmse: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmbedSearch {
    pub rows: Vec<SkillRow>,
    /// Highest-rho dimension; ties go to the smaller E.
    pub best_e: usize,
}

impl EmbedSearch {
    pub fn best(&self) -> &SkillRow {
        self.rows
            .iter()
            .find(|r| r.e == self.best_e)
            .expect("best row exists")
    }
}

/// Runs [`skill_eval`] for every `E` in `e_range` with `k = E + 1`.
///
/// `template` supplies tau, exclusion override and normalization; its columns
/// are replaced by a univariate embedding of `target`.
pub fn embed_dimension_search(
    data: &Dataset,
    target: &str,
    e_range: std::ops::RangeInclusive<usize>,
    template: &EmbeddingSpec,
    train_end: i32,
    eval_range: (i32, i32),
) -> Result<EmbedSearch> {
    if e_range.is_empty() || *e_range.start() == 0 {
        return Err(EdmError::InvalidConfig(format!(
            "embedding range {}..={} is empty or contains zero",
            e_range.start(),
            e_range.end()
        )));
    }
    let rows = e_range
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|e| {
            let mut spec = template.clone();
            spec.columns = vec![(target.to_string(), e)];
            let cfg = SimplexConfig::new(spec);
            let r = skill_eval(data, target, &cfg, train_end, eval_range)?;
            Ok(SkillRow {
                e,
                rho: r.rho,
                rmse: r.rmse,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let best_e = argmax_first(rows.iter().map(|r| (r.e, r.rho)));
    Ok(EmbedSearch { rows, best_e })
}

pub(crate) fn argmax_first<K: Copy>(items: impl Iterator<Item = (K, Skill)>) -> K {
    let mut best: Option<(K, f64)> = None;
    for (k, s) in items {
        let v = s.rank_key();
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((k, v));
        }
    }
    best.expect("non-empty grid").0
}

/// Extrapolates `target` from the end of the data to `horizon_end`, appending
/// each prediction to the library before the next step.
pub fn iterative_forecast(
    data: &Dataset,
    target: &str,
    cfg: &SimplexConfig,
    horizon_end: i32,
) -> Result<ForecastResult> {
    iterative_forecast_with(data, target, cfg, horizon_end, LibraryMode::SelfConditioned)
        .map(|x| x.forecast)
}

pub fn iterative_forecast_with(
    data: &Dataset,
    target: &str,
    cfg: &SimplexConfig,
    horizon_end: i32,
    mode: LibraryMode,
) -> Result<Extrapolation> {
    forecast::extrapolate(data, target, cfg, horizon_end, mode)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::delay_embed;
    use crate::timeseries::TimeSeries;

    #[test]
    fn nearest_weight_is_inverse_e() {
        let w = simplex_weights(&[0.7, 1.1, 3.0]);
        assert!((w[0] - (-1f64).exp()).abs() < 1e-15);
        assert!((w[0] - 0.367_88).abs() < 1e-5);
    }

    #[test]
    fn zero_distance_weights() {
        assert_eq!(simplex_weights(&[0.0, 0.0, 0.0]), vec![1.0, 1.0, 1.0]);
        let w = simplex_weights(&[0.0, 2.0, 4.0]);
        assert_eq!(w[0], 1.0);
        assert!((w[1] - (-1f64).exp()).abs() < 1e-15);
        assert!((w[2] - (-2f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn equidistant_neighbors_average() {
        let lib = EmbeddingLibrary {
            points: [(-1.0, 2.0), (1.0, 4.0), (3.0, 6.0)]
                .iter()
                .enumerate()
                .map(|(i, (x, y))| crate::embedding::LibraryPoint {
                    time: i as i32 * 10,
                    vector: vec![*x],
                    target: *y,
                })
                .collect(),
            tp: 1,
            spec: EmbeddingSpec::univariate("x", 1).with_exclusion_radius(0),
            target: "x".into(),
        };
        // points -1 and 1 are both at distance 1 from the origin
        let cfg = SimplexConfig::new(lib.spec.clone()).with_k(2);
        let (p, _) = simplex_predict(&lib, &Query::new(99, vec![0.0]), &cfg).unwrap();
        assert!((p - 3.0).abs() < 1e-12);
        let lib3 = EmbeddingLibrary {
            points: vec![
                crate::embedding::LibraryPoint {
                    time: 0,
                    vector: vec![1.0, 0.0],
                    target: 2.0,
                },
                crate::embedding::LibraryPoint {
                    time: 1,
                    vector: vec![0.0, 1.0],
                    target: 4.0,
                },
                crate::embedding::LibraryPoint {
                    time: 2,
                    vector: vec![-1.0, 0.0],
                    target: 6.0,
                },
            ],
            ..lib
        };
        let cfg = SimplexConfig::new(EmbeddingSpec::univariate("x", 2).with_exclusion_radius(0));
        let (p, _) = simplex_predict(&lib3, &Query::new(99, vec![0.0, 0.0]), &cfg).unwrap();
        assert!((p - 4.0).abs() < 1e-12);
    }

    #[test]
    fn toy_series_exact_match() {
        let s = TimeSeries::new("x", 0, vec![10., 20., 30., 40., 50.]).unwrap();
        let spec = EmbeddingSpec::univariate("x", 2).with_exclusion_radius(0);
        let lib = delay_embed(&s, &spec, 1).unwrap();
        let cfg = SimplexConfig::new(spec);
        let (p, v) = simplex_predict(&lib, &Query::new(2, vec![30., 20.]), &cfg).unwrap();
        // weights 1, e^-1, e^-1 on targets 40, 30, 50
        let e1 = (-1f64).exp();
        let oracle = (40.0 + e1 * 30.0 + e1 * 50.0) / (1.0 + 2.0 * e1);
        assert!((p - oracle).abs() < 1e-12);
        assert!((p - 40.0).abs() < 1e-12);
        assert!((v - 2.0 * e1 * 100.0 / (1.0 + 2.0 * e1)).abs() < 1e-9);
    }

    #[test]
    fn constant_series_forecast_is_flat() {
        let d = Dataset::new(vec![TimeSeries::new("x", 1960, vec![5.0; 30]).unwrap()]).unwrap();
        let cfg = SimplexConfig::new(EmbeddingSpec::univariate("x", 3));
        let f = iterative_forecast(&d, "x", &cfg, 1999).unwrap();
        assert!(f.predicted.iter().all(|p| *p == Some(5.0)));
        assert!(f.band_halfwidth.iter().all(|h| *h == 0.0));
    }

    #[test]
    fn singleton_search() {
        let d = Dataset::new(vec![TimeSeries::new(
            "x",
            0,
            (0..60).map(|i| (i as f64 * 0.7).sin()).collect(),
        )
        .unwrap()])
        .unwrap();
        let s = embed_dimension_search(
            &d,
            "x",
            3..=3,
            &EmbeddingSpec::univariate("x", 1),
            30,
            (31, 59),
        )
        .unwrap();
        assert_eq!(s.rows.len(), 1);
        assert_eq!(s.best_e, 3);
        assert!(skill_eval(
            &d,
            "x",
            &SimplexConfig::new(EmbeddingSpec::univariate("x", 2)),
            40,
            (35, 50)
        )
        .is_err());
    }

    #[test]
    fn argmax_prefers_first_on_ties() {
        let k = argmax_first(
            [
                (1, Skill::Value(0.5)),
                (2, Skill::Value(0.9)),
                (3, Skill::Value(0.9)),
                (4, Skill::Undefined),
            ]
            .into_iter(),
        );
        assert_eq!(k, 2);
    }
}

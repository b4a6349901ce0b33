//! S-map: locally weighted linear regression over the whole library.
//!
//! Every admissible library point `j` gets weight
//! `w_j = exp(-theta * d_j / mean(d))` where `d` is the Euclidean distance to
//! the query. Rows of the design matrix `[1, x_j]` and the targets are scaled
//! by `w_j` and the system is solved for the minimum-norm least-squares fit.
//! At `theta = 0` this is a global linear autoregression; a best skill at
//! `theta > 0` indicates state-dependent (nonlinear) dynamics. The fitted
//! slopes estimate local partial derivatives of the target with respect to
//! each embedding coordinate.

use rayon::prelude::*;
use serde::Serialize;

use crate::embedding::{EmbeddingLibrary, EmbeddingSpec, Metric, Query};
use crate::error::{EdmError, Result};
use crate::forecast::{self, Extrapolation, ForecastResult, LibraryMode, Prediction, Predictor};
use crate::linalg::{lstsq_min_norm, Matrix, RCOND};
use crate::simplex::argmax_first;
use crate::timeseries::{Dataset, Skill, TimeSeries};

/// Default localization grid.
pub const DEFAULT_THETAS: [f64; 15] = [
    0.0, 0.1, 0.3, 0.5, 0.75, 1.0, 1.5, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0,
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SMapConfig {
    pub spec: EmbeddingSpec,
    pub theta: f64,
    pub tp: usize,
    /// Ridge penalty on the slopes (not the intercept).
    pub ridge: f64,
}

impl SMapConfig {
    pub fn new(spec: EmbeddingSpec, theta: f64) -> Self {
        Self {
            spec,
            theta,
            tp: 1,
            ridge: 0.0,
        }
    }

    pub fn with_ridge(mut self, ridge: f64) -> Self {
        self.ridge = ridge;
        self
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if !(self.theta >= 0.0 && self.theta.is_finite()) {
            return Err(EdmError::InvalidConfig(format!(
                "theta must be a finite nonnegative number, got {}",
                self.theta
            )));
        }
        if !(self.ridge >= 0.0 && self.ridge.is_finite()) {
            return Err(EdmError::InvalidConfig(format!(
                "ridge must be nonnegative, got {}",
                self.ridge
            )));
        }
        Ok(())
    }
}

/// One local fit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SMapStep {
    /// Year being predicted.
    pub time: i32,
    pub prediction: f64,
    /// Intercept then one slope per coordinate.
    pub coefficients: Vec<f64>,
    pub variance: f64,
}

/// Kernel weights for distances to every admissible library point.
pub fn smap_weights(distances: &[f64], theta: f64) -> Vec<f64> {
    if distances.is_empty() {
        return Vec::new();
    }
    let mean = distances.iter().sum::<f64>() / distances.len() as f64;
    if theta == 0.0 || mean <= 0.0 {
        return vec![1.0; distances.len()];
    }
    distances
        .iter()
        .map(|d| (-theta * d / mean).exp())
        .collect()
}

pub fn smap_predict(
    library: &EmbeddingLibrary,
    query: &Query,
    cfg: &SMapConfig,
) -> Result<SMapStep> {
    cfg.validate()?;
    let e = library.e();
    let rows: Vec<usize> = library.admissible_indices(query.time).collect();
    if rows.len() < e + 2 {
        return Err(EdmError::InsufficientNeighbors {
            requested: e + 2,
            available: rows.len(),
        });
    }
    let distances: Vec<f64> = rows
        .iter()
        .map(|&i| Metric::Euclidean.distance(&library.points[i].vector, &query.vector))
        .collect();
    let weights = smap_weights(&distances, cfg.theta);

    let slopes = e;
    let extra = if cfg.ridge > 0.0 { slopes } else { 0 };
    let mut a = Matrix::zeros(rows.len() + extra, e + 1);
    let mut b = vec![0.0; rows.len() + extra];
    for (r, (&i, &w)) in rows.iter().zip(&weights).enumerate() {
        let p = &library.points[i];
        a.set(r, 0, w);
        for (c, x) in p.vector.iter().enumerate() {
            a.set(r, c + 1, w * x);
        }
        b[r] = w * p.target;
    }
    if extra > 0 {
        let s = cfg.ridge.sqrt();
        for c in 0..slopes {
            a.set(rows.len() + c, c + 1, s);
        }
    }
    let coef = lstsq_min_norm(&a, &b, RCOND);
    let fitted = |v: &[f64]| {
        coef[0]
            + v.iter()
                .zip(coef.iter().skip(1))
                .map(|(x, c)| x * c)
                .sum::<f64>()
    };

    let prediction = fitted(&query.vector);
    let wsum: f64 = weights.iter().sum();
    let variance = rows
        .iter()
        .zip(&weights)
        .map(|(&i, w)| {
            let p = &library.points[i];
            let r = p.target - fitted(&p.vector);
            w * r * r
        })
        .sum::<f64>()
        / wsum;
    Ok(SMapStep {
        time: query.time + library.tp as i32,
        prediction,
        coefficients: coef,
        variance,
    })
}

impl Predictor for SMapConfig {
    fn spec(&self) -> &EmbeddingSpec {
        &self.spec
    }

    fn tp(&self) -> usize {
        self.tp
    }

    fn predict(&self, library: &EmbeddingLibrary, query: &Query) -> Result<Prediction> {
        let step = smap_predict(library, query, self)?;
        Ok(Prediction {
            value: step.prediction,
            variance: step.variance,
            coefficients: Some(step.coefficients),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Linearity {
    Linear,
    Nonlinear,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThetaRow {
    pub theta: f64,
    pub rho: Skill,
    pub rmse: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThetaSearch {
    pub rows: Vec<ThetaRow>,
    /// Highest-rho theta; ties go to the smaller theta.
    pub best_theta: f64,
    pub verdict: Linearity,
}

impl ThetaSearch {
    pub fn best(&self) -> &ThetaRow {
        self.rows
            .iter()
            .find(|r| r.theta == self.best_theta)
            .expect("best row exists")
    }
}

/// Skill over a grid of localization values using the expanding-window protocol.
pub fn theta_search(
    data: &Dataset,
    target: &str,
    spec: &EmbeddingSpec,
    thetas: &[f64],
    train_end: i32,
    eval_range: (i32, i32),
) -> Result<ThetaSearch> {
    if thetas.is_empty() {
        return Err(EdmError::InvalidConfig("theta grid is empty".into()));
    }
    let (from, to) = eval_range;
    if from <= train_end {
        return Err(EdmError::InvalidConfig(format!(
            "evaluation starts at {from}, not after training end {train_end}"
        )));
    }
    let mut grid = thetas.to_vec();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let rows = grid
        .into_par_iter()
        .map(|theta| {
            let cfg = SMapConfig::new(spec.clone(), theta);
            let r = forecast::evaluate(data, target, &cfg, from, to)?;
            Ok(ThetaRow {
                theta,
                rho: r.rho,
                rmse: r.rmse,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let best_theta = argmax_first(rows.iter().map(|r| (r.theta, r.rho)));
    let verdict = if best_theta > 0.0 {
        Linearity::Nonlinear
    } else {
        Linearity::Linear
    };
    Ok(ThetaSearch {
        rows,
        best_theta,
        verdict,
    })
}

/// Iterated S-map extrapolation; multivariate specs advance every input series.
pub fn smap_iterative_forecast(
    data: &Dataset,
    target: &str,
    cfg: &SMapConfig,
    horizon_end: i32,
) -> Result<Extrapolation> {
    cfg.validate()?;
    forecast::extrapolate(data, target, cfg, horizon_end, LibraryMode::SelfConditioned)
}

/// The fitted slope for one coordinate (e.g. `total(t-1)`) as a yearly series.
pub fn interaction_series(forecast: &ForecastResult, coordinate: &str) -> Result<TimeSeries> {
    let track = forecast
        .coefficients
        .as_ref()
        .ok_or_else(|| EdmError::InvalidData("forecast carries no coefficients".into()))?;
    let col = track
        .names
        .iter()
        .position(|n| n == coordinate)
        .ok_or_else(|| EdmError::UnknownCoordinate(coordinate.to_string()))?;
    let values = track
        .rows
        .iter()
        .zip(&forecast.times)
        .map(|(row, t)| {
            row.as_ref()
                .map(|r| r[col])
                .ok_or_else(|| EdmError::InvalidData(format!("no coefficients at year {t}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let start = *forecast
        .times
        .first()
        .ok_or_else(|| EdmError::InvalidData("empty forecast".into()))?;
    TimeSeries::new(format!("d{}/d{coordinate}", forecast.target), start, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::{delay_embed, multivariate_embed, state_at};

    #[test]
    fn theta_zero_weights_are_uniform() {
        assert_eq!(smap_weights(&[1.0, 5.0, 9.0], 0.0), vec![1.0; 3]);
        let w = smap_weights(&[1.0, 3.0], 2.0);
        assert!((w[0] - (-1f64).exp()).abs() < 1e-15);
        assert!((w[1] - (-3f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn exact_linear_rule_recovered() {
        // x_{t+1} = 0.5 x_t + 2 from several starting points so x_t varies
        let mut values = Vec::new();
        for start in [1.0, 10.0, -6.0, 3.0] {
            let mut x = start;
            for _ in 0..5 {
                values.push(x);
                x = 0.5 * x + 2.0;
            }
        }
        // one library point per within-segment transition
        let mut points = Vec::new();
        for (seg, chunk) in values.chunks(5).enumerate() {
            for i in 0..4 {
                points.push(crate::embedding::LibraryPoint {
                    time: (seg * 100 + i) as i32,
                    vector: vec![chunk[i]],
                    target: chunk[i + 1],
                });
            }
        }
        let lib = EmbeddingLibrary {
            points,
            tp: 1,
            spec: EmbeddingSpec::univariate("x", 1).with_exclusion_radius(0),
            target: "x".into(),
        };
        for theta in [0.0, 1.0, 7.0] {
            let cfg = SMapConfig::new(lib.spec.clone(), theta);
            let s = smap_predict(&lib, &Query::new(1000, vec![4.0]), &cfg).unwrap();
            assert!(
                (s.coefficients[0] - 2.0).abs() < 1e-9,
                "{:?}",
                s.coefficients
            );
            assert!((s.coefficients[1] - 0.5).abs() < 1e-9);
            assert!((s.prediction - 4.0).abs() < 1e-9);
            assert!(s.variance < 1e-18);
        }
    }

    #[test]
    fn insufficient_points() {
        let s = TimeSeries::new("x", 0, vec![1., 2., 3., 4.]).unwrap();
        let lib = delay_embed(&s, &EmbeddingSpec::univariate("x", 2), 1).unwrap();
        let cfg = SMapConfig::new(lib.spec.clone(), 1.0);
        assert!(matches!(
            smap_predict(&lib, &Query::new(10, vec![0., 0.]), &cfg),
            Err(EdmError::InsufficientNeighbors { .. })
        ));
        assert!(smap_predict(
            &lib,
            &Query::new(10, vec![0., 0.]),
            &SMapConfig::new(lib.spec.clone(), -1.0)
        )
        .is_err());
    }

    #[test]
    fn duplicate_rows_do_not_crash() {
        let s = TimeSeries::new("x", 0, vec![3.0; 20]).unwrap();
        let d = Dataset::new(vec![s]).unwrap();
        let spec = EmbeddingSpec::univariate("x", 2);
        let lib = multivariate_embed(&d, &spec, "x", 1).unwrap();
        let q = state_at(&d, &spec, 19).unwrap();
        let step = smap_predict(&lib, &q, &SMapConfig::new(spec, 4.0)).unwrap();
        assert!((step.prediction - 3.0).abs() < 1e-9);
        assert!(step.variance < 1e-18);
    }

    #[test]
    fn constant_series_forecast() {
        let d = Dataset::new(vec![TimeSeries::new("x", 1960, vec![7.0; 40]).unwrap()]).unwrap();
        let cfg = SMapConfig::new(EmbeddingSpec::univariate("x", 3), 2.0);
        let f = smap_iterative_forecast(&d, "x", &cfg, 2010)
            .unwrap()
            .forecast;
        assert!(
            f.predicted.iter().all(|p| (p.unwrap() - 7.0).abs() < 1e-9),
            "{:?}",
            f.predicted
        );
        assert!(f.band_halfwidth.iter().all(|h| *h < 1e-6));
    }

    #[test]
    fn singleton_grid_is_linear() {
        let d = Dataset::new(vec![TimeSeries::new(
            "x",
            0,
            (0..50).map(|i| (i as f64 * 0.9).sin()).collect(),
        )
        .unwrap()])
        .unwrap();
        let r = theta_search(
            &d,
            "x",
            &EmbeddingSpec::univariate("x", 2),
            &[0.0],
            30,
            (31, 49),
        )
        .unwrap();
        assert_eq!(r.verdict, Linearity::Linear);
        assert_eq!(r.rows.len(), 1);
        assert!(theta_search(
            &d,
            "x",
            &EmbeddingSpec::univariate("x", 2),
            &[],
            30,
            (31, 49)
        )
        .is_err());
    }

    #[test]
    fn interaction_series_lookup() {
        let d = Dataset::new(vec![TimeSeries::new(
            "x",
            0,
            (0..40).map(|i| (i as f64 * 0.9).sin() + 2.0).collect(),
        )
        .unwrap()])
        .unwrap();
        let cfg = SMapConfig::new(EmbeddingSpec::univariate("x", 2), 1.0);
        let f = smap_iterative_forecast(&d, "x", &cfg, 45).unwrap().forecast;
        let s = interaction_series(&f, "x(t-1)").unwrap();
        assert_eq!(s.start_year, 40);
        assert_eq!(s.len(), 6);
        assert!(matches!(
            interaction_series(&f, "z(t)"),
            Err(EdmError::UnknownCoordinate(_))
        ));
    }
}

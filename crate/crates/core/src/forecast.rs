//! Evaluation and extrapolation loops shared by every predictor.

use std::io::Write;

use serde::Serialize;

use crate::embedding::{multivariate_embed, state_at, EmbeddingLibrary, EmbeddingSpec, Query};
use crate::error::{EdmError, Result};
use crate::timeseries::{pearson_rho, rmse, Dataset, Skill};

/// z for a two-sided 95% normal interval.
pub const Z95: f64 = 1.96;

/// One prediction with its spread and, for regression-based predictors, the fitted row.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub value: f64,
    pub variance: f64,
    /// Intercept followed by one slope per embedding coordinate.
    pub coefficients: Option<Vec<f64>>,
}

/// Something that maps a library plus a query state to a forecast.
pub trait Predictor: Sync {
    fn spec(&self) -> &EmbeddingSpec;

    /// Forecast horizon in years.
    fn tp(&self) -> usize {
        1
    }

    fn predict(&self, library: &EmbeddingLibrary, query: &Query) -> Result<Prediction>;
}

/// Per-step slope estimates from a regression predictor.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoefficientTrack {
    /// `intercept` followed by the coordinate labels.
    pub names: Vec<String>,
    /// One row per forecast step, `None` where no fit exists.
    pub rows: Vec<Option<Vec<f64>>>,
}

/// Predictions over a run of years, with skill against whatever was observed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ForecastResult {
    pub target: String,
    pub times: Vec<i32>,
    pub predicted: Vec<Option<f64>>,
    pub observed: Option<Vec<Option<f64>>>,
    pub rho: Skill,
    pub rmse: Option<f64>,
    pub band_halfwidth: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coefficients: Option<CoefficientTrack>,
}

impl ForecastResult {
    fn assemble(
        target: &str,
        times: Vec<i32>,
        predictions: Vec<Option<Prediction>>,
        observed: Option<Vec<Option<f64>>>,
        band_halfwidth: Vec<f64>,
        coefficient_names: Option<Vec<String>>,
    ) -> Self {
        let predicted: Vec<Option<f64>> = predictions
            .iter()
            .map(|p| p.as_ref().map(|p| p.value))
            .collect();
        let coefficients = coefficient_names.map(|names| CoefficientTrack {
            names,
            rows: predictions
                .iter()
                .map(|p| p.as_ref().and_then(|p| p.coefficients.clone()))
                .collect(),
        });
        let mut out = Self {
            target: target.to_string(),
            times,
            predicted,
            observed,
            rho: Skill::Undefined,
            rmse: None,
            band_halfwidth,
            coefficients,
        };
        out.rescore();
        out
    }

    /// Recomputes rho and RMSE over the steps that have both an observation and a prediction.
    pub fn rescore(&mut self) {
        let Some(observed) = &self.observed else {
            self.rho = Skill::Undefined;
            self.rmse = None;
            return;
        };
        let (obs, pred): (Vec<f64>, Vec<Option<f64>>) = observed
            .iter()
            .zip(&self.predicted)
            .filter_map(|(o, p)| o.map(|o| (o, *p)))
            .unzip();
        self.rho = pearson_rho(&obs, &pred).unwrap_or(Skill::Undefined);
        self.rmse = rmse(&obs, &pred).ok();
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn at(&self, year: i32) -> Option<f64> {
        let i = self.times.iter().position(|&t| t == year)?;
        self.predicted[i]
    }

    pub fn band_at(&self, year: i32) -> Option<f64> {
        let i = self.times.iter().position(|&t| t == year)?;
        Some(self.band_halfwidth[i])
    }

    pub fn last_year(&self) -> Option<i32> {
        self.times.last().copied()
    }

    /// Appends `later` (which must start after this result ends) and rescores.
    pub fn concat(mut self, later: ForecastResult) -> Result<Self> {
        if let (Some(end), Some(&start)) = (self.last_year(), later.times.first()) {
            if start <= end {
                return Err(EdmError::InvalidData(format!(
                    "cannot append forecast starting {start} after one ending {end}"
                )));
            }
        }
        let n_self = self.len();
        let n_later = later.len();
        let obs_self = self.observed.take().unwrap_or_else(|| vec![None; n_self]);
        let obs_later = later.observed.unwrap_or_else(|| vec![None; n_later]);
        let observed: Vec<Option<f64>> = obs_self.into_iter().chain(obs_later).collect();
        self.observed = observed.iter().any(Option::is_some).then_some(observed);
        self.coefficients = match (self.coefficients.take(), later.coefficients) {
            (Some(mut a), Some(b)) if a.names == b.names => {
                a.rows.extend(b.rows);
                Some(a)
            }
            (None, None) => None,
            (a, b) => {
                let names = a.as_ref().or(b.as_ref()).map(|t| t.names.clone()).unwrap();
                let rows_a = a.map(|t| t.rows).unwrap_or_else(|| vec![None; n_self]);
                let rows_b = b.map(|t| t.rows).unwrap_or_else(|| vec![None; n_later]);
                Some(CoefficientTrack {
                    names,
                    rows: rows_a.into_iter().chain(rows_b).collect(),
                })
            }
        };
        self.times.extend(later.times);
        self.predicted.extend(later.predicted);
        self.band_halfwidth.extend(later.band_halfwidth);
        self.rescore();
        Ok(self)
    }

    /// `year,predicted,observed,band_lo,band_hi`; absent values are empty cells.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        self.write_csv_with_band(out, true)
    }

    /// As [`Self::write_csv`], dropping the band columns when `band` is false.
    pub fn write_csv_with_band<W: Write>(&self, out: W, band: bool) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let fail = |e: String| EdmError::Csv {
            path: "<output>".into(),
            message: e,
        };
        let header = ["year", "predicted", "observed", "band_lo", "band_hi"];
        let width = if band { 5 } else { 3 };
        w.write_record(&header[..width])
            .map_err(|e| fail(e.to_string()))?;
        let cell = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        for i in 0..self.len() {
            let p = self.predicted[i];
            let o = self.observed.as_ref().and_then(|o| o[i]);
            let h = self.band_halfwidth[i];
            let rec = [
                self.times[i].to_string(),
                cell(p),
                cell(o),
                cell(p.map(|p| p - h)),
                cell(p.map(|p| p + h)),
            ];
            w.write_record(&rec[..width])
                .map_err(|e| fail(e.to_string()))?;
        }
        w.flush().map_err(|e| fail(e.to_string()))
    }

    /// `year,intercept,<coordinate...>` for plotting interaction strengths.
    pub fn write_coefficients_csv<W: Write>(&self, out: W) -> Result<()> {
        let track = self
            .coefficients
            .as_ref()
            .ok_or_else(|| EdmError::InvalidData("forecast carries no coefficients".into()))?;
        let mut w = csv::Writer::from_writer(out);
        let fail = |e: String| EdmError::Csv {
            path: "<output>".into(),
            message: e,
        };
        let mut header = vec!["year".to_string()];
        header.extend(track.names.iter().cloned());
        w.write_record(&header).map_err(|e| fail(e.to_string()))?;
        for (t, row) in self.times.iter().zip(&track.rows) {
            let mut rec = vec![t.to_string()];
            match row {
                Some(r) => rec.extend(r.iter().map(f64::to_string)),
                None => rec.extend(std::iter::repeat_n(String::new(), track.names.len())),
            }
            w.write_record(&rec).map_err(|e| fail(e.to_string()))?;
        }
        w.flush().map_err(|e| fail(e.to_string()))
    }
}

fn coefficient_names(spec: &EmbeddingSpec) -> Vec<String> {
    std::iter::once("intercept".to_string())
        .chain(spec.coordinate_names())
        .collect()
}

/// Expanding-window one-step-ahead evaluation over `[from, to]`.
///
/// The prediction for year `s` sees only data up to `s - tp`: its library holds
/// every embeddable point whose target lies at or before that year.
pub fn evaluate<P: Predictor>(
    data: &Dataset,
    target: &str,
    predictor: &P,
    from: i32,
    to: i32,
) -> Result<ForecastResult> {
    let series = data.get(target)?;
    if from > to {
        return Err(EdmError::InvalidConfig(format!(
            "empty evaluation range {from}..={to}"
        )));
    }
    if from <= data.start_year() || to > data.end_year() {
        return Err(EdmError::InvalidConfig(format!(
            "evaluation range {from}..={to} not inside data {}..={}",
            data.start_year(),
            data.end_year()
        )));
    }
    let tp = predictor.tp() as i32;
    let spec = predictor.spec();
    let mut predictions = Vec::new();
    let mut band = Vec::new();
    let mut observed = Vec::new();
    for year in from..=to {
        let seen = data.slice_years(data.start_year(), year - tp)?;
        let library = multivariate_embed(&seen, spec, target, predictor.tp())?;
        let query = state_at(&seen, spec, year - tp)?;
        let p = predictor.predict(&library, &query)?;
        band.push(Z95 * p.variance.max(0.0).sqrt());
        predictions.push(Some(p));
        observed.push(series.at(year));
    }
    let has_coeffs = predictions
        .iter()
        .any(|p| p.as_ref().is_some_and(|p| p.coefficients.is_some()));
    Ok(ForecastResult::assemble(
        target,
        (from..=to).collect(),
        predictions,
        Some(observed),
        band,
        has_coeffs.then(|| coefficient_names(spec)),
    ))
}

/// How the library evolves while extrapolating past the data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum LibraryMode {
    /// Predictions are appended and join the library for later steps.
    #[default]
    SelfConditioned,
    /// The library stays on observed data; only the query state advances.
    Fixed,
}

/// Result of running past the end of the data.
#[derive(Debug, Clone, PartialEq)]
pub struct Extrapolation {
    pub forecast: ForecastResult,
    /// Observed data followed by the predicted years of every advanced series.
    pub extended: Dataset,
}

/// Iterates one-year steps from the end of `data` to `horizon_end`.
///
/// Every series named in the embedding (plus `target`) is advanced each year
/// from the same state. The reported band is `1.96 * sqrt(sum of step variances)`.
pub fn extrapolate<P: Predictor>(
    data: &Dataset,
    target: &str,
    predictor: &P,
    horizon_end: i32,
    mode: LibraryMode,
) -> Result<Extrapolation> {
    extrapolate_adjusted(data, target, predictor, horizon_end, mode, |_, _| {})
}

/// Like [`extrapolate`], but `adjust(year, step)` may edit each year's predicted
/// values before they are reported and appended.
pub fn extrapolate_adjusted<P: Predictor>(
    data: &Dataset,
    target: &str,
    predictor: &P,
    horizon_end: i32,
    mode: LibraryMode,
    adjust: impl Fn(i32, &mut [(&str, f64)]),
) -> Result<Extrapolation> {
    if predictor.tp() != 1 {
        return Err(EdmError::InvalidConfig(
            "iterative extrapolation chains one-year steps (tp = 1)".into(),
        ));
    }
    if horizon_end <= data.end_year() {
        return Err(EdmError::InvalidConfig(format!(
            "horizon {horizon_end} does not extend past the data end {}",
            data.end_year()
        )));
    }
    let spec = predictor.spec();
    let mut advanced: Vec<&str> = spec.series_names();
    if !advanced.contains(&target) {
        advanced.push(target);
    }
    let observed = data.select(&advanced)?;
    let mut working = observed.clone();
    let mut predictions = Vec::new();
    let mut band = Vec::new();
    let mut cumulative = 0.0;
    for year in data.end_year() + 1..=horizon_end {
        let query = state_at(&working, spec, year - 1)?;
        let library_data = match mode {
            LibraryMode::SelfConditioned => &working,
            LibraryMode::Fixed => &observed,
        };
        let mut step = Vec::with_capacity(advanced.len());
        let mut target_prediction = None;
        for name in &advanced {
            let library = multivariate_embed(library_data, spec, name, 1)?;
            let p = predictor.predict(&library, &query)?;
            step.push((*name, p.value));
            if *name == target {
                target_prediction = Some(p);
            }
        }
        let mut p = target_prediction.expect("target is always advanced");
        adjust(year, &mut step);
        p.value = step
            .iter()
            .find(|(n, _)| *n == target)
            .expect("target is always advanced")
            .1;
        cumulative += p.variance.max(0.0);
        band.push(Z95 * cumulative.sqrt());
        predictions.push(Some(p));
        working.push_year(&step)?;
    }
    let has_coeffs = predictions
        .iter()
        .any(|p| p.as_ref().is_some_and(|p| p.coefficients.is_some()));
    let forecast = ForecastResult::assemble(
        target,
        (data.end_year() + 1..=horizon_end).collect(),
        predictions,
        None,
        band,
        has_coeffs.then(|| coefficient_names(spec)),
    );
    Ok(Extrapolation {
        forecast,
        extended: working,
    })
}

//! Delay-coordinate reconstruction and nearest-neighbor search.
//!
//! A univariate embedding of series `X` with dimension `E` and delay `tau`
//! maps time `t` to `<X(t), X(t - tau), ..., X(t - (E-1) tau)>`. Multivariate
//! embeddings concatenate such blocks, one per series, in the order given by
//! [`EmbeddingSpec::columns`]. Reconstruction is only faithful when `E`
//! exceeds twice the (unknown) attractor dimension, so `E` is chosen by
//! forecast skill rather than checked.

use serde::{Deserialize, Serialize};

use crate::error::{EdmError, Result};
use crate::timeseries::{Dataset, TimeSeries};

/// Which series to lag, how many lags each, and the delay between lags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingSpec {
    /// `(series name, lag count)`; lag counts sum to `E`.
    pub columns: Vec<(String, usize)>,
    pub tau: usize,
    /// Temporal exclusion window; `None` means `E * tau`.
    pub exclusion_radius: Option<usize>,
    /// Z-score each series before measuring distances.
    pub normalize: bool,
}

impl EmbeddingSpec {
    pub fn univariate(series: impl Into<String>, e: usize) -> Self {
        Self::multivariate([(series, e)])
    }

    pub fn multivariate<S: Into<String>>(columns: impl IntoIterator<Item = (S, usize)>) -> Self {
        Self {
            columns: columns.into_iter().map(|(s, l)| (s.into(), l)).collect(),
            tau: 1,
            exclusion_radius: None,
            normalize: false,
        }
    }

    pub fn with_tau(mut self, tau: usize) -> Self {
        self.tau = tau;
        self
    }

    pub fn with_exclusion_radius(mut self, radius: usize) -> Self {
        self.exclusion_radius = Some(radius);
        self
    }

    pub fn with_normalize(mut self, normalize: bool) -> Self {
        self.normalize = normalize;
        self
    }

    /// Embedding dimension: total coordinate count.
    pub fn e(&self) -> usize {
        self.columns.iter().map(|(_, l)| l).sum()
    }

    pub fn exclusion(&self) -> usize {
        self.exclusion_radius.unwrap_or(self.e() * self.tau)
    }

    /// Distinct series names in column order.
    pub fn series_names(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for (name, _) in &self.columns {
            if !out.contains(&name.as_str()) {
                out.push(name);
            }
        }
        out
    }

    /// Years of history needed before the first reconstructable state.
    pub fn span(&self) -> usize {
        let max_lags = self.columns.iter().map(|(_, l)| *l).max().unwrap_or(1);
        max_lags.saturating_sub(1) * self.tau
    }

    /// Labels like `debris(t)`, `debris(t-1)`, one per coordinate.
    pub fn coordinate_names(&self) -> Vec<String> {
        self.columns
            .iter()
            .flat_map(|(name, lags)| {
                (0..*lags).map(move |l| match l * self.tau {
                    0 => format!("{name}(t)"),
                    d => format!("{name}(t-{d})"),
                })
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.columns.is_empty() || self.columns.iter().any(|(_, l)| *l == 0) {
            return Err(EdmError::InvalidConfig(
                "embedding needs at least one column with a positive lag count".into(),
            ));
        }
        if self.tau == 0 {
            return Err(EdmError::InvalidConfig("tau must be positive".into()));
        }
        Ok(())
    }
}

/// One reconstructed state with its time stamp and forward target.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LibraryPoint {
    pub time: i32,
    pub vector: Vec<f64>,
    pub target: f64,
}

/// The set of reconstructed states a predictor draws neighbors from.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingLibrary {
    pub points: Vec<LibraryPoint>,
    pub tp: usize,
    pub spec: EmbeddingSpec,
    pub target: String,
}

impl EmbeddingLibrary {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn e(&self) -> usize {
        self.spec.e()
    }

    pub fn exclusion_radius(&self) -> usize {
        self.spec.exclusion()
    }

    pub fn with_exclusion_radius(mut self, radius: usize) -> Self {
        self.spec.exclusion_radius = Some(radius);
        self
    }

    /// Whether library point `i` may serve as a neighbor of a query at `time`.
    ///
    /// A radius of zero disables the temporal filter entirely; otherwise every
    /// point with `|t - time| <= radius` is dropped.
    pub fn admissible(&self, i: usize, time: i32) -> bool {
        let r = self.exclusion_radius();
        r == 0 || (self.points[i].time - time).unsigned_abs() as usize > r
    }

    pub fn admissible_indices(&self, time: i32) -> impl Iterator<Item = usize> + '_ {
        (0..self.points.len()).filter(move |&i| self.admissible(i, time))
    }
}

/// A state to predict from.
#[derive(Debug, Clone, PartialEq)]
pub struct Query {
    pub time: i32,
    pub vector: Vec<f64>,
}

impl Query {
    pub fn new(time: i32, vector: Vec<f64>) -> Self {
        Self { time, vector }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Euclidean,
    Manhattan,
}

impl Metric {
    pub fn distance(self, a: &[f64], b: &[f64]) -> f64 {
        debug_assert_eq!(a.len(), b.len());
        match self {
            Metric::Euclidean => a
                .iter()
                .zip(b)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt(),
            Metric::Manhattan => a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    /// Index into [`EmbeddingLibrary::points`].
    pub index: usize,
    pub time: i32,
    pub distance: f64,
}

/// Neighbors sorted by distance, ties by ascending time.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborSet {
    pub entries: Vec<Neighbor>,
}

impl NeighborSet {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

struct Scaling {
    // per series: (mean, sd)
    stats: Vec<(String, f64, f64)>,
}

impl Scaling {
    fn for_spec(data: &Dataset, spec: &EmbeddingSpec) -> Result<Self> {
        let mut stats = Vec::new();
        for name in spec.series_names() {
            let s = data.get(name)?;
            let (mean, sd) = if spec.normalize {
                let n = s.len() as f64;
                let mean = s.values.iter().sum::<f64>() / n;
                let var = s
                    .values
                    .iter()
                    .map(|v| (v - mean) * (v - mean))
                    .sum::<f64>()
                    / n;
                let sd = var.sqrt();
                (mean, if sd > 0.0 { sd } else { 1.0 })
            } else {
                (0.0, 1.0)
            };
            stats.push((name.to_string(), mean, sd));
        }
        Ok(Self { stats })
    }

    fn apply(&self, name: &str, v: f64) -> f64 {
        let (_, mean, sd) = self
            .stats
            .iter()
            .find(|(n, _, _)| n == name)
            .expect("scaling covers every spec series");
        (v - mean) / sd
    }
}

fn state_with(
    data: &Dataset,
    spec: &EmbeddingSpec,
    scaling: &Scaling,
    index: usize,
) -> Result<Vec<f64>> {
    let mut v = Vec::with_capacity(spec.e());
    for (name, lags) in &spec.columns {
        let s: &TimeSeries = data.get(name)?;
        for l in 0..*lags {
            let back = l * spec.tau;
            let i = index.checked_sub(back).ok_or(EdmError::TooShort {
                needed: back,
                available: index,
            })?;
            v.push(scaling.apply(name, s.values[i]));
        }
    }
    Ok(v)
}

/// Reconstructed state at `year` using only the data in `data`.
pub fn state_at(data: &Dataset, spec: &EmbeddingSpec, year: i32) -> Result<Query> {
    spec.validate()?;
    let scaling = Scaling::for_spec(data, spec)?;
    let index = usize::try_from(year - data.start_year())
        .ok()
        .filter(|&i| i < data.len() && i >= spec.span())
        .ok_or(EdmError::TooShort {
            needed: spec.span() + 1,
            available: data.len(),
        })?;
    Ok(Query::new(year, state_with(data, spec, &scaling, index)?))
}

/// Univariate delay embedding of one series with forward horizon `tp`.
pub fn delay_embed(
    series: &TimeSeries,
    spec: &EmbeddingSpec,
    tp: usize,
) -> Result<EmbeddingLibrary> {
    let mut spec = spec.clone();
    let e = spec.e();
    spec.columns = vec![(series.name.clone(), e)];
    let data = Dataset::new(vec![series.clone()])?;
    multivariate_embed(&data, &spec, &series.name, tp)
}

/// Embeds the columns of `spec` jointly; `target` supplies the value `tp` steps ahead.
pub fn multivariate_embed(
    data: &Dataset,
    spec: &EmbeddingSpec,
    target: &str,
    tp: usize,
) -> Result<EmbeddingLibrary> {
    spec.validate()?;
    let target_series = data.get(target)?;
    let scaling = Scaling::for_spec(data, spec)?;
    let span = spec.span();
    let n = data.len();
    if n <= span + tp {
        return Err(EdmError::TooShort {
            needed: span + tp,
            available: n,
        });
    }
    let points = (span..n - tp)
        .map(|i| {
            Ok(LibraryPoint {
                time: data.start_year() + i as i32,
                vector: state_with(data, spec, &scaling, i)?,
                target: target_series.values[i + tp],
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EmbeddingLibrary {
        points,
        tp,
        spec: spec.clone(),
        target: target.to_string(),
    })
}

/// The `k` nearest admissible library points to `query`.
pub fn knn(
    library: &EmbeddingLibrary,
    query: &Query,
    k: usize,
    metric: Metric,
) -> Result<NeighborSet> {
    if k == 0 {
        return Err(EdmError::InvalidConfig("k must be positive".into()));
    }
    let mut all: Vec<Neighbor> = library
        .admissible_indices(query.time)
        .map(|i| {
            let p = &library.points[i];
            Neighbor {
                index: i,
                time: p.time,
                distance: metric.distance(&p.vector, &query.vector),
            }
        })
        .collect();
    if all.len() < k {
        return Err(EdmError::InsufficientNeighbors {
            requested: k,
            available: all.len(),
        });
    }
    let by_distance =
        |a: &Neighbor, b: &Neighbor| a.distance.total_cmp(&b.distance).then(a.time.cmp(&b.time));
    if k < all.len() {
        all.select_nth_unstable_by(k - 1, by_distance);
        all.truncate(k);
    }
    all.sort_by(by_distance);
    Ok(NeighborSet { entries: all })
}

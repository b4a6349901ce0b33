//! Yearly time series, aligned datasets, CSV ingestion and forecast skill metrics.
//!
//! All series are sampled once per year with no gaps. A [`Dataset`] holds any
//! number of series over one shared year range, which is the shape every
//! embedding routine expects.

use std::fmt;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{EdmError, Result};

/// A named series of yearly observations; `values[i]` belongs to `start_year + i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    pub name: String,
    pub start_year: i32,
    pub values: Vec<f64>,
}

impl TimeSeries {
    pub fn new(name: impl Into<String>, start_year: i32, values: Vec<f64>) -> Result<Self> {
        let name = name.into();
        if values.is_empty() {
            return Err(EdmError::InvalidData(format!("series `{name}` is empty")));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(EdmError::InvalidData(format!(
                "series `{name}` has a non-finite value at year {}",
                start_year + i as i32
            )));
        }
        Ok(Self {
            name,
            start_year,
            values,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn end_year(&self) -> i32 {
        self.start_year + self.values.len() as i32 - 1
    }

    pub fn years(&self) -> impl Iterator<Item = i32> + '_ {
        (0..self.values.len()).map(move |i| self.start_year + i as i32)
    }

    /// Value observed in `year`, if the year is covered.
    pub fn at(&self, year: i32) -> Option<f64> {
        let offset = year.checked_sub(self.start_year)?;
        usize::try_from(offset)
            .ok()
            .and_then(|i| self.values.get(i).copied())
    }
}

/// A collection of series sharing one aligned year range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    series: Vec<TimeSeries>,
}

impl Dataset {
    pub fn new(series: Vec<TimeSeries>) -> Result<Self> {
        let first = series
            .first()
            .ok_or_else(|| EdmError::InvalidData("dataset has no series".into()))?;
        let (start, len) = (first.start_year, first.len());
        for (i, s) in series.iter().enumerate() {
            if s.start_year != start || s.len() != len {
                return Err(EdmError::InvalidData(format!(
                    "series `{}` covers {}..={} but `{}` covers {}..={}",
                    s.name,
                    s.start_year,
                    s.end_year(),
                    first.name,
                    first.start_year,
                    first.end_year()
                )));
            }
            if series[..i].iter().any(|o| o.name == s.name) {
                return Err(EdmError::InvalidData(format!(
                    "duplicate series name `{}`",
                    s.name
                )));
            }
        }
        Ok(Self { series })
    }

    pub fn start_year(&self) -> i32 {
        self.series[0].start_year
    }

    pub fn end_year(&self) -> i32 {
        self.series[0].end_year()
    }

    /// Number of years covered.
    pub fn len(&self) -> usize {
        self.series[0].len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn years(&self) -> impl Iterator<Item = i32> {
        self.start_year()..=self.end_year()
    }

    pub fn series(&self) -> &[TimeSeries] {
        &self.series
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.series.iter().map(|s| s.name.as_str())
    }

    pub fn get(&self, name: &str) -> Result<&TimeSeries> {
        self.series
            .iter()
            .find(|s| s.name == name)
            .ok_or_else(|| EdmError::UnknownSeries(name.to_string()))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut TimeSeries> {
        self.series
            .iter_mut()
            .find(|s| s.name == name)
            .ok_or_else(|| EdmError::UnknownSeries(name.to_string()))
    }

    /// Restricts every series to `[from, to]` (inclusive).
    pub fn slice_years(&self, from: i32, to: i32) -> Result<Self> {
        let from = from.max(self.start_year());
        let to = to.min(self.end_year());
        if from > to {
            return Err(EdmError::NoOverlap);
        }
        let lo = (from - self.start_year()) as usize;
        let hi = (to - self.start_year()) as usize + 1;
        let series = self
            .series
            .iter()
            .map(|s| TimeSeries {
                name: s.name.clone(),
                start_year: from,
                values: s.values[lo..hi].to_vec(),
            })
            .collect();
        Ok(Self { series })
    }

    /// Appends one year; `values` must name every series exactly once.
    pub fn push_year(&mut self, values: &[(&str, f64)]) -> Result<()> {
        if values.len() != self.series.len() {
            return Err(EdmError::InvalidData(format!(
                "push_year needs {} values, got {}",
                self.series.len(),
                values.len()
            )));
        }
        for s in &self.series {
            if !values.iter().any(|(n, _)| *n == s.name) {
                return Err(EdmError::UnknownSeries(s.name.clone()));
            }
        }
        for (name, v) in values {
            self.get_mut(name)?.values.push(*v);
        }
        Ok(())
    }

    /// Keeps only the named series, in the given order.
    pub fn select(&self, names: &[&str]) -> Result<Self> {
        let series = names
            .iter()
            .map(|n| self.get(n).cloned())
            .collect::<Result<Vec<_>>>()?;
        Self::new(series)
    }

    /// Writes `year,<series...>` with shortest round-trip float formatting.
    pub fn write_csv<W: Write>(&self, out: W, year_column: &str) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let map = |e: csv::Error| EdmError::Csv {
            path: "<output>".into(),
            message: e.to_string(),
        };
        let mut header = vec![year_column.to_string()];
        header.extend(self.names().map(str::to_string));
        w.write_record(&header).map_err(map)?;
        for (i, year) in self.years().enumerate() {
            let mut row = vec![year.to_string()];
            row.extend(self.series.iter().map(|s| s.values[i].to_string()));
            w.write_record(&row).map_err(map)?;
        }
        w.flush().map_err(|e| EdmError::Csv {
            path: "<output>".into(),
            message: e.to_string(),
        })
    }
}

/// Reads a CSV with one integer year column and one or more numeric value columns.
pub fn load_csv(path: impl AsRef<Path>, year_column: &str) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| EdmError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_csv(file, year_column).map_err(|e| match e {
        EdmError::Csv { message, .. } => EdmError::Csv {
            path: path.to_path_buf(),
            message,
        },
        other => other,
    })
}

/// Same as [`load_csv`] over any reader.
pub fn read_csv<R: std::io::Read>(input: R, year_column: &str) -> Result<Dataset> {
    let err = |message: String| EdmError::Csv {
        path: "<input>".into(),
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(input);
    let headers = reader.headers().map_err(|e| err(e.to_string()))?.clone();
    let year_idx = headers
        .iter()
        .position(|h| h == year_column)
        .ok_or_else(|| err(format!("no `{year_column}` column in header")))?;
    let value_cols: Vec<(usize, String)> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != year_idx)
        .map(|(i, h)| (i, h.to_string()))
        .collect();
    if value_cols.is_empty() {
        return Err(err("no value columns".into()));
    }

    let mut start_year = None;
    let mut prev_year: Option<i32> = None;
    let mut columns = vec![Vec::new(); value_cols.len()];
    for (i, record) in reader.records().enumerate() {
        // header is row 1
        let row = i + 2;
        let record = record.map_err(|e| err(format!("row {row}: {e}")))?;
        let raw_year = record.get(year_idx).unwrap_or("");
        let year: i32 = raw_year
            .parse()
            .map_err(|_| err(format!("row {row}: year `{raw_year}` is not an integer")))?;
        if let Some(prev) = prev_year {
            if year == prev {
                return Err(err(format!("duplicate year {year} at row {row}")));
            }
            if year != prev + 1 {
                return Err(err(format!("year gap at row {row}")));
            }
        } else {
            start_year = Some(year);
        }
        prev_year = Some(year);
        for (slot, (col, name)) in columns.iter_mut().zip(&value_cols) {
            let cell = record.get(*col).unwrap_or("");
            let v: f64 = cell.parse().map_err(|_| {
                err(format!(
                    "row {row}: non-numeric value `{cell}` in column `{name}`"
                ))
            })?;
            if !v.is_finite() {
                return Err(err(format!(
                    "row {row}: non-finite value in column `{name}`"
                )));
            }
            slot.push(v);
        }
    }
    let start_year = start_year.ok_or_else(|| err("no data rows".into()))?;
    let series = value_cols
        .into_iter()
        .zip(columns)
        .map(|((_, name), values)| TimeSeries::new(name, start_year, values))
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(series)
}

/// Merges datasets onto the intersection of their year ranges.
pub fn align(datasets: &[Dataset]) -> Result<Dataset> {
    let first = datasets
        .first()
        .ok_or_else(|| EdmError::InvalidData("nothing to align".into()))?;
    let from = datasets
        .iter()
        .map(Dataset::start_year)
        .max()
        .unwrap_or(first.start_year());
    let to = datasets
        .iter()
        .map(Dataset::end_year)
        .min()
        .unwrap_or(first.end_year());
    if from > to {
        return Err(EdmError::NoOverlap);
    }
    let series = datasets
        .iter()
        .map(|d| d.slice_years(from, to).map(|d| d.series))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    Dataset::new(series)
}

/// Forecast skill; zero-variance inputs give [`Skill::Undefined`] instead of a number.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Skill {
    Value(f64),
    #[default]
    Undefined,
}

impl Skill {
    pub fn value(self) -> Option<f64> {
        match self {
            Skill::Value(v) => Some(v),
            Skill::Undefined => None,
        }
    }

    pub fn is_defined(self) -> bool {
        matches!(self, Skill::Value(_))
    }

    /// Ordering key used by grid searches: undefined ranks below every value.
    pub fn rank_key(self) -> f64 {
        self.value().unwrap_or(f64::NEG_INFINITY)
    }
}

impl fmt::Display for Skill {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Skill::Value(v) => write!(f, "{v}"),
            Skill::Undefined => f.write_str("undefined"),
        }
    }
}

impl Serialize for Skill {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.value().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Skill {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        Ok(match Option::<f64>::deserialize(d)? {
            Some(v) => Skill::Value(v),
            None => Skill::Undefined,
        })
    }
}

fn valid_pairs(observed: &[f64], predicted: &[Option<f64>]) -> Result<Vec<(f64, f64)>> {
    if observed.len() != predicted.len() {
        return Err(EdmError::InvalidData(format!(
            "observed has {} values but predicted has {}",
            observed.len(),
            predicted.len()
        )));
    }
    Ok(observed
        .iter()
        .zip(predicted)
        .filter_map(|(o, p)| p.map(|p| (*o, p)))
        .filter(|(o, p)| o.is_finite() && p.is_finite())
        .collect())
}

/// Pearson correlation between observations and predictions; absent predictions are skipped.
pub fn pearson_rho(observed: &[f64], predicted: &[Option<f64>]) -> Result<Skill> {
    let pairs = valid_pairs(observed, predicted)?;
    if pairs.len() < 2 {
        return Err(EdmError::NotEnoughPairs(pairs.len()));
    }
    let n = pairs.len() as f64;
    let (mo, mp) = pairs
        .iter()
        .fold((0.0, 0.0), |(a, b), (o, p)| (a + o, b + p));
    let (mo, mp) = (mo / n, mp / n);
    let (mut sop, mut soo, mut spp) = (0.0, 0.0, 0.0);
    for (o, p) in &pairs {
        let (do_, dp) = (o - mo, p - mp);
        sop += do_ * dp;
        soo += do_ * do_;
        spp += dp * dp;
    }
    if soo <= 0.0 || spp <= 0.0 {
        return Ok(Skill::Undefined);
    }
    Ok(Skill::Value(
        (sop / (soo.sqrt() * spp.sqrt())).clamp(-1.0, 1.0),
    ))
}

/// Root mean squared error over the valid pairs.
pub fn rmse(observed: &[f64], predicted: &[Option<f64>]) -> Result<f64> {
    let pairs = valid_pairs(observed, predicted)?;
    if pairs.is_empty() {
        return Err(EdmError::NotEnoughPairs(0));
    }
    let sse: f64 = pairs.iter().map(|(o, p)| (o - p) * (o - p)).sum();
    Ok((sse / pairs.len() as f64).sqrt())
}

/// [`pearson_rho`] for two fully observed sequences.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<Skill> {
    let b: Vec<Option<f64>> = b.iter().copied().map(Some).collect();
    pearson_rho(a, &b)
}

/// [`rmse`] for two fully observed sequences.
pub fn rmse_full(a: &[f64], b: &[f64]) -> Result<f64> {
    let b: Vec<Option<f64>> = b.iter().copied().map(Some).collect();
    rmse(a, &b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ds(text: &str) -> Result<Dataset> {
        read_csv(text.as_bytes(), "year")
    }

    #[test]
    fn loads_small_file() {
        let d = ds("year,debris\n1960,10\n1961,12\n1962,15\n").unwrap();
        assert_eq!(d.start_year(), 1960);
        assert_eq!(d.get("debris").unwrap().values, vec![10.0, 12.0, 15.0]);
    }

    #[test]
    fn rejects_year_gap_with_row() {
        let e = ds("year,debris\n1960,1\n1962,2\n").unwrap_err();
        assert!(e.to_string().contains("year gap at row 3"), "{e}");
    }

    #[test]
    fn rejects_duplicate_year_and_non_numeric() {
        let e = ds("year,x\n1960,1\n1960,2\n").unwrap_err();
        assert!(
            e.to_string().contains("duplicate year 1960 at row 3"),
            "{e}"
        );
        let e = ds("year,x\n1960,1\n1961,abc\n").unwrap_err();
        assert!(e.to_string().contains("row 3"), "{e}");
    }

    #[test]
    fn missing_file_names_path() {
        let e = load_csv("/nonexistent/file.csv", "year").unwrap_err();
        assert!(e.to_string().contains("/nonexistent/file.csv"));
        assert!(e.is_input_error());
    }

    #[test]
    fn bundled_file_shape() {
        let path = concat!(env!("CARGO_MANIFEST_DIR"), "/data/leo_debris_1960_2022.csv");
        let d = load_csv(path, "year").unwrap();
        assert_eq!(d.len(), 63);
        assert_eq!((d.start_year(), d.end_year()), (1960, 2022));
        assert_eq!(
            d.names().collect::<Vec<_>>(),
            ["debris", "launched", "total"]
        );
    }

    #[test]
    fn align_intersects_ranges() {
        let a = Dataset::new(vec![TimeSeries::new("a", 1960, vec![0.0; 63]).unwrap()]).unwrap();
        let b = Dataset::new(vec![TimeSeries::new("b", 1957, vec![1.0; 67]).unwrap()]).unwrap();
        let m = align(&[a.clone(), b]).unwrap();
        assert_eq!((m.start_year(), m.end_year()), (1960, 2022));
        assert_eq!(m.series().len(), 2);

        assert_eq!(align(std::slice::from_ref(&a)).unwrap(), a);

        let c = Dataset::new(vec![TimeSeries::new("c", 1960, vec![0.0; 21]).unwrap()]).unwrap();
        let d = Dataset::new(vec![TimeSeries::new("d", 1990, vec![0.0; 11]).unwrap()]).unwrap();
        assert!(matches!(align(&[c, d]), Err(EdmError::NoOverlap)));
    }

    #[test]
    fn pearson_examples() {
        let r = |a: &[f64], b: &[f64]| pearson(a, b).unwrap().value().unwrap();
        assert!((r(&[1., 2., 3.], &[1., 2., 3.]) - 1.0).abs() < 1e-12);
        assert!((r(&[1., 2., 3.], &[3., 2., 1.]) + 1.0).abs() < 1e-12);
        // by hand: r = (24/9) / sqrt(42/9 * 24/9) = sqrt(4/7)
        let r = pearson(&[1., 2., 4.], &[1., 3., 3.])
            .unwrap()
            .value()
            .unwrap();
        assert!((r - 0.755_928_946).abs() < 1e-4, "{r}");
    }

    #[test]
    fn pearson_undefined_and_missing() {
        assert_eq!(
            pearson(&[1., 2., 3.], &[5., 5., 5.]).unwrap(),
            Skill::Undefined
        );
        let r = pearson_rho(&[9., 1., 2., 3.], &[None, Some(1.), Some(2.), Some(3.)]).unwrap();
        assert!((r.value().unwrap() - 1.0).abs() < 1e-12);
        assert!(matches!(
            pearson_rho(&[1., 2.], &[Some(1.), None]),
            Err(EdmError::NotEnoughPairs(1))
        ));
    }

    #[test]
    fn rmse_examples() {
        assert_eq!(rmse_full(&[1., 2., 3.], &[1., 2., 3.]).unwrap(), 0.0);
        assert!((rmse_full(&[0., 0.], &[3., 4.]).unwrap() - 3.535_533_9).abs() < 1e-4);
        assert!((rmse_full(&[1., 2., 3.], &[2., 3., 4.]).unwrap() - 1.0).abs() < 1e-12);
        assert!(rmse(&[1.0], &[None]).is_err());
    }

    proptest! {
        #[test]
        fn pearson_symmetric_and_affine_invariant(
            xs in prop::collection::vec(-1e3f64..1e3, 3..40),
            noise in prop::collection::vec(-1e3f64..1e3, 40),
            a in 0.01f64..100.0, b in -1e3f64..1e3,
        ) {
            let ys: Vec<f64> = xs.iter().zip(&noise).map(|(x, n)| x + n).collect();
            let (Ok(Skill::Value(r1)), Ok(Skill::Value(r2))) = (pearson(&xs, &ys), pearson(&ys, &xs)) else {
                return Ok(());
            };
            prop_assert!((r1 - r2).abs() < 1e-12);
            let scaled: Vec<f64> = ys.iter().map(|y| a * y + b).collect();
            if let Ok(Skill::Value(r3)) = pearson(&xs, &scaled) {
                prop_assert!((r1 - r3).abs() < 1e-9);
            }
        }

        #[test]
        fn rmse_symmetric_zero_iff_equal(
            xs in prop::collection::vec(-1e3f64..1e3, 1..30),
            ys in prop::collection::vec(-1e3f64..1e3, 30),
        ) {
            let ys = &ys[..xs.len()];
            prop_assert_eq!(rmse_full(&xs, ys).unwrap(), rmse_full(ys, &xs).unwrap());
            prop_assert_eq!(rmse_full(&xs, &xs).unwrap(), 0.0);
            prop_assert_eq!(rmse_full(&xs, ys).unwrap() == 0.0, xs == ys);
        }

        #[test]
        fn csv_roundtrip_bit_exact(values in prop::collection::vec(-1e9f64..1e9, 1..30), start in 1900i32..2000) {
            let d = Dataset::new(vec![TimeSeries::new("v", start, values).unwrap()]).unwrap();
            let mut buf = Vec::new();
            d.write_csv(&mut buf, "year").unwrap();
            let back = read_csv(buf.as_slice(), "year").unwrap();
            prop_assert_eq!(back, d);
        }
    }
}

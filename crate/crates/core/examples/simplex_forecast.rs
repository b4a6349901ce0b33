//! Iterated simplex forecast of debris from the end of the record to 2050.

use edmkit::embedding::EmbeddingSpec;
use edmkit::simplex::{iterative_forecast, SimplexConfig};
use edmkit::timeseries::load_csv;

fn main() -> anyhow::Result<()> {
    let data = load_csv(
        concat!(env!("CARGO_MANIFEST_DIR"), "/data/leo_debris_1960_2022.csv"),
        "year",
    )?;
    let cfg = SimplexConfig::new(EmbeddingSpec::univariate("debris", 4));
    let f = iterative_forecast(&data, "debris", &cfg, 2050)?;
    for year in (2025..=2050).step_by(5) {
        println!(
            "{year}  {:>10.0} +- {:.0}",
            f.at(year).unwrap_or(f64::NAN),
            f.band_at(year).unwrap_or(f64::NAN)
        );
    }
    Ok(())
}

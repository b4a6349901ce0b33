//! Localization search and iterated S-map forecast driven by debris and total bodies.

use edmkit::embedding::EmbeddingSpec;
use edmkit::smap::{smap_iterative_forecast, theta_search, SMapConfig, DEFAULT_THETAS};
use edmkit::timeseries::load_csv;

fn main() -> anyhow::Result<()> {
    let data = load_csv(
        concat!(env!("CARGO_MANIFEST_DIR"), "/data/leo_debris_1960_2022.csv"),
        "year",
    )?;
    let spec = EmbeddingSpec::multivariate([("debris", 2), ("total", 2)]);

    let search = theta_search(
        &data,
        "debris",
        &spec,
        &DEFAULT_THETAS,
        1990,
        (1991, data.end_year()),
    )?;
    for row in &search.rows {
        println!(
            "theta {:>4}  rho {:.4}",
            row.theta,
            row.rho.value().unwrap_or(f64::NAN)
        );
    }
    println!("best theta = {} ({:?})", search.best_theta, search.verdict);

    let run = smap_iterative_forecast(&data, "debris", &SMapConfig::new(spec, 7.0), 2050)?;
    let f = &run.forecast;
    for year in (2025..=2050).step_by(5) {
        println!(
            "{year}  {:>14.0} +- {:.0}",
            f.at(year).unwrap_or(f64::NAN),
            f.band_at(year).unwrap_or(f64::NAN)
        );
    }
    Ok(())
}

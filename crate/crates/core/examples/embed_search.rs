//! Simplex skill of the debris series for embedding dimensions 1 through 10.

use edmkit::embedding::EmbeddingSpec;
use edmkit::simplex::embed_dimension_search;
use edmkit::timeseries::load_csv;

fn main() -> anyhow::Result<()> {
    let data = load_csv(
        concat!(env!("CARGO_MANIFEST_DIR"), "/data/leo_debris_1960_2022.csv"),
        "year",
    )?;
    let template = EmbeddingSpec::univariate("debris", 1);
    let search = embed_dimension_search(
        &data,
        "debris",
        1..=10,
        &template,
        1990,
        (1991, data.end_year()),
    )?;
    println!("{:>3}  {:>8}  {:>12}", "E", "rho", "rmse");
    for row in &search.rows {
        println!(
            "{:>3}  {:>8.4}  {:>12.1}",
            row.e,
            row.rho.value().unwrap_or(f64::NAN),
            row.rmse.unwrap_or(f64::NAN)
        );
    }
    println!("best E = {}", search.best_e);
    Ok(())
}

//! Year-by-year S-map slopes of next-year debris with respect to each coordinate.

use edmkit::embedding::EmbeddingSpec;
use edmkit::forecast::evaluate;
use edmkit::smap::{interaction_series, SMapConfig};
use edmkit::timeseries::load_csv;

fn main() -> anyhow::Result<()> {
    let data = load_csv(
        concat!(env!("CARGO_MANIFEST_DIR"), "/data/leo_debris_1960_2022.csv"),
        "year",
    )?;
    let spec = EmbeddingSpec::multivariate([("debris", 2), ("total", 2)]);
    let names = spec.coordinate_names();
    let r = evaluate(
        &data,
        "debris",
        &SMapConfig::new(spec, 7.0),
        1991,
        data.end_year(),
    )?;
    let tracks = names
        .iter()
        .map(|n| interaction_series(&r, n))
        .collect::<Result<Vec<_>, _>>()?;
    print!("year");
    for n in &names {
        print!("  {n:>14}");
    }
    println!();
    for year in tracks[0].years() {
        print!("{year}");
        for t in &tracks {
            print!("  {:>14.4}", t.at(year).unwrap_or(f64::NAN));
        }
        println!();
    }
    Ok(())
}

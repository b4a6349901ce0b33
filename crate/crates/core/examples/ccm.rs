//! Convergent cross mapping between every pair of the debris, launched and total series.

use edmkit::ccm::{convergence_sweep, CcmConfig};
use edmkit::timeseries::load_csv;

fn main() -> anyhow::Result<()> {
    let data = load_csv(
        concat!(env!("CARGO_MANIFEST_DIR"), "/data/leo_debris_1960_2022.csv"),
        "year",
    )?;
    let e = 4;
    let cfg = CcmConfig::new(e, CcmConfig::even_sizes(e, data.len() - (e - 1), 20), 20, 7);
    for (a, b) in [
        ("debris", "launched"),
        ("debris", "total"),
        ("launched", "total"),
    ] {
        let r = convergence_sweep(data.get(a)?, data.get(b)?, &cfg)?;
        for dir in [&r.a_from_b, &r.b_from_a] {
            let curve: Vec<String> = dir
                .curve
                .iter()
                .step_by(4)
                .map(|p| format!("{:.3}", p.mean_rho.value().unwrap_or(f64::NAN)))
                .collect();
            println!(
                "{:<18} final {:.4}  {:?}  [{}]",
                dir.label(),
                dir.final_rho().value().unwrap_or(f64::NAN),
                dir.verdict,
                curve.join(" ")
            );
        }
    }
    Ok(())
}

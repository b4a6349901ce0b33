//! Mitigation policies from the bundled scenario file, forecast to the horizon.

use edmkit::scenario::{load_scenarios, simulate_all, write_reports_csv};
use edmkit::timeseries::load_csv;

fn main() -> anyhow::Result<()> {
    let root = env!("CARGO_MANIFEST_DIR");
    let data = load_csv(format!("{root}/data/leo_debris_1960_2022.csv"), "year")?;
    let file = load_scenarios(format!("{root}/scenarios/table2.cfg"))?;
    let reports = simulate_all(&data, &file.scenarios, &file.settings)?;
    write_reports_csv(&reports, std::io::stdout().lock())?;
    Ok(())
}

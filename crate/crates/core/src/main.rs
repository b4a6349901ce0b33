use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use edmkit::ccm::{convergence_sweep, CcmConfig, Sampling};
use edmkit::embedding::EmbeddingSpec;
use edmkit::error::EdmError;
use edmkit::forecast::{self, ForecastResult, LibraryMode};
use edmkit::manifest::RunManifest;
use edmkit::scenario::{self, MitigationReport};
use edmkit::simplex::{embed_dimension_search, SimplexConfig};
use edmkit::smap::SMapConfig;
use edmkit::timeseries::{load_csv, Dataset};

const BUNDLED_DATA: &str = "leo_debris_1960_2022.csv";
const BUNDLED_SCENARIOS: &str = "table2.cfg";

#[derive(Parser)]
#[command(
    name = "edmkit",
    version,
    about = "Empirical dynamic modeling for orbital-debris forecasting"
)]
struct Cli {
    /// Worker threads (results do not depend on this).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simplex skill for a range of embedding dimensions.
    EmbedSearch(EmbedSearchArgs),
    /// In-sample skill and iterated forecast with simplex or S-map.
    Forecast(ForecastArgs),
    /// Convergent cross mapping between two series.
    Ccm(CcmArgs),
    /// Run policy scenarios from a config file.
    Simulate(SimulateArgs),
    /// Print the version.
    Version,
}

#[derive(Args, Serialize)]
struct DataArgs {
    /// CSV with a `year` column (defaults to the bundled LEO record).
    #[arg(long)]
    data: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct EmbedSearchArgs {
    #[command(flatten)]
    #[serde(flatten)]
    data: DataArgs,
    #[arg(long, default_value = "debris")]
    target: String,
    /// Dimension range `lo:hi`.
    #[arg(long, default_value = "1:10", value_parser = parse_range)]
    e: (i32, i32),
    #[arg(long, default_value_t = 1)]
    tau: usize,
    #[arg(long, default_value_t = 1990)]
    train_end: i32,
    /// Evaluation years `from:to` (defaults to after training through the data end).
    #[arg(long, value_parser = parse_range)]
    eval: Option<(i32, i32)>,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Method {
    Simplex,
    Smap,
}

#[derive(Args, Serialize)]
struct ForecastArgs {
    #[command(flatten)]
    #[serde(flatten)]
    data: DataArgs,
    #[arg(long, value_enum, default_value = "smap")]
    method: Method,
    #[arg(long, default_value = "debris")]
    target: String,
    /// Comma-separated input series; the total E is split across them.
    #[arg(long, value_delimiter = ',')]
    columns: Vec<String>,
    #[arg(long, default_value_t = 4)]
    e: usize,
    #[arg(long, default_value_t = 7.0)]
    theta: f64,
    #[arg(long, default_value_t = 1)]
    tau: usize,
    #[arg(long, default_value_t = 1990)]
    train_end: i32,
    /// Last forecast year.
    #[arg(long, default_value_t = 2050)]
    to: i32,
    /// Keep the library on observed data while extrapolating.
    #[arg(long)]
    fixed_library: bool,
    /// Omit the band columns.
    #[arg(long)]
    no_band: bool,
}

#[derive(Args, Serialize)]
struct CcmArgs {
    #[command(flatten)]
    #[serde(flatten)]
    data: DataArgs,
    #[arg(long)]
    a: String,
    #[arg(long)]
    b: String,
    /// Embedding dimension (defaults to the simplex-optimal E of `b`).
    #[arg(long)]
    e: Option<usize>,
    #[arg(long, default_value_t = 1)]
    tau: usize,
    /// Comma-separated library sizes (defaults to an even grid).
    #[arg(long, value_delimiter = ',')]
    sizes: Vec<usize>,
    /// Grid size when `--sizes` is not given.
    #[arg(long, default_value_t = 20)]
    n_sizes: usize,
    #[arg(long, default_value_t = 20)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0)]
    exclusion_radius: usize,
    #[arg(long)]
    contiguous: bool,
    #[arg(long)]
    replacement: bool,
}

#[derive(Args, Serialize)]
struct SimulateArgs {
    #[command(flatten)]
    #[serde(flatten)]
    data: DataArgs,
    /// Scenario file (defaults to the bundled mitigation grid).
    #[arg(long)]
    config: Option<PathBuf>,
}

fn parse_range(s: &str) -> Result<(i32, i32), String> {
    let (a, b) = s.split_once(':').unwrap_or((s, s));
    let p = |v: &str| {
        v.trim()
            .parse::<i32>()
            .map_err(|_| format!("`{s}` is not `lo:hi`"))
    };
    let (a, b) = (p(a)?, p(b)?);
    if a > b {
        return Err(format!("empty range `{s}`"));
    }
    Ok((a, b))
}

/// Looks for `given` as is, then under `EDMKIT_DATA_DIR`, then next to the
/// bundled files.
fn resolve(given: Option<&Path>, default_name: &str, bundled_dir: &str) -> PathBuf {
    let given = given.map_or_else(|| PathBuf::from(default_name), Path::to_path_buf);
    if given.exists() {
        return given;
    }
    let name = given.file_name().map(PathBuf::from).unwrap_or_default();
    let mut roots = Vec::new();
    if let Some(dir) = std::env::var_os("EDMKIT_DATA_DIR") {
        roots.push(PathBuf::from(dir));
    }
    let crate_dir = Path::new(env!("CARGO_MANIFEST_DIR"));
    roots.push(crate_dir.to_path_buf());
    roots.push(crate_dir.join(bundled_dir));
    roots
        .iter()
        .flat_map(|r| [r.join(&given), r.join(&name)])
        .find(|p| p.is_file())
        .unwrap_or(given)
}

struct Run {
    out: PathBuf,
    manifest: RunManifest,
}

impl Run {
    fn new(out: &Path, command: &str, params: impl Serialize) -> anyhow::Result<Self> {
        fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
        Ok(Self {
            out: out.to_path_buf(),
            manifest: RunManifest::new(command, params)?,
        })
    }

    fn load(&mut self, args: &DataArgs) -> anyhow::Result<Dataset> {
        let path = resolve(args.data.as_deref(), BUNDLED_DATA, "data");
        let data = load_csv(&path, "year")?;
        let label = args
            .data
            .as_ref()
            .map_or(BUNDLED_DATA.into(), |p| p.display().to_string());
        self.manifest.add_input(&label, &path)?;
        Ok(data)
    }

    fn write(&mut self, name: &str, bytes: impl AsRef<[u8]>) -> anyhow::Result<()> {
        let path = self.out.join(name);
        fs::write(&path, bytes).with_context(|| format!("cannot write {}", path.display()))?;
        self.manifest.outputs.push(name.to_string());
        Ok(())
    }

    fn finish(self, stem: &str) -> anyhow::Result<()> {
        let path = self.out.join(format!("{stem}.manifest.json"));
        fs::write(&path, self.manifest.to_json())
            .with_context(|| format!("cannot write {}", path.display()))?;
        Ok(())
    }
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> edmkit::error::Result<()>) -> anyhow::Result<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

fn json_bytes(v: &impl Serialize) -> anyhow::Result<Vec<u8>> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s.into_bytes())
}

fn embed_search(args: &EmbedSearchArgs, out: &Path) -> anyhow::Result<()> {
    let mut run = Run::new(out, "embed-search", args)?;
    let data = run.load(&args.data)?;
    let eval = args.eval.unwrap_or((args.train_end + 1, data.end_year()));
    let (lo, hi) = args.e;
    if lo < 1 {
        bail!(EdmError::InvalidConfig(format!(
            "embedding dimension must be at least 1, got {lo}"
        )));
    }
    let template = EmbeddingSpec::univariate(&args.target, 1).with_tau(args.tau);
    let search = embed_dimension_search(
        &data,
        &args.target,
        lo as usize..=hi as usize,
        &template,
        args.train_end,
        eval,
    )?;
    let table = csv_bytes(|buf| {
        let mut w = csv::Writer::from_writer(buf);
        let err = |e: csv::Error| EdmError::InvalidData(e.to_string());
        w.write_record(["e", "rho", "rmse"]).map_err(err)?;
        for r in &search.rows {
            let rho = r.rho.value().map(|v| v.to_string()).unwrap_or_default();
            let rmse = r.rmse.map(|v| v.to_string()).unwrap_or_default();
            w.write_record([r.e.to_string(), rho, rmse]).map_err(err)?;
        }
        w.flush().map_err(|e| EdmError::InvalidData(e.to_string()))
    })?;
    run.write("embed_search.csv", table)?;
    run.write("embed_search.json", json_bytes(&search)?)?;
    let best = search.best();
    println!(
        "best E = {} (rho {})",
        search.best_e,
        best.rho
            .value()
            .map_or("undefined".into(), |v| format!("{v:.4}"))
    );
    run.finish("embed_search")
}

/// Splits `e` lags across `columns`, earlier columns taking any remainder.
fn split_lags(columns: &[String], e: usize) -> anyhow::Result<Vec<(String, usize)>> {
    if e < columns.len() {
        bail!(EdmError::InvalidConfig(format!(
            "E = {e} cannot cover {} input series",
            columns.len()
        )));
    }
    let (q, r) = (e / columns.len(), e % columns.len());
    Ok(columns
        .iter()
        .enumerate()
        .map(|(i, c)| (c.clone(), q + usize::from(i < r)))
        .collect())
}

fn run_forecast<P: forecast::Predictor>(
    data: &Dataset,
    args: &ForecastArgs,
    predictor: &P,
) -> anyhow::Result<ForecastResult> {
    let last_in_sample = args.to.min(data.end_year());
    if args.to <= args.train_end {
        bail!(EdmError::InvalidConfig(format!(
            "forecast end {} is not after training end {}",
            args.to, args.train_end
        )));
    }
    let mut result = forecast::evaluate(
        data,
        &args.target,
        predictor,
        args.train_end + 1,
        last_in_sample,
    )?;
    if args.to > data.end_year() {
        let mode = if args.fixed_library {
            LibraryMode::Fixed
        } else {
            LibraryMode::SelfConditioned
        };
        let ex = forecast::extrapolate(data, &args.target, predictor, args.to, mode)?;
        result = result.concat(ex.forecast)?;
    }
    Ok(result)
}

fn forecast_cmd(args: &ForecastArgs, out: &Path) -> anyhow::Result<()> {
    let mut run = Run::new(out, "forecast", args)?;
    let data = run.load(&args.data)?;
    let columns = if args.columns.is_empty() {
        vec![args.target.clone()]
    } else {
        args.columns.clone()
    };
    let spec = EmbeddingSpec::multivariate(split_lags(&columns, args.e)?).with_tau(args.tau);
    let result = match args.method {
        Method::Simplex => run_forecast(&data, args, &SimplexConfig::new(spec))?,
        Method::Smap => run_forecast(&data, args, &SMapConfig::new(spec, args.theta))?,
    };
    run.write(
        "forecast.csv",
        csv_bytes(|b| result.write_csv_with_band(b, !args.no_band))?,
    )?;
    if result.coefficients.is_some() {
        run.write(
            "coefficients.csv",
            csv_bytes(|b| result.write_coefficients_csv(b))?,
        )?;
    }
    let rho = result
        .rho
        .value()
        .map_or("undefined".into(), |v| format!("{v:.4}"));
    match (
        result.last_year(),
        result.predicted.last().copied().flatten(),
    ) {
        (Some(y), Some(v)) => println!("{} {y}: {v:.0} (in-sample rho {rho})", args.target),
        _ => println!("in-sample rho {rho}"),
    }
    run.finish("forecast")
}

fn ccm_cmd(args: &CcmArgs, out: &Path) -> anyhow::Result<()> {
    let mut run = Run::new(out, "ccm", args)?;
    run.manifest.seed = Some(args.seed);
    let data = run.load(&args.data)?;
    let (a, b) = (data.get(&args.a)?, data.get(&args.b)?);
    let e = match args.e {
        Some(e) => e,
        None => {
            let mid = data.start_year() + data.len() as i32 / 2;
            let template = EmbeddingSpec::univariate(&args.b, 1).with_tau(args.tau);
            embed_dimension_search(
                &data,
                &args.b,
                1..=10,
                &template,
                mid,
                (mid + 1, data.end_year()),
            )?
            .best_e
        }
    };
    let available = data.len() - (e - 1) * args.tau;
    let sizes = if args.sizes.is_empty() {
        CcmConfig::even_sizes(e, available, args.n_sizes)
    } else {
        args.sizes.clone()
    };
    let mut cfg = CcmConfig::new(e, sizes, args.samples, args.seed);
    cfg.tau = args.tau;
    cfg.exclusion_radius = args.exclusion_radius;
    cfg.replacement = args.replacement;
    if args.contiguous {
        cfg.sampling = Sampling::Contiguous;
    }
    let result = convergence_sweep(a, b, &cfg)?;
    run.write("ccm_curves.csv", csv_bytes(|buf| result.write_csv(buf))?)?;

    #[derive(Serialize)]
    struct Summary<'a> {
        e: usize,
        library_sizes: &'a [usize],
        insufficient_grid: bool,
        directions: Vec<serde_json::Value>,
    }
    let directions = [&result.a_from_b, &result.b_from_a]
        .iter()
        .map(|d| {
            serde_json::json!({
                "direction": d.label(),
                "cause": d.cause,
                "effect": d.effect,
                "verdict": d.verdict,
                "final_rho": d.final_rho(),
                "curve": d.curve.iter().map(|p| serde_json::json!({
                    "library_size": p.library_size,
                    "mean_rho": p.mean_rho,
                    "spread": p.spread,
                })).collect::<Vec<_>>(),
            })
        })
        .collect();
    let summary = Summary {
        e,
        library_sizes: &cfg.library_sizes,
        insufficient_grid: result.insufficient_grid,
        directions,
    };
    run.write("ccm_summary.json", json_bytes(&summary)?)?;
    for d in [&result.a_from_b, &result.b_from_a] {
        let rho = d
            .final_rho()
            .value()
            .map_or("undefined".into(), |v| format!("{v:.4}"));
        println!("{}: {:?} (final rho {rho})", d.label(), d.verdict);
    }
    if result.insufficient_grid {
        println!("insufficient grid: fewer than two library sizes");
    }
    run.finish("ccm")
}

fn simulate_cmd(args: &SimulateArgs, out: &Path) -> anyhow::Result<()> {
    let mut run = Run::new(out, "simulate", args)?;
    let data = run.load(&args.data)?;
    let config_path = resolve(args.config.as_deref(), BUNDLED_SCENARIOS, "scenarios");
    let file = scenario::load_scenarios(&config_path)?;
    let label = args
        .config
        .as_ref()
        .map_or(BUNDLED_SCENARIOS.into(), |p| p.display().to_string());
    run.manifest.add_input(&label, &config_path)?;
    let reports = scenario::simulate_all(&data, &file.scenarios, &file.settings)?;
    run.write(
        "mitigation.csv",
        csv_bytes(|b| scenario::write_reports_csv(&reports, b))?,
    )?;
    run.write("mitigation.json", json_bytes(&reports)?)?;
    run.write("trajectories.csv", trajectories_csv(&reports)?)?;
    for r in &reports {
        println!(
            "{:<28} {:>14.0} {:>8.2}% +/- {:.0}",
            r.scenario.name, r.debris, r.pct_mitigated, r.margin_of_error
        );
    }
    run.finish("simulate")
}

fn trajectories_csv(reports: &[MitigationReport]) -> anyhow::Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["policy", "year", "debris", "band_lo", "band_hi"])?;
    for r in reports {
        let t = &r.trajectory;
        for ((year, p), h) in t.times.iter().zip(&t.predicted).zip(&t.band_halfwidth) {
            let cell = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
            w.write_record([
                r.scenario.name.clone(),
                year.to_string(),
                cell(*p),
                cell(p.map(|p| p - h)),
                cell(p.map(|p| p + h)),
            ])?;
        }
    }
    Ok(w.into_inner()?)
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<EdmError>() {
        Some(e) if !e.is_input_error() => 1,
        Some(_) => 2,
        None if err.downcast_ref::<std::io::Error>().is_some() => 2,
        None => 1,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
        {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match &cli.command {
        Command::EmbedSearch(a) => embed_search(a, &cli.out),
        Command::Forecast(a) => forecast_cmd(a, &cli.out),
        Command::Ccm(a) => ccm_cmd(a, &cli.out),
        Command::Simulate(a) => simulate_cmd(a, &cli.out),
        Command::Version => {
            println!("edmkit {}", env!("CARGO_PKG_VERSION"));
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

//! Policy counterfactuals: rewrite the observed debris history as if a
//! mitigation policy had been in force, re-forecast it with S-map, and compare
//! the horizon value against an unmodified baseline.
//!
//! Series are expected under the bundled column names: `debris` (X),
//! `launched` (Y) and `total` (Z).

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedding::EmbeddingSpec;
use crate::error::{EdmError, Result};
use crate::forecast::{self, ForecastResult, LibraryMode};
use crate::smap::SMapConfig;
use crate::timeseries::Dataset;

pub const DEBRIS: &str = "debris";
pub const LAUNCHED: &str = "launched";
pub const TOTAL: &str = "total";

/// Disposal period already reflected in the historical record.
pub const CURRENT_PMD_YEARS: u32 = 25;

/// How unlaunched objects propagate into the debris series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LaunchEffect {
    /// Debris drops by the shortfall times the yearly debris-per-launched-object ratio.
    #[default]
    DebrisRatio,
    /// Only the total-bodies series changes.
    TotalOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolicyKind {
    /// Post-mission disposal within `pmd_years` after an operational lifetime.
    Pmd { pmd_years: u32, compliance: f64 },
    /// Launch a fraction fewer objects each year.
    LaunchReduction {
        reduction_fraction: f64,
        effect: LaunchEffect,
    },
    /// Remove a fixed number of debris objects each year.
    Adr { adr_per_year: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolicyScenario {
    pub name: String,
    #[serde(flatten)]
    pub kind: PolicyKind,
    pub effective_year: i32,
    pub operational_lifetime: u32,
}

impl PolicyScenario {
    fn with_kind(name: impl Into<String>, kind: PolicyKind) -> Self {
        Self {
            name: name.into(),
            kind,
            effective_year: 2000,
            operational_lifetime: 10,
        }
    }

    pub fn pmd(pmd_years: u32) -> Self {
        Self::with_kind(
            format!("{pmd_years} Year PMD"),
            PolicyKind::Pmd {
                pmd_years,
                compliance: 1.0,
            },
        )
    }

    pub fn launch_reduction(fraction: f64) -> Self {
        Self::with_kind(
            format!("{}% Less Objects Launched", (fraction * 100.0).round()),
            PolicyKind::LaunchReduction {
                reduction_fraction: fraction,
                effect: LaunchEffect::default(),
            },
        )
    }

    pub fn adr(per_year: u32) -> Self {
        Self::with_kind(
            format!("{per_year} ADR Policy"),
            PolicyKind::Adr {
                adr_per_year: per_year,
            },
        )
    }

    pub fn with_effective_year(mut self, year: i32) -> Self {
        self.effective_year = year;
        self
    }

    pub fn with_compliance(mut self, c: f64) -> Self {
        if let PolicyKind::Pmd { compliance, .. } = &mut self.kind {
            *compliance = c;
        }
        self
    }

    /// Last year touched by the policy, given the last observed year.
    pub fn adjust_window_end(&self, observed_end: i32) -> i32 {
        match self.kind {
            PolicyKind::Pmd { pmd_years, .. } => {
                observed_end + self.operational_lifetime as i32 + pmd_years as i32
            }
            _ => observed_end,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| {
            Err(EdmError::InvalidConfig(format!(
                "scenario `{}`: {m}",
                self.name
            )))
        };
        match self.kind {
            PolicyKind::Pmd { compliance, .. } if !(0.0..=1.0).contains(&compliance) => {
                fail(format!("compliance {compliance} outside [0, 1]"))
            }
            PolicyKind::LaunchReduction {
                reduction_fraction: f,
                ..
            } if !(0.0..=1.0).contains(&f) => {
                fail(format!("reduction fraction {f} outside [0, 1]"))
            }
            _ => Ok(()),
        }
    }
}

fn require(data: &Dataset, names: &[&str]) -> Result<()> {
    for n in names {
        data.get(n)?;
    }
    Ok(())
}

/// Objects deorbited by year `t` under a PMD rule: launches from cohorts
/// `y >= effective_year` (observed only) with `y + lifetime + pmd_years <= t`.
pub fn cumulative_deorbited(data: &Dataset, scenario: &PolicyScenario, t: i32) -> Result<f64> {
    let PolicyKind::Pmd {
        pmd_years,
        compliance,
    } = scenario.kind
    else {
        return Err(EdmError::InvalidConfig(format!(
            "scenario `{}` is not PMD",
            scenario.name
        )));
    };
    if pmd_years >= CURRENT_PMD_YEARS {
        return Ok(0.0);
    }
    let launched = data.get(LAUNCHED)?;
    let last_cohort =
        (t - scenario.operational_lifetime as i32 - pmd_years as i32).min(data.end_year());
    let total: f64 = (scenario.effective_year.max(data.start_year())..=last_cohort)
        .filter_map(|y| launched.at(y))
        .sum();
    Ok(compliance * total)
}

fn subtract(data: &mut Dataset, name: &str, amount: impl Fn(i32) -> f64) -> Result<()> {
    let s = data.get_mut(name)?;
    let start = s.start_year;
    for (i, v) in s.values.iter_mut().enumerate() {
        let a = amount(start + i as i32);
        if a != 0.0 {
            *v = (*v - a).max(0.0);
        }
    }
    Ok(())
}

/// Observed-window PMD adjustment: the cumulative deorbited count comes off
/// debris and total bodies for every year from `effective_year`.
pub fn pmd_adjust(data: &Dataset, scenario: &PolicyScenario) -> Result<Dataset> {
    require(data, &[DEBRIS, LAUNCHED, TOTAL])?;
    scenario.validate()?;
    let from = scenario.effective_year;
    let cum: Vec<(i32, f64)> = data
        .years()
        .filter(|&t| t >= from)
        .map(|t| Ok((t, cumulative_deorbited(data, scenario, t)?)))
        .collect::<Result<_>>()?;
    let amount = |t: i32| cum.iter().find(|(y, _)| *y == t).map_or(0.0, |c| c.1);
    let mut out = data.clone();
    subtract(&mut out, DEBRIS, amount)?;
    subtract(&mut out, TOTAL, amount)?;
    Ok(out)
}

/// Scales launches by `1 - fraction` from `effective_year` on and removes the
/// cumulative shortfall from total bodies (and, per [`LaunchEffect`], debris).
pub fn launch_reduction_adjust(data: &Dataset, scenario: &PolicyScenario) -> Result<Dataset> {
    require(data, &[DEBRIS, LAUNCHED, TOTAL])?;
    scenario.validate()?;
    let PolicyKind::LaunchReduction {
        reduction_fraction: f,
        effect,
    } = scenario.kind
    else {
        return Err(EdmError::InvalidConfig(format!(
            "scenario `{}` is not a launch reduction",
            scenario.name
        )));
    };
    let mut out = data.clone();
    if f == 0.0 {
        return Ok(out);
    }
    let launched = data.get(LAUNCHED)?;
    let debris = data.get(DEBRIS)?;
    let mut shortfall = Vec::with_capacity(data.len());
    let mut ratio = Vec::with_capacity(data.len());
    let (mut short, mut ever) = (0.0, 0.0);
    for (t, y) in launched.years().zip(&launched.values) {
        ever += y;
        if t >= scenario.effective_year {
            short += f * y;
        }
        shortfall.push(short);
        ratio.push(if ever > 0.0 {
            debris.at(t).unwrap_or(0.0) / ever
        } else {
            0.0
        });
    }
    let start = data.start_year();
    let idx = |t: i32| (t - start) as usize;
    subtract(&mut out, TOTAL, |t| shortfall[idx(t)])?;
    if effect == LaunchEffect::DebrisRatio {
        subtract(&mut out, DEBRIS, |t| shortfall[idx(t)] * ratio[idx(t)])?;
    }
    let y = out.get_mut(LAUNCHED)?;
    let skip = (scenario.effective_year - start).max(0) as usize;
    for v in y.values.iter_mut().skip(skip) {
        *v *= 1.0 - f;
    }
    Ok(out)
}

/// Cumulative removal `adr_per_year * (t - effective_year + 1)` off debris and
/// total bodies, floored at zero.
pub fn adr_adjust(data: &Dataset, scenario: &PolicyScenario) -> Result<Dataset> {
    require(data, &[DEBRIS, TOTAL])?;
    let PolicyKind::Adr { adr_per_year } = scenario.kind else {
        return Err(EdmError::InvalidConfig(format!(
            "scenario `{}` is not ADR",
            scenario.name
        )));
    };
    let from = scenario.effective_year;
    let removed = |t: i32| {
        if t >= from {
            adr_per_year as f64 * (t - from + 1) as f64
        } else {
            0.0
        }
    };
    let mut out = data.clone();
    subtract(&mut out, DEBRIS, removed)?;
    subtract(&mut out, TOTAL, removed)?;
    Ok(out)
}

/// Applies the scenario's adjustment to the observed record.
pub fn adjust(data: &Dataset, scenario: &PolicyScenario) -> Result<Dataset> {
    match scenario.kind {
        PolicyKind::Pmd { .. } => pmd_adjust(data, scenario),
        PolicyKind::LaunchReduction { .. } => launch_reduction_adjust(data, scenario),
        PolicyKind::Adr { .. } => adr_adjust(data, scenario),
    }
}

/// Forecast models and horizon shared by a batch of scenarios.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationSettings {
    pub horizon: i32,
    /// Debris + total model for PMD, ADR and their baseline.
    pub model: SMapConfig,
    /// Debris + launched + total model for launch reductions and their baseline.
    pub launch_model: SMapConfig,
}

impl Default for SimulationSettings {
    fn default() -> Self {
        Self {
            horizon: 2050,
            model: SMapConfig::new(EmbeddingSpec::multivariate([(DEBRIS, 2), (TOTAL, 2)]), 7.0),
            launch_model: SMapConfig::new(
                EmbeddingSpec::multivariate([(DEBRIS, 2), (LAUNCHED, 1), (TOTAL, 1)]),
                7.0,
            ),
        }
    }
}

impl SimulationSettings {
    fn model_for(&self, scenario: &PolicyScenario) -> &SMapConfig {
        match scenario.kind {
            PolicyKind::LaunchReduction { .. } => &self.launch_model,
            _ => &self.model,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MitigationReport {
    pub scenario: PolicyScenario,
    pub horizon: i32,
    pub debris: f64,
    pub baseline: f64,
    pub pct_mitigated: f64,
    /// 95% band half-width at the horizon.
    pub margin_of_error: f64,
    #[serde(skip)]
    pub trajectory: ForecastResult,
}

/// Unadjusted debris forecasts for both models.
#[derive(Debug, Clone, PartialEq)]
pub struct Baselines {
    pub two_input: ForecastResult,
    pub three_input: ForecastResult,
}

impl Baselines {
    pub fn compute(data: &Dataset, settings: &SimulationSettings) -> Result<Self> {
        let (two_input, three_input) = rayon::join(
            || run_model(data, &settings.model, settings.horizon, None),
            || run_model(data, &settings.launch_model, settings.horizon, None),
        );
        Ok(Self {
            two_input: two_input?,
            three_input: three_input?,
        })
    }

    fn for_kind(&self, kind: &PolicyKind) -> &ForecastResult {
        match kind {
            PolicyKind::LaunchReduction { .. } => &self.three_input,
            _ => &self.two_input,
        }
    }
}

fn run_model(
    data: &Dataset,
    cfg: &SMapConfig,
    horizon: i32,
    pmd: Option<&PolicyScenario>,
) -> Result<ForecastResult> {
    cfg.validate()?;
    let observed_end = data.end_year();
    let window_end = match pmd {
        Some(s) => s.adjust_window_end(observed_end).min(horizon),
        None => observed_end,
    };
    if window_end <= observed_end {
        return Ok(forecast::extrapolate(
            data,
            DEBRIS,
            cfg,
            horizon,
            LibraryMode::SelfConditioned,
        )?
        .forecast);
    }
    let s = pmd.expect("window extends only for PMD");
    let removals: Vec<f64> = (observed_end + 1..=window_end)
        .map(|t| Ok(cumulative_deorbited(data, s, t)? - cumulative_deorbited(data, s, t - 1)?))
        .collect::<Result<_>>()?;
    let adjusted = forecast::extrapolate_adjusted(
        data,
        DEBRIS,
        cfg,
        window_end,
        LibraryMode::SelfConditioned,
        |year, step| {
            let r = removals[(year - observed_end - 1) as usize];
            for (name, v) in step.iter_mut() {
                if r != 0.0 && (*name == DEBRIS || *name == TOTAL) {
                    *v = (*v - r).max(0.0);
                }
            }
        },
    )?;
    if window_end == horizon {
        return Ok(adjusted.forecast);
    }
    // the final run starts its band afresh from the policy-shaped record
    let tail = forecast::extrapolate(
        &adjusted.extended,
        DEBRIS,
        cfg,
        horizon,
        LibraryMode::SelfConditioned,
    )?;
    adjusted.forecast.concat(tail.forecast)
}

fn horizon_value(f: &ForecastResult, horizon: i32) -> Result<(f64, f64)> {
    match (f.at(horizon), f.band_at(horizon)) {
        (Some(v), Some(b)) => Ok((v, b)),
        _ => Err(EdmError::InvalidData(format!(
            "forecast has no value at {horizon}"
        ))),
    }
}

/// Adjusts the record, re-forecasts to the horizon and compares against the
/// matching baseline.
///
/// PMD runs keep deorbiting cohorts inside the forecast: each predicted year
/// within the policy window loses that year's newly deorbited objects before
/// it joins the library. A final run then covers the years after the window,
/// so the reported margin only spans that stretch.
pub fn simulate_with(
    data: &Dataset,
    scenario: &PolicyScenario,
    settings: &SimulationSettings,
    baselines: &Baselines,
) -> Result<MitigationReport> {
    scenario.validate()?;
    let adjusted = adjust(data, scenario)?;
    let baseline = baselines.for_kind(&scenario.kind);
    let trajectory = if adjusted == *data && !matches!(scenario.kind, PolicyKind::Pmd { .. }) {
        baseline.clone()
    } else {
        let pmd = matches!(scenario.kind, PolicyKind::Pmd { .. }).then_some(scenario);
        run_model(
            &adjusted,
            settings.model_for(scenario),
            settings.horizon,
            pmd,
        )?
    };
    let (debris, margin_of_error) = horizon_value(&trajectory, settings.horizon)?;
    let (base, _) = horizon_value(baseline, settings.horizon)?;
    let pct_mitigated = if base != 0.0 {
        (base - debris) / base * 100.0
    } else {
        0.0
    };
    Ok(MitigationReport {
        scenario: scenario.clone(),
        horizon: settings.horizon,
        debris,
        baseline: base,
        pct_mitigated,
        margin_of_error,
        trajectory,
    })
}

pub fn simulate(
    data: &Dataset,
    scenario: &PolicyScenario,
    settings: &SimulationSettings,
) -> Result<MitigationReport> {
    simulate_with(
        data,
        scenario,
        settings,
        &Baselines::compute(data, settings)?,
    )
}

/// Runs scenarios in parallel against shared baselines; order is preserved.
pub fn simulate_all(
    data: &Dataset,
    scenarios: &[PolicyScenario],
    settings: &SimulationSettings,
) -> Result<Vec<MitigationReport>> {
    let baselines = Baselines::compute(data, settings)?;
    scenarios
        .par_iter()
        .map(|s| simulate_with(data, s, settings, &baselines))
        .collect()
}

/// The mitigation grid: PMD 0/5/10/15/25 years, 10-40% fewer launches, ADR 100-3000.
pub fn table2_scenarios() -> Vec<PolicyScenario> {
    let mut v: Vec<_> = [25, 15, 10, 5, 0]
        .into_iter()
        .map(PolicyScenario::pmd)
        .collect();
    v.extend(
        [0.0, 0.1, 0.2, 0.3, 0.4]
            .into_iter()
            .map(PolicyScenario::launch_reduction),
    );
    v.extend([100, 300, 1000, 3000].into_iter().map(PolicyScenario::adr));
    v
}

/// `policy,debris,baseline,pct_mitigated,margin_of_error` rows.
pub fn write_reports_csv<W: Write>(reports: &[MitigationReport], out: W) -> Result<()> {
    let fail = |e: csv::Error| EdmError::Csv {
        path: "<output>".into(),
        message: e.to_string(),
    };
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "policy",
        "debris",
        "baseline",
        "pct_mitigated",
        "margin_of_error",
    ])
    .map_err(fail)?;
    for r in reports {
        w.write_record([
            r.scenario.name.clone(),
            format!("{:.0}", r.debris),
            format!("{:.0}", r.baseline),
            format!("{:.2}", r.pct_mitigated),
            format!("{:.0}", r.margin_of_error),
        ])
        .map_err(fail)?;
    }
    w.flush().map_err(|e| EdmError::Csv {
        path: "<output>".into(),
        message: e.to_string(),
    })
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    theta: f64,
    columns: Vec<(String, usize)>,
    #[serde(default)]
    ridge: f64,
}

impl RawModel {
    fn into_config(self) -> SMapConfig {
        SMapConfig::new(EmbeddingSpec::multivariate(self.columns), self.theta)
            .with_ridge(self.ridge)
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
enum RawKind {
    Pmd,
    LaunchReduction,
    Adr,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    name: Option<String>,
    kind: RawKind,
    effective_year: Option<i32>,
    operational_lifetime: Option<u32>,
    pmd_years: Option<u32>,
    compliance: Option<f64>,
    reduction_fraction: Option<f64>,
    launch_effect: Option<LaunchEffect>,
    adr_per_year: Option<u32>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    horizon: Option<i32>,
    model: Option<RawModel>,
    launch_model: Option<RawModel>,
    #[serde(default)]
    scenario: Vec<toml::Spanned<RawScenario>>,
}

impl RawScenario {
    fn into_scenario(self) -> std::result::Result<PolicyScenario, String> {
        let stray = |fields: &[(&str, bool)]| -> std::result::Result<(), String> {
            match fields.iter().find(|f| f.1) {
                Some((name, _)) => Err(format!("`{name}` does not apply to this kind")),
                None => Ok(()),
            }
        };
        let mut s = match self.kind {
            RawKind::Pmd => {
                stray(&[
                    ("reduction_fraction", self.reduction_fraction.is_some()),
                    ("launch_effect", self.launch_effect.is_some()),
                    ("adr_per_year", self.adr_per_year.is_some()),
                ])?;
                let years = self.pmd_years.ok_or("pmd scenario needs `pmd_years`")?;
                PolicyScenario::pmd(years).with_compliance(self.compliance.unwrap_or(1.0))
            }
            RawKind::LaunchReduction => {
                stray(&[
                    ("pmd_years", self.pmd_years.is_some()),
                    ("compliance", self.compliance.is_some()),
                    ("adr_per_year", self.adr_per_year.is_some()),
                ])?;
                let f = self
                    .reduction_fraction
                    .ok_or("launch_reduction scenario needs `reduction_fraction`")?;
                let mut s = PolicyScenario::launch_reduction(f);
                s.kind = PolicyKind::LaunchReduction {
                    reduction_fraction: f,
                    effect: self.launch_effect.unwrap_or_default(),
                };
                s
            }
            RawKind::Adr => {
                stray(&[
                    ("pmd_years", self.pmd_years.is_some()),
                    ("compliance", self.compliance.is_some()),
                    ("reduction_fraction", self.reduction_fraction.is_some()),
                    ("launch_effect", self.launch_effect.is_some()),
                ])?;
                PolicyScenario::adr(
                    self.adr_per_year
                        .ok_or("adr scenario needs `adr_per_year`")?,
                )
            }
        };
        if let Some(name) = self.name {
            s.name = name;
        }
        if let Some(y) = self.effective_year {
            s.effective_year = y;
        }
        if let Some(l) = self.operational_lifetime {
            s.operational_lifetime = l;
        }
        s.validate().map_err(|e| e.to_string())?;
        Ok(s)
    }
}

/// Scenario batch parsed from a TOML file.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioFile {
    pub settings: SimulationSettings,
    pub scenarios: Vec<PolicyScenario>,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Parses a scenario file. Errors carry `origin:line`.
pub fn parse_scenarios(text: &str, origin: &str) -> Result<ScenarioFile> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| {
        let line = e.span().map_or(0, |s| line_of(text, s.start));
        EdmError::InvalidConfig(format!("{origin}:{line}: {}", e.message()))
    })?;
    let mut settings = SimulationSettings::default();
    if let Some(h) = raw.horizon {
        settings.horizon = h;
    }
    if let Some(m) = raw.model {
        settings.model = m.into_config();
    }
    if let Some(m) = raw.launch_model {
        settings.launch_model = m.into_config();
    }
    if raw.scenario.is_empty() {
        return Err(EdmError::InvalidConfig(format!(
            "{origin}: no [[scenario]] entries"
        )));
    }
    let scenarios = raw
        .scenario
        .into_iter()
        .map(|spanned| {
            let line = line_of(text, spanned.span().start);
            spanned
                .into_inner()
                .into_scenario()
                .map_err(|m| EdmError::InvalidConfig(format!("{origin}:{line}: {m}")))
        })
        .collect::<Result<_>>()?;
    Ok(ScenarioFile {
        settings,
        scenarios,
    })
}

pub fn load_scenarios(path: impl AsRef<Path>) -> Result<ScenarioFile> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| EdmError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_scenarios(&text, &path.display().to_string())
}

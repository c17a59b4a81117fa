//! Calibration, single runs, experiment matrices and trace reports.
//!
//! Each command is a plain function so it can be scripted or tested; the
//! [`cli`] module maps the `dda` command line onto them.

pub mod cli;
mod report;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use report::{report, ReportTable};

use crate::engine::{ModelKind, ModelSelection};
use crate::reference::{calibrate, ReferenceSet};
use crate::rng;
use crate::simulator::{
    flow_occupancy, run_episode, BotProfile, EpisodeSummary, EpisodeTrace, Scenario, SimError,
};
use crate::telemetry::Tick;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Runtime(String),
    #[error("{failed} of {total} experiment cells failed")]
    Partial { failed: usize, total: usize },
}

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Usage(_) => 1,
            HarnessError::Runtime(_) => 2,
            HarnessError::Partial { .. } => 3,
        }
    }
}

impl From<SimError> for HarnessError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Config(_) => HarnessError::Usage(e.to_string()),
            other => HarnessError::Runtime(other.to_string()),
        }
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> HarnessError {
    HarnessError::Runtime(format!("{}: {e}", path.display()))
}

#[derive(Debug, Clone)]
pub struct CalibrateArgs {
    pub config: String,
    pub bot: String,
    pub runs: u32,
    pub seed: u64,
    /// Window length; the scenario's evaluation interval when absent.
    pub window: Option<Tick>,
    pub out: PathBuf,
}

/// Calibrates reference curves and writes them to `args.out`.
pub fn cmd_calibrate(args: &CalibrateArgs) -> Result<ReferenceSet, HarnessError> {
    if args.runs == 0 {
        return Err(HarnessError::Usage("--runs must be at least 1".into()));
    }
    let scenario = Scenario::load(&args.config)?;
    let bot = BotProfile::load(&args.bot)?;
    let window = args.window.unwrap_or(scenario.dda.evaluation_interval);
    let set = calibrate(&scenario, &bot, args.runs, window, args.seed)
        .map_err(|e| HarnessError::Runtime(e.to_string()))?;
    set.save(&args.out).map_err(|e| io_err(&args.out, e))?;
    Ok(set)
}

#[derive(Debug, Clone)]
pub struct RunArgs {
    pub config: String,
    pub bot: String,
    pub model: ModelSelection,
    pub seed: u64,
    pub reference: Option<PathBuf>,
    pub trace: Option<PathBuf>,
}

fn load_reference(
    path: Option<&Path>,
    model: ModelKind,
) -> Result<Option<ReferenceSet>, HarnessError> {
    match path {
        Some(p) => ReferenceSet::load(p).map(Some).map_err(|e| io_err(p, e)),
        None if model != ModelKind::Off => Err(HarnessError::Usage(format!(
            "model `{}` needs a reference file; run `dda calibrate` first and pass --reference",
            model.name()
        ))),
        None => Ok(None),
    }
}

/// One-line summary printed after a run.
pub fn summary_line(s: &EpisodeSummary) -> String {
    let occ = s
        .flow_occupancy
        .map(|o| format!("{o:.3}"))
        .unwrap_or_else(|| "n/a".into());
    format!(
        "flow_occupancy={occ} deaths={} waves={}/{} duration={} ticks applied_changes={}",
        s.deaths, s.waves_won, s.waves_played, s.ticks, s.applied_changes
    )
}

/// Plays one episode and writes its trace when `args.trace` is set.
pub fn cmd_run(args: &RunArgs) -> Result<EpisodeTrace, HarnessError> {
    let scenario = Scenario::load(&args.config)?;
    let bot = BotProfile::load(&args.bot)?;
    let reference = load_reference(args.reference.as_deref(), args.model.kind)?;
    let trace = run_episode(&scenario, &bot, args.model, reference.as_ref(), args.seed)?;
    if let Some(path) = &args.trace {
        trace.write(path)?;
    }
    Ok(trace)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SeedSpec {
    List(Vec<u64>),
    Derived { base_seed: u64, n: u32 },
}

impl SeedSpec {
    pub fn seeds(&self) -> Vec<u64> {
        match self {
            SeedSpec::List(v) => v.clone(),
            SeedSpec::Derived { base_seed, n } => {
                (0..*n as u64).map(|i| rng::derive(*base_seed, i)).collect()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub config: String,
    pub models: Vec<ModelSelection>,
    pub bots: Vec<String>,
    pub seeds: SeedSpec,
    #[serde(default)]
    pub reference: Option<PathBuf>,
    pub out: PathBuf,
    /// Leading assessment windows left out of occupancy.
    #[serde(default)]
    pub warmup_windows: usize,
}

impl ExperimentSpec {
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        toml::from_str(&text).map_err(|e| HarnessError::Usage(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let seeds = self.seeds.seeds();
        if self.models.is_empty() || self.bots.is_empty() || seeds.is_empty() {
            return Err(HarnessError::Usage(
                "experiment needs at least one model, bot and seed".into(),
            ));
        }
        let mut sorted = seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != seeds.len() {
            return Err(HarnessError::Usage(
                "experiment seeds must be distinct".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct MeanSd {
    pub mean: f64,
    pub sd: f64,
}

impl MeanSd {
    pub fn of(xs: &[f64]) -> Self {
        if xs.is_empty() {
            return MeanSd {
                mean: f64::NAN,
                sd: f64::NAN,
            };
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let sd = if xs.len() > 1 {
            (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        MeanSd { mean, sd }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentRow {
    pub model: String,
    pub bot: String,
    pub episodes: usize,
    pub failed: usize,
    pub occupancy: MeanSd,
    pub win_rate: MeanSd,
    pub cumulative_rank: MeanSd,
}

pub const EXPERIMENT_HEADER: &str = "model,bot,episodes,failed,occupancy_mean,occupancy_sd,win_rate_mean,win_rate_sd,cumulative_rank_mean,cumulative_rank_sd";

pub fn model_label(m: &ModelSelection) -> String {
    let mut s = m.kind.name().to_string();
    if let Some(f) = m.fitness {
        s.push_str(match f {
            crate::models::dscript::FitnessMode::Maximize => "/maximize",
            crate::models::dscript::FitnessMode::DifferenceMin => "/difference",
        });
    }
    if let Some(r) = m.regime {
        s.push_str(match r {
            crate::engine::RegimeKind::Clipping => "/clipping",
            crate::engine::RegimeKind::TopCulling => "/topculling",
            crate::engine::RegimeKind::Unbounded => "/unbounded",
        });
    }
    s
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentTable {
    pub rows: Vec<ExperimentRow>,
}

impl ExperimentTable {
    pub fn to_csv(&self) -> String {
        let mut out = format!("{EXPERIMENT_HEADER}\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
                r.model,
                r.bot,
                r.episodes,
                r.failed,
                r.occupancy.mean,
                r.occupancy.sd,
                r.win_rate.mean,
                r.win_rate.sd,
                r.cumulative_rank.mean,
                r.cumulative_rank.sd
            );
        }
        out
    }

    pub fn failed_cells(&self) -> usize {
        self.rows.iter().filter(|r| r.failed > 0).count()
    }
}

/// Runs the full model x bot x seed product. Failed episodes are counted
/// per cell rather than aborting the experiment.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentTable, HarnessError> {
    spec.validate()?;
    let scenario = Scenario::load(&spec.config)?;
    let bots = spec
        .bots
        .iter()
        .map(|b| BotProfile::load(b))
        .collect::<Result<Vec<_>, _>>()?;
    let needs_ref = spec.models.iter().any(|m| m.kind != ModelKind::Off);
    let reference = match &spec.reference {
        Some(p) => Some(ReferenceSet::load(p).map_err(|e| io_err(p, e))?),
        None if needs_ref => {
            return Err(HarnessError::Usage(
                "experiment enables a model but has no reference; run `dda calibrate` first".into(),
            ))
        }
        None => None,
    };
    let seeds = spec.seeds.seeds();
    let mut jobs: Vec<(usize, usize, u64)> = Vec::new();
    for m in 0..spec.models.len() {
        for b in 0..bots.len() {
            jobs.extend(seeds.iter().map(|&s| (m, b, s)));
        }
    }
    let band = scenario.dda.assessment.difficulty_band;
    let results: Vec<((usize, usize), Result<EpisodeSummary, String>)> = jobs
        .par_iter()
        .map(|&(m, b, seed)| {
            let r = run_episode(
                &scenario,
                &bots[b],
                spec.models[m],
                reference.as_ref(),
                seed,
            )
            .map_err(|e| e.to_string())
            .and_then(|t| {
                let mut s = t.summary().cloned().ok_or("trace has no outcome")?;
                s.flow_occupancy = flow_occupancy(t.assessments(), &band, spec.warmup_windows);
                Ok(s)
            });
            ((m, b), r)
        })
        .collect();

    let mut cells: BTreeMap<(usize, usize), Vec<Result<EpisodeSummary, String>>> = BTreeMap::new();
    for (k, r) in results {
        cells.entry(k).or_default().push(r);
    }
    let mut rows = Vec::new();
    for ((m, b), rs) in cells {
        let ok: Vec<&EpisodeSummary> = rs.iter().filter_map(|r| r.as_ref().ok()).collect();
        let occ: Vec<f64> = ok.iter().filter_map(|s| s.flow_occupancy).collect();
        let win: Vec<f64> = ok.iter().map(|s| s.win_rate()).collect();
        let rank: Vec<f64> = ok.iter().filter_map(|s| s.cumulative_rank).collect();
        rows.push(ExperimentRow {
            model: model_label(&spec.models[m]),
            bot: bots[b].name.clone(),
            episodes: rs.len(),
            failed: rs.len() - ok.len(),
            occupancy: MeanSd::of(&occ),
            win_rate: MeanSd::of(&win),
            cumulative_rank: MeanSd::of(&rank),
        });
    }
    Ok(ExperimentTable { rows })
}

/// Runs the experiment and writes `summary.csv` under `spec.out`.
pub fn cmd_experiment(spec: &ExperimentSpec) -> Result<ExperimentTable, HarnessError> {
    let table = run_experiment(spec)?;
    std::fs::create_dir_all(&spec.out).map_err(|e| io_err(&spec.out, e))?;
    let path = spec.out.join("summary.csv");
    std::fs::write(&path, table.to_csv()).map_err(|e| io_err(&path, e))?;
    let failed = table.failed_cells();
    if failed > 0 {
        return Err(HarnessError::Partial {
            failed,
            total: table.rows.len(),
        });
    }
    Ok(table)
}

/// Reads a trace and writes its derived time series as CSV.
pub fn cmd_report(trace: &Path, out: Option<&Path>) -> Result<ReportTable, HarnessError> {
    let t = EpisodeTrace::read(trace)?;
    let table = report(&t);
    if let Some(out) = out {
        std::fs::write(out, table.to_csv()).map_err(|e| io_err(out, e))?;
    }
    Ok(table)
}

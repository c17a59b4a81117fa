//! The `dda` command line.

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

use super::{
    cmd_calibrate, cmd_experiment, cmd_report, cmd_run, summary_line, CalibrateArgs,
    ExperimentSpec, HarnessError, RunArgs, SeedSpec,
};
use crate::engine::{ModelKind, ModelSelection, RegimeKind};
use crate::models::dscript::FitnessMode;

#[derive(Debug, Parser)]
#[command(name = "dda", version, about = "Dynamic difficulty adjustment harness")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModelArg {
    Off,
    Metrics,
    Probabilistic,
    Dscript,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FitnessArg {
    Maximize,
    Difference,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum RegimeArg {
    Clipping,
    Topculling,
    Unbounded,
}

#[derive(Debug, clap::Args)]
pub struct ModelFlags {
    #[arg(long, value_enum, default_value = "off")]
    pub model: ModelArg,
    #[arg(long, value_enum)]
    pub fitness: Option<FitnessArg>,
    #[arg(long, value_enum)]
    pub regime: Option<RegimeArg>,
}

impl ModelFlags {
    pub fn selection(&self) -> ModelSelection {
        to_selection(self.model, self.fitness, self.regime)
    }
}

fn to_selection(
    model: ModelArg,
    fitness: Option<FitnessArg>,
    regime: Option<RegimeArg>,
) -> ModelSelection {
    let kind = match model {
        ModelArg::Off => ModelKind::Off,
        ModelArg::Metrics => ModelKind::Metrics,
        ModelArg::Probabilistic => ModelKind::Probabilistic,
        ModelArg::Dscript => ModelKind::DynamicScripting,
    };
    ModelSelection {
        kind,
        fitness: fitness.map(|f| match f {
            FitnessArg::Maximize => FitnessMode::Maximize,
            FitnessArg::Difference => FitnessMode::DifferenceMin,
        }),
        regime: regime.map(|r| match r {
            RegimeArg::Clipping => RegimeKind::Clipping,
            RegimeArg::Topculling => RegimeKind::TopCulling,
            RegimeArg::Unbounded => RegimeKind::Unbounded,
        }),
        adrenaline: None,
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Record reference curves from bot playthroughs.
    Calibrate {
        #[arg(long, default_value = "arena")]
        config: String,
        #[arg(long, default_value = "medium")]
        bot: String,
        #[arg(long, default_value_t = 200)]
        runs: u32,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Window length in ticks; defaults to the scenario's evaluation interval.
        #[arg(long)]
        window: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Play one episode and write its trace.
    Run {
        #[arg(long, default_value = "arena")]
        config: String,
        #[arg(long, default_value = "medium")]
        bot: String,
        #[command(flatten)]
        model: ModelFlags,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        reference: Option<PathBuf>,
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Run a model x bot x seed matrix and write summary.csv.
    Experiment {
        /// TOML experiment spec; other flags are ignored when given.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long, default_value = "arena")]
        config: String,
        #[arg(long, value_enum, value_delimiter = ',', default_value = "off")]
        models: Vec<ModelArg>,
        #[arg(long, value_enum)]
        fitness: Option<FitnessArg>,
        #[arg(long, value_enum)]
        regime: Option<RegimeArg>,
        #[arg(long, value_delimiter = ',', default_value = "medium")]
        bots: Vec<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Number of seeds derived from --seed.
        #[arg(long, default_value_t = 5)]
        runs: u32,
        #[arg(long)]
        reference: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        warmup: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Turn a trace into per-window CSV series.
    Report {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

pub fn execute(cli: Cli) -> Result<String, HarnessError> {
    match cli.command {
        Command::Calibrate {
            config,
            bot,
            runs,
            seed,
            window,
            out,
        } => {
            let set = cmd_calibrate(&CalibrateArgs {
                config,
                bot,
                runs,
                seed,
                window,
                out: out.clone(),
            })?;
            Ok(format!("wrote {} curves to {}", set.len(), out.display()))
        }
        Command::Run {
            config,
            bot,
            model,
            seed,
            reference,
            trace,
        } => {
            let t = cmd_run(&RunArgs {
                config,
                bot,
                model: model.selection(),
                seed,
                reference,
                trace,
            })?;
            Ok(t.summary().map(summary_line).unwrap_or_default())
        }
        Command::Experiment {
            spec,
            config,
            models,
            fitness,
            regime,
            bots,
            seed,
            runs,
            reference,
            warmup,
            out,
        } => {
            let spec = match spec {
                Some(path) => ExperimentSpec::load(&path)?,
                None => ExperimentSpec {
                    config,
                    models: models
                        .into_iter()
                        .map(|m| to_selection(m, fitness, regime))
                        .collect(),
                    bots,
                    seeds: SeedSpec::Derived {
                        base_seed: seed,
                        n: runs,
                    },
                    reference,
                    out: out.ok_or_else(|| HarnessError::Usage("--out is required".into()))?,
                    warmup_windows: warmup,
                },
            };
            let table = cmd_experiment(&spec)?;
            Ok(table.to_csv().trim_end().to_string())
        }
        Command::Report { trace, out } => {
            let table = cmd_report(&trace, out.as_deref())?;
            Ok(match out {
                Some(p) => format!("wrote {} rows to {}", table.rows.len(), p.display()),
                None => table.to_csv().trim_end().to_string(),
            })
        }
    }
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(msg) => {
            if !msg.is_empty() {
                println!("{msg}");
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

//! Reference points: per-window expected values (Z) and expected-progress
//! curves over time, calibrated from repeated bot playthroughs or imported
//! from recorded player data.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::ModelSelection;
use crate::rng;
use crate::simulator::{self, BotProfile, Scenario};
use crate::telemetry::{Tick, VarId};

pub const REFERENCE_FORMAT: &str = "dda-reference";
pub const REFERENCE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CurveSource {
    BotCalibration {
        profile: String,
        n_runs: u32,
        seed: u64,
        window_len: Tick,
    },
    Manual,
}

/// One knot of an expected-progress curve: `(tick, expected value, stddev)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Knot(pub Tick, pub f64, pub f64);

impl Knot {
    pub fn tick(&self) -> Tick {
        self.0
    }
    pub fn value(&self) -> f64 {
        self.1
    }
    pub fn stddev(&self) -> f64 {
        self.2
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceCurve {
    pub var_id: VarId,
    pub z_per_window: f64,
    pub knots: Vec<Knot>,
    pub source: CurveSource,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReferenceError {
    #[error("curve `{var}`: needs at least 2 knots, has {len}")]
    TooFewKnots { var: VarId, len: usize },
    #[error("curve `{var}`: knot ticks not strictly increasing at index {index}")]
    NonMonotonic { var: VarId, index: usize },
    #[error("curve `{var}`: calibration source must have n_runs >= 1")]
    NoRuns { var: VarId },
    #[error("curve `{var}`: non-finite value at knot {index}")]
    NonFinite { var: VarId, index: usize },
    #[error("duplicate curve for `{0}`")]
    Duplicate(VarId),
    #[error("malformed reference file: {0}")]
    Malformed(String),
    #[error("record {index} (`{var}`): {source}")]
    Record {
        index: usize,
        var: String,
        #[source]
        source: Box<ReferenceError>,
    },
    #[error("unsupported reference format `{format}` version {version}")]
    Version { format: String, version: u32 },
    #[error("io: {0}")]
    Io(String),
}

impl ReferenceCurve {
    pub fn validate(&self) -> Result<(), ReferenceError> {
        let var = self.var_id.clone();
        if self.knots.len() < 2 {
            return Err(ReferenceError::TooFewKnots {
                var,
                len: self.knots.len(),
            });
        }
        for (i, w) in self.knots.windows(2).enumerate() {
            if w[1].0 <= w[0].0 {
                return Err(ReferenceError::NonMonotonic { var, index: i + 1 });
            }
        }
        for (i, k) in self.knots.iter().enumerate() {
            if !k.1.is_finite() || !k.2.is_finite() {
                return Err(ReferenceError::NonFinite { var, index: i });
            }
        }
        if !self.z_per_window.is_finite() {
            return Err(ReferenceError::NonFinite { var, index: 0 });
        }
        if let CurveSource::BotCalibration { n_runs: 0, .. } = self.source {
            return Err(ReferenceError::NoRuns { var });
        }
        Ok(())
    }

    /// Expected value at `t`: linear between bracketing knots, clamped to the
    /// end knots outside the covered range.
    pub fn lookup(&self, t: f64) -> f64 {
        let knots = &self.knots;
        let first = knots[0];
        let last = knots[knots.len() - 1];
        if t <= first.0 as f64 {
            return first.1;
        }
        if t >= last.0 as f64 {
            return last.1;
        }
        // first knot with tick > t; t is strictly inside so idx in 1..len
        let idx = knots.partition_point(|k| (k.0 as f64) <= t);
        let (a, b) = (knots[idx - 1], knots[idx]);
        if (a.0 as f64) == t {
            return a.1;
        }
        let frac = (t - a.0 as f64) / (b.0 - a.0) as f64;
        a.1 + frac * (b.1 - a.1)
    }
}

/// The set of curves an engine consults, keyed by variable.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ReferenceSet {
    curves: BTreeMap<VarId, ReferenceCurve>,
}

#[derive(Serialize, Deserialize)]
struct ReferenceFile {
    format: String,
    version: u32,
    curves: Vec<serde_json::Value>,
}

impl ReferenceSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_curves(curves: Vec<ReferenceCurve>) -> Result<Self, ReferenceError> {
        let mut set = ReferenceSet::new();
        for c in curves {
            set.insert(c)?;
        }
        Ok(set)
    }

    pub fn insert(&mut self, curve: ReferenceCurve) -> Result<(), ReferenceError> {
        curve.validate()?;
        if self.curves.contains_key(&curve.var_id) {
            return Err(ReferenceError::Duplicate(curve.var_id));
        }
        self.curves.insert(curve.var_id.clone(), curve);
        Ok(())
    }

    pub fn get(&self, var: &VarId) -> Option<&ReferenceCurve> {
        self.curves.get(var)
    }

    pub fn curves(&self) -> impl Iterator<Item = &ReferenceCurve> {
        self.curves.values()
    }

    pub fn len(&self) -> usize {
        self.curves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.curves.is_empty()
    }

    pub fn to_json(&self) -> String {
        let file = ReferenceFile {
            format: REFERENCE_FORMAT.into(),
            version: REFERENCE_VERSION,
            curves: self
                .curves
                .values()
                .map(|c| serde_json::to_value(c).expect("curve serializes"))
                .collect(),
        };
        let mut s = serde_json::to_string_pretty(&file).expect("reference serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, ReferenceError> {
        let file: ReferenceFile =
            serde_json::from_str(text).map_err(|e| ReferenceError::Malformed(e.to_string()))?;
        if file.format != REFERENCE_FORMAT || file.version != REFERENCE_VERSION {
            return Err(ReferenceError::Version {
                format: file.format,
                version: file.version,
            });
        }
        let mut set = ReferenceSet::new();
        for (index, raw) in file.curves.into_iter().enumerate() {
            let var = raw
                .get("var_id")
                .and_then(|v| v.as_str())
                .unwrap_or("?")
                .to_string();
            let wrap = |e: ReferenceError| ReferenceError::Record {
                index,
                var: var.clone(),
                source: Box::new(e),
            };
            let curve: ReferenceCurve = serde_json::from_value(raw)
                .map_err(|e| wrap(ReferenceError::Malformed(e.to_string())))?;
            set.insert(curve).map_err(wrap)?;
        }
        Ok(set)
    }

    pub fn save(&self, path: &Path) -> Result<(), ReferenceError> {
        fs::write(path, self.to_json()).map_err(|e| ReferenceError::Io(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ReferenceError> {
        let text = fs::read_to_string(path).map_err(|e| ReferenceError::Io(e.to_string()))?;
        Self::from_json(&text)
    }
}

/// Window-close snapshot from one episode: per-variable window value N and
/// progress (running event total or latest level) at `end`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowSnapshot {
    pub end: Tick,
    pub n: BTreeMap<VarId, f64>,
    pub progress: BTreeMap<VarId, f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunSeries {
    pub initial: BTreeMap<VarId, f64>,
    pub windows: Vec<WindowSnapshot>,
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Folds per-run window series into one curve per variable. Runs shorter
/// than the longest carry their final progress forward.
pub fn aggregate_runs(
    runs: &[RunSeries],
    window_len: Tick,
    source: &CurveSource,
) -> Result<ReferenceSet, ReferenceError> {
    let mut set = ReferenceSet::new();
    let Some(first) = runs.first() else {
        return Ok(set);
    };
    let max_windows = runs.iter().map(|r| r.windows.len()).max().unwrap_or(0);
    for var in first.initial.keys() {
        let mut knots = Vec::with_capacity(max_windows + 1);
        let init: Vec<f64> = runs.iter().map(|r| r.initial[var]).collect();
        let (m, sd) = mean_sd(&init);
        knots.push(Knot(0, m, sd));
        for k in 0..max_windows {
            let vals: Vec<f64> = runs
                .iter()
                .map(|r| match r.windows.get(k).or(r.windows.last()) {
                    Some(w) => w.progress[var],
                    None => r.initial[var],
                })
                .collect();
            let (m, sd) = mean_sd(&vals);
            knots.push(Knot((k as Tick + 1) * window_len, m, sd));
        }
        if knots.len() == 1 {
            let k = knots[0];
            knots.push(Knot(window_len, k.1, k.2));
        }
        let ns: Vec<f64> = runs
            .iter()
            .flat_map(|r| r.windows.iter().map(move |w| w.n[var]))
            .collect();
        let z = if ns.is_empty() {
            0.0
        } else {
            ns.iter().sum::<f64>() / ns.len() as f64
        };
        set.insert(ReferenceCurve {
            var_id: var.clone(),
            z_per_window: z,
            knots,
            source: source.clone(),
        })?;
    }
    Ok(set)
}

#[derive(Debug, Error)]
pub enum CalibrationError {
    #[error("calibration needs at least one run")]
    NoRuns,
    #[error("window length must be positive")]
    ZeroWindow,
    #[error("calibration run {run} failed: {message}")]
    Run { run: u32, message: String },
    #[error(transparent)]
    Reference(#[from] ReferenceError),
}

/// Plays `n_runs` seeded episodes with adjustment disabled and folds the
/// observed telemetry into reference curves.
pub fn calibrate(
    scenario: &Scenario,
    bot: &BotProfile,
    n_runs: u32,
    window_len: Tick,
    seed: u64,
) -> Result<ReferenceSet, CalibrationError> {
    if n_runs == 0 {
        return Err(CalibrationError::NoRuns);
    }
    if window_len == 0 {
        return Err(CalibrationError::ZeroWindow);
    }
    let mut scenario = scenario.clone();
    scenario.dda.evaluation_interval = window_len;
    let runs: Vec<Result<RunSeries, CalibrationError>> = (0..n_runs)
        .into_par_iter()
        .map(|i| {
            let run_seed = rng::derive(seed, i as u64);
            simulator::run_episode(&scenario, bot, ModelSelection::off(), None, run_seed)
                .map(|trace| trace.run_series())
                .map_err(|e| CalibrationError::Run {
                    run: i,
                    message: e.to_string(),
                })
        })
        .collect();
    let runs = runs.into_iter().collect::<Result<Vec<_>, _>>()?;
    let source = CurveSource::BotCalibration {
        profile: bot.name.clone(),
        n_runs,
        seed,
        window_len,
    };
    Ok(aggregate_runs(&runs, window_len, &source)?)
}

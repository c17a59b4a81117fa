//! Episode traces: one JSON object per line, header first, outcome last.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{BotProfile, Scenario, SimError};
use crate::adjustment::{AppliedChange, ChangeRequest, DrainContext, DroppedChange};
use crate::assessment::{AssessmentReport, FlowBand};
use crate::engine::ModelSelection;
use crate::models::dscript::{EncounterLearning, EncounterResult};
use crate::models::probabilistic::ExpectationMethod;
use crate::reference::{RunSeries, WindowSnapshot};
use crate::telemetry::{SpikeReport, Tick, VarId};

pub const TRACE_SCHEMA: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpawnInfo {
    pub id: u64,
    pub agent_type: String,
    pub hp: f64,
    pub damage: f64,
    pub attack_interval: Tick,
    pub hit_prob: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PotionKind {
    Drop,
    Use,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub ticks: Tick,
    pub waves_played: u32,
    pub waves_won: u32,
    pub deaths: u32,
    pub final_hp: f64,
    pub damage_taken: f64,
    pub potion_healing: f64,
    pub respawn_healing: f64,
    pub potions_used: u32,
    pub windows: u32,
    /// Fraction of assessed windows whose global difficulty sat in the band.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flow_occupancy: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_performance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cumulative_rank: Option<f64>,
    pub applied_changes: u32,
}

impl EpisodeSummary {
    pub fn win_rate(&self) -> f64 {
        if self.waves_played == 0 {
            0.0
        } else {
            self.waves_won as f64 / self.waves_played as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TraceRecord {
    Header {
        schema: u32,
        seed: u64,
        scenario: Box<Scenario>,
        bot: BotProfile,
        model: ModelSelection,
        reference: bool,
        initial: BTreeMap<VarId, f64>,
    },
    WaveStart {
        tick: Tick,
        wave: u32,
        enemies: Vec<SpawnInfo>,
    },
    Script {
        tick: Tick,
        agent: u64,
        agent_type: String,
        rules: Vec<u32>,
        seed: u64,
    },
    /// A landed hit; `amount` is the health actually removed.
    Hit {
        tick: Tick,
        attacker: String,
        target: String,
        amount: f64,
        crit: bool,
    },
    Death {
        tick: Tick,
        unit: String,
        by: String,
    },
    Potion {
        tick: Tick,
        kind: PotionKind,
        heal: f64,
    },
    Respawn {
        tick: Tick,
        heal: f64,
    },
    WaveEnd {
        tick: Tick,
        wave: u32,
        won: bool,
        duration: Tick,
    },
    /// Raw feed into the engine: an event delta or an accepted sample.
    Telemetry {
        tick: Tick,
        var: VarId,
        value: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        cause: Option<String>,
    },
    Window {
        tick: Tick,
        n: BTreeMap<VarId, f64>,
        progress: BTreeMap<VarId, f64>,
    },
    Assessment {
        report: Box<AssessmentReport>,
    },
    Spike {
        tick: Tick,
        report: SpikeReport,
    },
    Expectation {
        tick: Tick,
        wave: u32,
        value: f64,
        method: ExpectationMethod,
        survival_ratio: f64,
    },
    Enqueued {
        request: ChangeRequest,
    },
    Applied {
        context: DrainContext,
        change: AppliedChange,
    },
    Dropped {
        context: DrainContext,
        change: DroppedChange,
    },
    Learning {
        tick: Tick,
        encounter: u32,
        result: EncounterResult,
        learning: EncounterLearning,
    },
    Outcome {
        summary: EpisodeSummary,
    },
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EpisodeTrace {
    pub records: Vec<TraceRecord>,
}

impl EpisodeTrace {
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            let line = serde_json::to_string(r).expect("trace records serialize");
            let _ = writeln!(out, "{line}");
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self, SimError> {
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            if i == 0 {
                let v: serde_json::Value = serde_json::from_str(line)
                    .map_err(|e| SimError::Trace(format!("line 1: {e}")))?;
                let schema = v.get("schema").and_then(|s| s.as_u64());
                if schema != Some(TRACE_SCHEMA as u64) {
                    return Err(SimError::Schema {
                        found: schema,
                        expected: TRACE_SCHEMA,
                    });
                }
            }
            let r: TraceRecord = serde_json::from_str(line)
                .map_err(|e| SimError::Trace(format!("line {}: {e}", i + 1)))?;
            records.push(r);
        }
        if !matches!(records.first(), Some(TraceRecord::Header { .. })) {
            return Err(SimError::Trace("trace does not start with a header".into()));
        }
        Ok(EpisodeTrace { records })
    }

    pub fn write(&self, path: &Path) -> Result<(), SimError> {
        std::fs::write(path, self.to_jsonl()).map_err(|e| SimError::Io(e.to_string()))
    }

    pub fn read(path: &Path) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path).map_err(|e| SimError::Io(e.to_string()))?;
        Self::from_jsonl(&text)
    }

    pub fn header(&self) -> Option<(&Scenario, &BotProfile, ModelSelection, u64)> {
        self.records.iter().find_map(|r| match r {
            TraceRecord::Header {
                scenario,
                bot,
                model,
                seed,
                ..
            } => Some((scenario.as_ref(), bot, *model, *seed)),
            _ => None,
        })
    }

    pub fn summary(&self) -> Option<&EpisodeSummary> {
        self.records.iter().rev().find_map(|r| match r {
            TraceRecord::Outcome { summary } => Some(summary),
            _ => None,
        })
    }

    pub fn assessments(&self) -> impl Iterator<Item = &AssessmentReport> {
        self.records.iter().filter_map(|r| match r {
            TraceRecord::Assessment { report } => Some(report.as_ref()),
            _ => None,
        })
    }

    pub fn applied(&self) -> impl Iterator<Item = &AppliedChange> {
        self.records.iter().filter_map(|r| match r {
            TraceRecord::Applied { change, .. } => Some(change),
            _ => None,
        })
    }

    pub fn learning(&self) -> impl Iterator<Item = (&EncounterResult, &EncounterLearning)> {
        self.records.iter().filter_map(|r| match r {
            TraceRecord::Learning {
                result, learning, ..
            } => Some((result, learning)),
            _ => None,
        })
    }

    /// Records that only exist when a model is changing the game.
    pub fn adjustment_records(&self) -> usize {
        self.records
            .iter()
            .filter(|r| {
                matches!(
                    r,
                    TraceRecord::Enqueued { .. }
                        | TraceRecord::Applied { .. }
                        | TraceRecord::Dropped { .. }
                        | TraceRecord::Expectation { .. }
                        | TraceRecord::Script { .. }
                        | TraceRecord::Learning { .. }
                )
            })
            .count()
    }

    /// Wave outcomes in order; `true` when the player won.
    pub fn wave_results(&self) -> Vec<bool> {
        self.records
            .iter()
            .filter_map(|r| match r {
                TraceRecord::WaveEnd { won, .. } => Some(*won),
                _ => None,
            })
            .collect()
    }

    pub fn run_series(&self) -> RunSeries {
        let mut initial = BTreeMap::new();
        let mut windows = Vec::new();
        for r in &self.records {
            match r {
                TraceRecord::Header { initial: i, .. } => initial = i.clone(),
                TraceRecord::Window { tick, n, progress } => windows.push(WindowSnapshot {
                    end: *tick,
                    n: n.clone(),
                    progress: progress.clone(),
                }),
                _ => {}
            }
        }
        RunSeries { initial, windows }
    }
}

/// Share of reports whose global difficulty lies in `band`, skipping the first `warmup`.
pub fn flow_occupancy<'a>(
    reports: impl Iterator<Item = &'a AssessmentReport>,
    band: &FlowBand,
    warmup: usize,
) -> Option<f64> {
    let mut hits = 0usize;
    let mut total = 0usize;
    for r in reports.skip(warmup) {
        total += 1;
        if band.contains(r.global_difficulty) {
            hits += 1;
        }
    }
    (total > 0).then(|| hits as f64 / total as f64)
}

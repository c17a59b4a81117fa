use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use crate::adjustment::FactorId;
use crate::simulator::{EpisodeTrace, TraceRecord};
use crate::telemetry::{Tick, VarId};

/// Per-window time series derived from a trace.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Option<f64>>>,
}

impl ReportTable {
    pub fn column(&self, name: &str) -> Option<Vec<Option<f64>>> {
        let i = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row
                .iter()
                .map(|c| c.map(|v| v.to_string()).unwrap_or_default())
                .collect();
            let _ = writeln!(out, "{}", cells.join(","));
        }
        out
    }
}

/// Columns: `tick`, `n:<var>` per variable, then when assessed
/// `global_difficulty`, `global_proficiency`, `difficulty:<var>`; then
/// `factor:<id>` for every factor a model changed and
/// `weight:<agent>:<rule>` for every learned rule weight. Factor and weight
/// columns hold the latest value at or before the row's tick.
pub fn report(trace: &EpisodeTrace) -> ReportTable {
    let mut vars: BTreeSet<VarId> = BTreeSet::new();
    let mut factors: BTreeSet<FactorId> = BTreeSet::new();
    let mut agents: BTreeMap<String, usize> = BTreeMap::new();
    let mut assessed = false;
    for r in &trace.records {
        match r {
            TraceRecord::Window { n, .. } => vars.extend(n.keys().cloned()),
            TraceRecord::Assessment { .. } => assessed = true,
            TraceRecord::Applied { change, .. } => {
                factors.insert(change.factor.clone());
            }
            TraceRecord::Learning { learning, .. } => {
                for (agent, w) in &learning.weights {
                    let e = agents.entry(agent.clone()).or_default();
                    *e = (*e).max(w.len());
                }
            }
            _ => {}
        }
    }

    let mut header = vec!["tick".to_string()];
    header.extend(vars.iter().map(|v| format!("n:{v}")));
    if assessed {
        header.push("global_difficulty".into());
        header.push("global_proficiency".into());
        header.extend(vars.iter().map(|v| format!("difficulty:{v}")));
    }
    header.extend(factors.iter().map(|f| format!("factor:{f}")));
    for (agent, n) in &agents {
        header.extend((0..*n).map(|i| format!("weight:{agent}:{i}")));
    }

    let mut factor_now: BTreeMap<FactorId, f64> = BTreeMap::new();
    let mut weights_now: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut rows = Vec::new();
    let mut pending: Option<(Tick, Vec<Option<f64>>)> = None;

    let finish = |pending: &mut Option<(Tick, Vec<Option<f64>>)>,
                  rows: &mut Vec<Vec<Option<f64>>>,
                  factor_now: &BTreeMap<FactorId, f64>,
                  weights_now: &BTreeMap<String, Vec<f64>>| {
        if let Some((_, mut row)) = pending.take() {
            row.extend(factors.iter().map(|f| factor_now.get(f).copied()));
            for (agent, n) in &agents {
                let w = weights_now.get(agent);
                row.extend((0..*n).map(|i| w.and_then(|w| w.get(i).copied())));
            }
            rows.push(row);
        }
    };

    for r in &trace.records {
        match r {
            TraceRecord::Header { scenario, .. } => {
                for (id, spec) in &scenario.game.factors {
                    factor_now.insert(id.clone(), spec.initial);
                }
            }
            TraceRecord::Window { tick, n, .. } => {
                finish(&mut pending, &mut rows, &factor_now, &weights_now);
                let mut row = vec![Some(*tick as f64)];
                row.extend(vars.iter().map(|v| n.get(v).copied()));
                if assessed {
                    row.extend(std::iter::repeat_n(None, 2 + vars.len()));
                }
                pending = Some((*tick, row));
            }
            TraceRecord::Assessment { report } => {
                if let Some((tick, row)) = &mut pending {
                    if *tick == report.tick {
                        let base = 1 + vars.len();
                        row[base] = Some(report.global_difficulty);
                        row[base + 1] = Some(report.global_proficiency);
                        for (i, v) in vars.iter().enumerate() {
                            row[base + 2 + i] = report.per_variable.get(v).map(|a| a.difficulty);
                        }
                    }
                }
            }
            TraceRecord::Applied { change, .. } => {
                if pending.as_ref().is_some_and(|p| change.tick > p.0) {
                    finish(&mut pending, &mut rows, &factor_now, &weights_now);
                }
                factor_now.insert(change.factor.clone(), change.new);
            }
            TraceRecord::Learning { tick, learning, .. } => {
                if pending.as_ref().is_some_and(|p| *tick > p.0) {
                    finish(&mut pending, &mut rows, &factor_now, &weights_now);
                }
                for (agent, w) in &learning.weights {
                    weights_now.insert(agent.clone(), w.clone());
                }
            }
            _ => {}
        }
    }
    finish(&mut pending, &mut rows, &factor_now, &weights_now);
    ReportTable { header, rows }
}

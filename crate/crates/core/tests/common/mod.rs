//! Independent oracles shared by the integration tests and the acceptance run.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use dda::adjustment::{
    ChangeOp, ChangeQueue, ChangeRequest, DrainContext, FactorMap, QueuePolicy, Visibility,
};
use dda::models::probabilistic::{Outcome, ZoneEnemy, ZoneSpec};
use dda::reference::ReferenceSet;
use dda::simulator::{EpisodeTrace, Scenario, TraceRecord};
use dda::telemetry::{Orientation, Tick, TrackingMode};
use num::{BigRational, ToPrimitive, Zero};
use proptest::prelude::*;

// ---------------------------------------------------------------- expectation

fn exact(x: f64) -> BigRational {
    BigRational::from_float(x).expect("finite")
}

/// Expected total damage by exact rational arithmetic, walking the joint
/// outcome tree depth first.
pub fn brute_force_expectation(zone: &ZoneSpec) -> f64 {
    let draws: Vec<&[Outcome]> = zone
        .enemies
        .iter()
        .flat_map(|e| (0..e.attacks).map(move |_| e.outcomes.as_slice()))
        .collect();
    fn walk(draws: &[&[Outcome]], p: BigRational, v: BigRational, acc: &mut BigRational) {
        match draws.split_first() {
            None => *acc += p * v,
            Some((head, rest)) => {
                for o in head.iter() {
                    walk(rest, &p * exact(o.prob), &v + exact(o.damage), acc);
                }
            }
        }
    }
    let mut acc = BigRational::zero();
    walk(
        &draws,
        BigRational::from_integer(1.into()),
        BigRational::zero(),
        &mut acc,
    );
    acc.to_f64().expect("representable")
}

/// Random zones whose joint outcome count stays at or below `max_joint`.
pub fn zone_strategy(max_joint: u64) -> impl Strategy<Value = ZoneSpec> {
    let enemy = (
        1.0f64..40.0,
        0.05f64..0.95,
        0.0f64..0.3,
        1u32..=3,
        any::<bool>(),
    )
        .prop_map(|(dmg, hit, crit, attacks, crits)| {
            if crits {
                ZoneEnemy::with_crit("e", dmg, hit, crit, 2.0, attacks)
            } else {
                ZoneEnemy::hit_or_miss("e", dmg, hit, attacks)
            }
        });
    prop::collection::vec(enemy, 1..6)
        .prop_map(move |mut enemies| {
            while (ZoneSpec {
                enemies: enemies.clone(),
            })
            .joint_outcomes()
                > max_joint
            {
                enemies.pop();
            }
            ZoneSpec { enemies }
        })
        .prop_filter("non-empty", |z| !z.enemies.is_empty())
}

// ---------------------------------------------------------------- scripts

/// Exact inclusion probability of each index in a size-`k` draw without
/// replacement, each pick proportional to the remaining weights.
pub fn inclusion_probabilities(weights: &[f64], k: usize) -> Vec<f64> {
    fn go(weights: &[f64], taken: &mut Vec<usize>, k: usize, p: f64, out: &mut [f64]) {
        if taken.len() == k {
            for &i in taken.iter() {
                out[i] += p;
            }
            return;
        }
        let total: f64 = (0..weights.len())
            .filter(|i| !taken.contains(i))
            .map(|i| weights[i])
            .sum();
        for i in 0..weights.len() {
            if taken.contains(&i) {
                continue;
            }
            taken.push(i);
            go(weights, taken, k, p * weights[i] / total, out);
            taken.pop();
        }
    }
    let mut out = vec![0.0; weights.len()];
    go(weights, &mut Vec::new(), k, 1.0, &mut out);
    out
}

// ---------------------------------------------------------------- queue

#[derive(Debug, Clone)]
pub enum QueueOp {
    Enqueue {
        tag: u8,
        vis: usize,
        factor: u8,
        value: f64,
    },
    Drain {
        ctx: usize,
        advance: Tick,
    },
    Reset,
}

pub fn queue_op() -> impl Strategy<Value = QueueOp> {
    prop_oneof![
        4 => (0u8..6, 0usize..3, 0u8..3, 0.5f64..2.0)
            .prop_map(|(tag, vis, factor, value)| QueueOp::Enqueue { tag, vis, factor, value }),
        3 => (0usize..4, 0u64..200).prop_map(|(ctx, advance)| QueueOp::Drain { ctx, advance }),
        1 => Just(QueueOp::Reset),
    ]
}

/// Replays `ops` against a queue and checks every contract clause after
/// each step. Returns the number of drains that applied something.
pub fn check_queue_contract(ops: &[QueueOp], policy: &QueuePolicy) -> Result<usize, String> {
    let mut q = ChangeQueue::new();
    let mut factors = FactorMap::new()
        .with("f0", 1.0)
        .with("f1", 1.0)
        .with("f2", 1.0);
    let mut now: Tick = 0;
    let mut last_exec: Option<Tick> = None;
    let mut since_reset = 0u32;
    let mut visibility: BTreeMap<String, Visibility> = BTreeMap::new();
    let mut productive = 0;
    for op in ops {
        match *op {
            QueueOp::Enqueue {
                tag,
                vis,
                factor,
                value,
            } => {
                let tag = format!("t{tag}");
                let v = Visibility::ALL[vis];
                let req = ChangeRequest::new(
                    tag.clone(),
                    format!("f{factor}"),
                    ChangeOp::Set(value),
                    (0.0, 10.0),
                    v,
                    now,
                )
                .map_err(|e| e.to_string())?;
                q.enqueue(req);
                visibility.insert(tag, v);
            }
            QueueOp::Drain { ctx, advance } => {
                now += advance;
                let ctx = DrainContext::ALL[ctx];
                let before: Vec<(String, Visibility)> =
                    q.pending().map(|r| (r.tag.clone(), r.visibility)).collect();
                let out = q.drain(ctx, now, policy, &mut factors);
                let gate_open =
                    last_exec.is_none_or(|l| now - l >= policy.min_ticks_between_executions);
                let room = policy
                    .max_changes_per_update
                    .min(policy.max_changes_per_stage.saturating_sub(since_reset))
                    as usize;
                let expected: Vec<&str> = if gate_open {
                    before
                        .iter()
                        .filter(|(_, v)| v.admitted_by(ctx))
                        .take(room)
                        .map(|(t, _)| t.as_str())
                        .collect()
                } else {
                    Vec::new()
                };
                let got: Vec<&str> = out.applied.iter().map(|a| a.tag.as_str()).collect();
                if got != expected {
                    return Err(format!("applied {got:?}, model expected {expected:?}"));
                }
                if q.len() != before.len() - got.len() {
                    return Err("applied changes left in the queue".into());
                }
                if out.applied.len() > policy.max_changes_per_update as usize {
                    return Err(format!("{} applied in one drain", out.applied.len()));
                }
                if out.gated && !out.applied.is_empty() {
                    return Err("gated drain applied changes".into());
                }
                if !out.applied.is_empty() {
                    if let Some(last) = last_exec {
                        if now - last < policy.min_ticks_between_executions {
                            return Err(format!(
                                "executed {} ticks after the previous",
                                now - last
                            ));
                        }
                    }
                    last_exec = Some(now);
                    productive += 1;
                }
                for a in &out.applied {
                    if !visibility[&a.tag].admitted_by(ctx) {
                        return Err(format!("{} applied in {ctx:?}", a.tag));
                    }
                }
                since_reset += out.applied.len() as u32;
                if since_reset > policy.max_changes_per_stage {
                    return Err(format!("{since_reset} changes in one stage"));
                }
            }
            QueueOp::Reset => {
                q.reset_stage();
                since_reset = 0;
            }
        }
        let tags: Vec<&str> = q.pending().map(|r| r.tag.as_str()).collect();
        let unique: BTreeSet<&str> = tags.iter().copied().collect();
        if unique.len() != tags.len() {
            return Err(format!("duplicate pending tags {tags:?}"));
        }
    }
    Ok(productive)
}

/// The admission table, written out longhand.
pub fn expected_admission(vis: Visibility, ctx: DrainContext) -> bool {
    use DrainContext::*;
    match (vis, ctx) {
        (Visibility::SubtleAnytime, _) => true,
        (Visibility::UnseenZone, SubtleWindow) => false,
        (Visibility::UnseenZone, UnseenZone | SceneChange | PlayerDead) => true,
        (Visibility::RequiresBreak, SubtleWindow | UnseenZone) => false,
        (Visibility::RequiresBreak, SceneChange | PlayerDead) => true,
    }
}

// ---------------------------------------------------------------- traces

/// Per-window N and end-of-window progress rebuilt from raw telemetry
/// records, ignoring the engine's own window records except for their ticks.
#[derive(Debug, Clone, PartialEq)]
pub struct RebuiltWindow {
    pub end: Tick,
    pub n: BTreeMap<String, f64>,
    pub progress: BTreeMap<String, f64>,
}

pub fn rebuild_windows(trace: &EpisodeTrace) -> Vec<RebuiltWindow> {
    let (scenario, ..) = trace.header().expect("header");
    let permanent: BTreeSet<String> = scenario
        .dda
        .variables
        .iter()
        .filter(|v| matches!(v.mode, TrackingMode::Permanent { .. }))
        .map(|v| v.id.as_str().to_string())
        .collect();
    let vars: Vec<String> = scenario
        .dda
        .variables
        .iter()
        .map(|v| v.id.as_str().to_string())
        .collect();
    let ends: Vec<Tick> = trace
        .records
        .iter()
        .filter_map(|r| match r {
            TraceRecord::Window { tick, .. } => Some(*tick),
            _ => None,
        })
        .collect();
    let samples: Vec<(Tick, &str, f64)> = trace
        .records
        .iter()
        .filter_map(|r| match r {
            TraceRecord::Telemetry {
                tick, var, value, ..
            } => Some((*tick, var.as_str(), *value)),
            _ => None,
        })
        .collect();

    let mut out = Vec::new();
    let mut start = 0;
    let mut total: BTreeMap<String, f64> = vars.iter().map(|v| (v.clone(), 0.0)).collect();
    let mut level: BTreeMap<String, f64> = BTreeMap::new();
    for end in ends {
        let mut n = BTreeMap::new();
        let mut progress = BTreeMap::new();
        for v in &vars {
            let inside: Vec<f64> = samples
                .iter()
                .filter(|s| s.1 == v && s.0 >= start && s.0 < end)
                .map(|s| s.2)
                .collect();
            if permanent.contains(v) {
                let value = if inside.is_empty() {
                    level.get(v).copied().unwrap_or(0.0)
                } else {
                    inside.iter().sum::<f64>() / inside.len() as f64
                };
                if let Some(last) = inside.last() {
                    level.insert(v.clone(), *last);
                }
                n.insert(v.clone(), value);
                progress.insert(v.clone(), level.get(v).copied().unwrap_or(0.0));
            } else {
                let s: f64 = inside.iter().sum();
                *total.get_mut(v).unwrap() += s;
                n.insert(v.clone(), s);
                progress.insert(v.clone(), total[v]);
            }
        }
        out.push(RebuiltWindow { end, n, progress });
        start = end;
    }
    out
}

/// Difficulty of one variable, computed from the definitions.
pub fn oracle_difficulty(
    n: f64,
    z: f64,
    span: f64,
    orientation: Orientation,
    reference_difficulty: f64,
) -> f64 {
    let n = match orientation {
        Orientation::HigherIsHarder => n,
        Orientation::HigherIsEasier => z - (n - z),
    };
    let z_eq = z - reference_difficulty * span;
    ((n - z_eq) / span).clamp(0.0, 1.0)
}

/// Global difficulty per assessed window, recomputed from raw telemetry.
pub fn oracle_global_difficulty(trace: &EpisodeTrace, refs: &ReferenceSet) -> Vec<(Tick, f64)> {
    let (scenario, ..) = trace.header().expect("header");
    let scenario: &Scenario = scenario;
    let cfg = &scenario.dda.assessment;
    let n_vars = scenario.dda.variables.len() as f64;
    let uniform = cfg.weights.is_empty();
    rebuild_windows(trace)
        .into_iter()
        .map(|w| {
            let mut g = 0.0;
            for v in &scenario.dda.variables {
                let z = refs
                    .get(&v.id)
                    .map(|c| c.z_per_window)
                    .or(v.reference_z)
                    .expect("reference");
                let span = v.span.unwrap_or(scenario.dda.evaluation_interval as f64);
                let d = oracle_difficulty(
                    w.n[v.id.as_str()],
                    z,
                    span,
                    v.orientation,
                    cfg.reference_difficulty,
                );
                let weight = if uniform {
                    1.0 / n_vars
                } else {
                    cfg.weights.get(&v.id).copied().unwrap_or(0.0)
                };
                g += weight * d;
            }
            (w.end, g)
        })
        .collect()
}

pub fn rolling_rate(outcomes: &[bool], k: usize) -> Vec<f64> {
    outcomes
        .windows(k)
        .map(|w| w.iter().filter(|x| **x).count() as f64 / k as f64)
        .collect()
}

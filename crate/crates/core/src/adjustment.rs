//! Tagged change queue.
//!
//! Models enqueue [`ChangeRequest`]s; the host drains them at moments where
//! the player will not notice. A newer request replaces any pending one with
//! the same tag. Draining honours visibility, a minimum spacing between
//! executions, and per-update and per-stage caps.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::telemetry::Tick;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FactorId(String);

impl FactorId {
    pub fn new(id: impl Into<String>) -> Self {
        FactorId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for FactorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for FactorId {
    fn from(s: &str) -> Self {
        FactorId(s.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", content = "value", rename_all = "snake_case")]
pub enum ChangeOp {
    Additive(f64),
    Multiplicative(f64),
    Set(f64),
}

impl ChangeOp {
    pub fn apply(&self, old: f64) -> f64 {
        match *self {
            ChangeOp::Additive(d) => old + d,
            ChangeOp::Multiplicative(m) => old * m,
            ChangeOp::Set(v) => v,
        }
    }
}

/// When a change may be executed without the player noticing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Visibility {
    SubtleAnytime,
    UnseenZone,
    RequiresBreak,
}

/// The moment the host is draining at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DrainContext {
    SubtleWindow,
    UnseenZone,
    SceneChange,
    PlayerDead,
}

impl DrainContext {
    pub const ALL: [DrainContext; 4] = [
        DrainContext::SubtleWindow,
        DrainContext::UnseenZone,
        DrainContext::SceneChange,
        DrainContext::PlayerDead,
    ];
}

impl Visibility {
    pub const ALL: [Visibility; 3] = [
        Visibility::SubtleAnytime,
        Visibility::UnseenZone,
        Visibility::RequiresBreak,
    ];

    pub fn admitted_by(self, context: DrainContext) -> bool {
        use DrainContext as C;
        match self {
            Visibility::SubtleAnytime => true,
            Visibility::UnseenZone => {
                matches!(context, C::UnseenZone | C::SceneChange | C::PlayerDead)
            }
            Visibility::RequiresBreak => matches!(context, C::SceneChange | C::PlayerDead),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChangeRequest {
    pub tag: String,
    pub factor: FactorId,
    pub change: ChangeOp,
    /// Absolute clamp on the resulting factor value.
    pub bounds: (f64, f64),
    pub visibility: Visibility,
    pub issued_tick: Tick,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ChangeError {
    #[error("change tag must not be empty")]
    EmptyTag,
    #[error("change `{tag}`: bounds ({min}, {max}) are inverted or not finite")]
    Bounds { tag: String, min: f64, max: f64 },
    #[error("queue policy: {0}")]
    Policy(&'static str),
}

impl ChangeRequest {
    pub fn new(
        tag: impl Into<String>,
        factor: impl Into<FactorId>,
        change: ChangeOp,
        bounds: (f64, f64),
        visibility: Visibility,
        issued_tick: Tick,
    ) -> Result<Self, ChangeError> {
        let req = ChangeRequest {
            tag: tag.into(),
            factor: factor.into(),
            change,
            bounds,
            visibility,
            issued_tick,
        };
        req.validate()?;
        Ok(req)
    }

    pub fn validate(&self) -> Result<(), ChangeError> {
        if self.tag.is_empty() {
            return Err(ChangeError::EmptyTag);
        }
        let (min, max) = self.bounds;
        if !(min <= max) || !min.is_finite() || !max.is_finite() {
            return Err(ChangeError::Bounds {
                tag: self.tag.clone(),
                min,
                max,
            });
        }
        Ok(())
    }
}

impl From<String> for FactorId {
    fn from(s: String) -> Self {
        FactorId(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueuePolicy {
    pub min_ticks_between_executions: Tick,
    pub max_changes_per_update: u32,
    pub max_changes_per_stage: u32,
}

impl Default for QueuePolicy {
    fn default() -> Self {
        QueuePolicy {
            min_ticks_between_executions: 120,
            max_changes_per_update: 4,
            max_changes_per_stage: 24,
        }
    }
}

impl QueuePolicy {
    pub fn validate(&self) -> Result<(), ChangeError> {
        if self.max_changes_per_update == 0 {
            return Err(ChangeError::Policy("max_changes_per_update must be >= 1"));
        }
        if self.max_changes_per_stage == 0 {
            return Err(ChangeError::Policy("max_changes_per_stage must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FactorError {
    #[error("unknown factor `{0}`")]
    Unknown(FactorId),
    #[error("factor `{factor}`: value {value} outside [{min}, {max}]")]
    OutOfBounds {
        factor: FactorId,
        value: f64,
        min: f64,
        max: f64,
    },
}

/// Live game parameters a drain can read and write.
pub trait FactorTable {
    fn value(&self, factor: &FactorId) -> Option<f64>;
    fn apply(&mut self, factor: &FactorId, value: f64) -> Result<(), FactorError>;
}

type Applier = Box<dyn FnMut(f64, f64) + Send>;

/// Plain map-backed factor table, with optional per-factor callbacks that
/// fire after a value changes.
#[derive(Default)]
pub struct FactorMap {
    values: BTreeMap<FactorId, f64>,
    appliers: BTreeMap<FactorId, Applier>,
}

impl fmt::Debug for FactorMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FactorMap")
            .field("values", &self.values)
            .field("appliers", &self.appliers.keys().collect::<Vec<_>>())
            .finish()
    }
}

impl FactorMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, factor: &str, value: f64) -> Self {
        self.values.insert(FactorId::new(factor), value);
        self
    }

    pub fn insert(&mut self, factor: FactorId, value: f64) {
        self.values.insert(factor, value);
    }

    /// Registers a callback invoked with `(old, new)` whenever `factor` is applied.
    pub fn register_applier(
        &mut self,
        factor: FactorId,
        applier: impl FnMut(f64, f64) + Send + 'static,
    ) {
        self.appliers.insert(factor, Box::new(applier));
    }

    pub fn get(&self, factor: &str) -> Option<f64> {
        self.values.get(&FactorId::new(factor)).copied()
    }
}

impl FactorTable for FactorMap {
    fn value(&self, factor: &FactorId) -> Option<f64> {
        self.values.get(factor).copied()
    }

    fn apply(&mut self, factor: &FactorId, value: f64) -> Result<(), FactorError> {
        let slot = self
            .values
            .get_mut(factor)
            .ok_or_else(|| FactorError::Unknown(factor.clone()))?;
        let old = *slot;
        *slot = value;
        if let Some(f) = self.appliers.get_mut(factor) {
            f(old, value);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppliedChange {
    pub tick: Tick,
    pub tag: String,
    pub factor: FactorId,
    pub old: f64,
    pub new: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroppedChange {
    pub tick: Tick,
    pub tag: String,
    pub factor: FactorId,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DrainOutcome {
    pub applied: Vec<AppliedChange>,
    pub dropped: Vec<DroppedChange>,
    /// The time threshold blocked this drain entirely.
    pub gated: bool,
}

#[derive(Debug, Clone, Default)]
pub struct ChangeQueue {
    pending: VecDeque<ChangeRequest>,
    last_execution: Option<Tick>,
    stage_changes: u32,
}

impl ChangeQueue {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends `change`, first discarding any pending request with the same tag.
    pub fn enqueue(&mut self, change: ChangeRequest) {
        self.pending.retain(|c| c.tag != change.tag);
        self.pending.push_back(change);
    }

    pub fn len(&self) -> usize {
        self.pending.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pending.is_empty()
    }

    pub fn pending(&self) -> impl Iterator<Item = &ChangeRequest> {
        self.pending.iter()
    }

    pub fn stage_changes(&self) -> u32 {
        self.stage_changes
    }

    pub fn last_execution(&self) -> Option<Tick> {
        self.last_execution
    }

    pub fn reset_stage(&mut self) {
        self.stage_changes = 0;
    }

    pub fn drain(
        &mut self,
        context: DrainContext,
        now: Tick,
        policy: &QueuePolicy,
        factors: &mut dyn FactorTable,
    ) -> DrainOutcome {
        let mut out = DrainOutcome::default();
        if let Some(last) = self.last_execution {
            if now.saturating_sub(last) < policy.min_ticks_between_executions {
                out.gated = true;
                return out;
            }
        }
        let mut kept = VecDeque::with_capacity(self.pending.len());
        let mut applied_now = 0u32;
        while let Some(req) = self.pending.pop_front() {
            let room = applied_now < policy.max_changes_per_update
                && self.stage_changes < policy.max_changes_per_stage;
            if !room || !req.visibility.admitted_by(context) {
                kept.push_back(req);
                continue;
            }
            let Some(old) = factors.value(&req.factor) else {
                out.dropped.push(DroppedChange {
                    tick: now,
                    tag: req.tag,
                    factor: req.factor.clone(),
                    reason: FactorError::Unknown(req.factor).to_string(),
                });
                continue;
            };
            let new = req.change.apply(old).clamp(req.bounds.0, req.bounds.1);
            match factors.apply(&req.factor, new) {
                Ok(()) => {
                    applied_now += 1;
                    self.stage_changes += 1;
                    out.applied.push(AppliedChange {
                        tick: now,
                        tag: req.tag,
                        factor: req.factor,
                        old,
                        new,
                    });
                }
                Err(e) => out.dropped.push(DroppedChange {
                    tick: now,
                    tag: req.tag,
                    factor: req.factor,
                    reason: e.to_string(),
                }),
            }
        }
        self.pending = kept;
        if !out.applied.is_empty() {
            self.last_execution = Some(now);
        }
        out
    }
}

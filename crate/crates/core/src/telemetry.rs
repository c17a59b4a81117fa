//! Player-performance variable tracking.
//!
//! Variables are either event-triggered (the game calls in when something
//! happens) or permanent (the game loop pushes the current value, throttled by
//! a minimum sample interval). Accumulators are closed into
//! [`VariableWindow`]s once per evaluation period.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Logical game time. Wall time never enters the engine.
pub type Tick = u64;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VarId(String);

impl VarId {
    pub fn new(id: impl Into<String>) -> Self {
        VarId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for VarId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for VarId {
    fn from(s: &str) -> Self {
        VarId(s.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    HigherIsHarder,
    HigherIsEasier,
}

/// How a permanent variable's samples collapse into one per-window value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PermanentSummary {
    /// Start value minus end value (health lost over the window).
    Depleting,
    /// Mean of the window's samples.
    Mean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrackingMode {
    EventTriggered,
    Permanent {
        min_sample_interval: Tick,
        summary: PermanentSummary,
        /// Full value range, used to size spike thresholds.
        range: (f64, f64),
        /// Event variable whose cause-tagged deltas explain drops in this one.
        #[serde(default)]
        attribution_source: Option<VarId>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackedVariable {
    pub id: VarId,
    pub name: String,
    pub mode: TrackingMode,
    pub orientation: Orientation,
    /// Manual per-window reference value (Z). Calibrated curves override it.
    #[serde(default)]
    pub reference_z: Option<f64>,
    /// Normalizing span (D) for the difficulty ratio; the window length when absent.
    #[serde(default)]
    pub span: Option<f64>,
    /// Whether the current-vs-expected performance ratio is computed for this variable.
    #[serde(default = "default_true")]
    pub performance: bool,
}

fn default_true() -> bool {
    true
}

impl TrackedVariable {
    pub fn event(id: &str, orientation: Orientation) -> Self {
        TrackedVariable {
            id: VarId::new(id),
            name: id.to_string(),
            mode: TrackingMode::EventTriggered,
            orientation,
            reference_z: None,
            span: None,
            performance: true,
        }
    }

    pub fn permanent(
        id: &str,
        orientation: Orientation,
        min_sample_interval: Tick,
        summary: PermanentSummary,
        range: (f64, f64),
    ) -> Self {
        TrackedVariable {
            id: VarId::new(id),
            name: id.to_string(),
            mode: TrackingMode::Permanent {
                min_sample_interval,
                summary,
                range,
                attribution_source: None,
            },
            orientation,
            reference_z: None,
            span: None,
            performance: true,
        }
    }

    pub fn with_reference(mut self, z: f64) -> Self {
        self.reference_z = Some(z);
        self
    }

    pub fn with_span(mut self, span: f64) -> Self {
        self.span = Some(span);
        self
    }

    /// Excludes the variable from performance ratios (e.g. rare, noisy counts).
    pub fn without_performance(mut self) -> Self {
        self.performance = false;
        self
    }

    pub fn with_attribution(mut self, source: &str) -> Self {
        if let TrackingMode::Permanent {
            attribution_source, ..
        } = &mut self.mode
        {
            *attribution_source = Some(VarId::new(source));
        }
        self
    }

    pub fn is_permanent(&self) -> bool {
        matches!(self.mode, TrackingMode::Permanent { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TelemetryError {
    #[error("variable name must not be empty")]
    EmptyName,
    #[error("variable `{0}` is already registered")]
    Duplicate(VarId),
    #[error("variable `{0}`: minimum sample interval must be at least 1 tick")]
    ZeroInterval(VarId),
    #[error("variable `{0}`: invalid value range")]
    BadRange(VarId),
    #[error("variable `{0}`: span must be positive")]
    BadSpan(VarId),
    #[error("unknown variable `{0}`")]
    Unknown(VarId),
    #[error("variable `{var}` is {actual}, operation requires {expected}")]
    ModeMismatch {
        var: VarId,
        expected: &'static str,
        actual: &'static str,
    },
    #[error("variable `{var}`: tick {tick} precedes last recorded tick {last}")]
    NonMonotonic { var: VarId, tick: Tick, last: Tick },
    #[error("window length must be positive")]
    ZeroWindow,
    #[error("window closed early: {remaining} ticks remaining")]
    Early { remaining: Tick },
    #[error("spike parameters out of range: drop_fraction={drop_fraction}, quorum={quorum}")]
    SpikeParams { drop_fraction: f64, quorum: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleOutcome {
    Accepted,
    Throttled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub tick: Tick,
    pub delta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cause: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableWindow {
    pub var_id: VarId,
    pub window_start: Tick,
    pub window_len: Tick,
    /// Event sum, or the permanent summary value.
    pub count_or_delta: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub samples: Vec<(Tick, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "tag", rename_all = "snake_case")]
pub enum SpikeAttribution {
    SingleSource(String),
    Group,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpikeReport {
    pub var_id: VarId,
    pub magnitude: f64,
    pub attribution: SpikeAttribution,
    /// Share of the attributed damage carried by the largest single cause.
    pub top_share: f64,
}

#[derive(Debug, Clone)]
struct VarState {
    spec: TrackedVariable,
    accumulator: f64,
    last_tick: Option<Tick>,
    last_accepted: Option<Tick>,
    samples: Vec<(Tick, f64)>,
    carried: Option<f64>,
    /// `[live window, previous window]`.
    events: [Vec<EventRecord>; 2],
    progress: f64,
}

impl VarState {
    fn mode_name(&self) -> &'static str {
        if self.spec.is_permanent() {
            "permanent"
        } else {
            "event-triggered"
        }
    }
}

/// Per-engine collection of tracked variables and their open window.
#[derive(Debug, Clone, Default)]
pub struct Telemetry {
    vars: BTreeMap<VarId, VarState>,
    window_start: Tick,
}

impl Telemetry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register_variable(&mut self, spec: TrackedVariable) -> Result<VarId, TelemetryError> {
        if spec.name.trim().is_empty() || spec.id.as_str().is_empty() {
            return Err(TelemetryError::EmptyName);
        }
        if self.vars.contains_key(&spec.id) {
            return Err(TelemetryError::Duplicate(spec.id));
        }
        if let TrackingMode::Permanent {
            min_sample_interval,
            range,
            ..
        } = &spec.mode
        {
            if *min_sample_interval == 0 {
                return Err(TelemetryError::ZeroInterval(spec.id));
            }
            if !(range.0 < range.1) || !range.0.is_finite() || !range.1.is_finite() {
                return Err(TelemetryError::BadRange(spec.id));
            }
        }
        if let Some(span) = spec.span {
            if !(span > 0.0) || !span.is_finite() {
                return Err(TelemetryError::BadSpan(spec.id));
            }
        }
        let id = spec.id.clone();
        self.vars.insert(
            id.clone(),
            VarState {
                spec,
                accumulator: 0.0,
                last_tick: None,
                last_accepted: None,
                samples: Vec::new(),
                carried: None,
                events: [Vec::new(), Vec::new()],
                progress: 0.0,
            },
        );
        Ok(id)
    }

    pub fn variables(&self) -> impl Iterator<Item = &TrackedVariable> {
        self.vars.values().map(|s| &s.spec)
    }

    pub fn variable(&self, id: &VarId) -> Option<&TrackedVariable> {
        self.vars.get(id).map(|s| &s.spec)
    }

    pub fn window_start(&self) -> Tick {
        self.window_start
    }

    pub fn record_event(
        &mut self,
        var: &VarId,
        delta: f64,
        tick: Tick,
        cause: Option<&str>,
    ) -> Result<(), TelemetryError> {
        let state = self
            .vars
            .get_mut(var)
            .ok_or_else(|| TelemetryError::Unknown(var.clone()))?;
        if state.spec.is_permanent() {
            return Err(TelemetryError::ModeMismatch {
                var: var.clone(),
                expected: "event-triggered",
                actual: state.mode_name(),
            });
        }
        if let Some(last) = state.last_tick {
            if tick < last {
                return Err(TelemetryError::NonMonotonic {
                    var: var.clone(),
                    tick,
                    last,
                });
            }
        }
        state.last_tick = Some(tick);
        state.accumulator += delta;
        state.progress += delta;
        state.events[0].push(EventRecord {
            tick,
            delta,
            cause: cause.map(str::to_string),
        });
        Ok(())
    }

    pub fn sample_permanent(
        &mut self,
        var: &VarId,
        value: f64,
        tick: Tick,
    ) -> Result<SampleOutcome, TelemetryError> {
        let state = self
            .vars
            .get_mut(var)
            .ok_or_else(|| TelemetryError::Unknown(var.clone()))?;
        let TrackingMode::Permanent {
            min_sample_interval,
            ..
        } = state.spec.mode
        else {
            return Err(TelemetryError::ModeMismatch {
                var: var.clone(),
                expected: "permanent",
                actual: state.mode_name(),
            });
        };
        if let Some(last) = state.last_accepted {
            if tick < last {
                return Err(TelemetryError::NonMonotonic {
                    var: var.clone(),
                    tick,
                    last,
                });
            }
            if tick - last < min_sample_interval {
                return Ok(SampleOutcome::Throttled);
            }
        }
        state.last_accepted = Some(tick);
        state.samples.push((tick, value));
        state.progress = value;
        Ok(SampleOutcome::Accepted)
    }

    /// Current progress value: running event total, or the latest accepted sample.
    pub fn progress(&self, var: &VarId) -> Option<f64> {
        self.vars.get(var).map(|s| s.progress)
    }

    /// Closes the open window at `now`, which must be at least `window_len`
    /// ticks after the previous close.
    pub fn close_window(
        &mut self,
        now: Tick,
        window_len: Tick,
    ) -> Result<Vec<VariableWindow>, TelemetryError> {
        if window_len == 0 {
            return Err(TelemetryError::ZeroWindow);
        }
        let elapsed = now.saturating_sub(self.window_start);
        if elapsed < window_len {
            return Err(TelemetryError::Early {
                remaining: window_len - elapsed,
            });
        }
        let start = self.window_start;
        let mut out = Vec::with_capacity(self.vars.len());
        for (id, state) in self.vars.iter_mut() {
            let samples = std::mem::take(&mut state.samples);
            let n = match &state.spec.mode {
                TrackingMode::EventTriggered => state.accumulator,
                TrackingMode::Permanent { summary, .. } => {
                    summarize(*summary, state.carried, &samples)
                }
            };
            if let Some(&(_, last)) = samples.last() {
                state.carried = Some(last);
            }
            state.accumulator = 0.0;
            let live = std::mem::take(&mut state.events[0]);
            state.events[1] = live;
            out.push(VariableWindow {
                var_id: id.clone(),
                window_start: start,
                window_len: elapsed,
                count_or_delta: n,
                samples,
            });
        }
        self.window_start = now;
        Ok(out)
    }

    /// Events of `var` retained from the most recently closed window.
    pub fn closed_events(&self, var: &VarId) -> Option<&[EventRecord]> {
        self.vars.get(var).map(|s| s.events[1].as_slice())
    }

    /// Inspects a closed permanent-variable window for a sharp drop and
    /// attributes it to a single cause or a group.
    pub fn detect_spike(
        &self,
        var: &VarId,
        window: &VariableWindow,
        drop_fraction: f64,
        attribution_quorum: f64,
    ) -> Result<Option<SpikeReport>, TelemetryError> {
        if !(drop_fraction > 0.0 && drop_fraction <= 1.0)
            || !(0.5..=1.0).contains(&attribution_quorum)
        {
            return Err(TelemetryError::SpikeParams {
                drop_fraction,
                quorum: attribution_quorum,
            });
        }
        let state = self
            .vars
            .get(var)
            .ok_or_else(|| TelemetryError::Unknown(var.clone()))?;
        let TrackingMode::Permanent {
            range,
            attribution_source,
            ..
        } = &state.spec.mode
        else {
            return Err(TelemetryError::ModeMismatch {
                var: var.clone(),
                expected: "permanent",
                actual: state.mode_name(),
            });
        };
        let magnitude = largest_drop(&window.samples);
        if magnitude <= 0.0 || magnitude < drop_fraction * (range.1 - range.0) {
            return Ok(None);
        }
        let end = window.window_start + window.window_len;
        let events: Vec<&EventRecord> = attribution_source
            .as_ref()
            .and_then(|src| self.vars.get(src))
            .map(|src| {
                src.events
                    .iter()
                    .flatten()
                    .filter(|e| e.tick >= window.window_start && e.tick < end)
                    .collect()
            })
            .unwrap_or_default();
        let (attribution, top_share) = attribute(&events, attribution_quorum);
        Ok(Some(SpikeReport {
            var_id: var.clone(),
            magnitude,
            attribution,
            top_share,
        }))
    }
}

fn summarize(summary: PermanentSummary, carried: Option<f64>, samples: &[(Tick, f64)]) -> f64 {
    match summary {
        PermanentSummary::Depleting => {
            let start = carried.or_else(|| samples.first().map(|s| s.1));
            match (start, samples.last()) {
                (Some(s), Some(&(_, e))) => s - e,
                _ => 0.0,
            }
        }
        PermanentSummary::Mean => {
            if samples.is_empty() {
                carried.unwrap_or(0.0)
            } else {
                samples.iter().map(|s| s.1).sum::<f64>() / samples.len() as f64
            }
        }
    }
}

/// Largest peak-to-later-trough drop in a sample series.
fn largest_drop(samples: &[(Tick, f64)]) -> f64 {
    let mut peak = f64::NEG_INFINITY;
    let mut best = 0.0_f64;
    for &(_, v) in samples {
        peak = peak.max(v);
        best = best.max(peak - v);
    }
    best
}

fn attribute(events: &[&EventRecord], quorum: f64) -> (SpikeAttribution, f64) {
    let mut by_cause: BTreeMap<&str, f64> = BTreeMap::new();
    let mut total = 0.0;
    for e in events.iter().filter(|e| e.delta > 0.0) {
        total += e.delta;
        if let Some(c) = &e.cause {
            *by_cause.entry(c.as_str()).or_default() += e.delta;
        }
    }
    if total <= 0.0 {
        return (SpikeAttribution::Group, 0.0);
    }
    // ties resolve to the lexicographically first cause
    let top = by_cause
        .iter()
        .fold(None::<(&str, f64)>, |best, (&c, &v)| match best {
            Some((_, bv)) if bv >= v => best,
            _ => Some((c, v)),
        });
    match top {
        Some((cause, amount)) => {
            let share = amount / total;
            if share >= quorum {
                (SpikeAttribution::SingleSource(cause.to_string()), share)
            } else {
                (SpikeAttribution::Group, share)
            }
        }
        None => (SpikeAttribution::Group, 0.0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn deaths() -> TrackedVariable {
        TrackedVariable::event("deaths", Orientation::HigherIsHarder).with_reference(1.0)
    }

    fn health(interval: Tick) -> TrackedVariable {
        TrackedVariable::permanent(
            "health",
            Orientation::HigherIsEasier,
            interval,
            PermanentSummary::Depleting,
            (0.0, 100.0),
        )
        .with_attribution("damage")
    }

    #[test]
    fn register_issues_ids_and_rejects_duplicates() {
        let mut t = Telemetry::new();
        assert_eq!(t.register_variable(deaths()).unwrap(), VarId::new("deaths"));
        assert_eq!(
            t.register_variable(health(30)).unwrap(),
            VarId::new("health")
        );
        assert_eq!(
            t.register_variable(deaths()),
            Err(TelemetryError::Duplicate(VarId::new("deaths")))
        );
    }

    #[test]
    fn register_rejects_zero_interval_and_empty_name() {
        let mut t = Telemetry::new();
        assert!(matches!(
            t.register_variable(health(0)),
            Err(TelemetryError::ZeroInterval(_))
        ));
        let mut v = deaths();
        v.name = " ".into();
        assert_eq!(t.register_variable(v), Err(TelemetryError::EmptyName));
    }

    #[test]
    fn record_event_accumulates_and_checks_mode() {
        let mut t = Telemetry::new();
        t.register_variable(deaths()).unwrap();
        t.register_variable(health(30)).unwrap();
        t.record_event(&"deaths".into(), 1.0, 500, Some("orc#3"))
            .unwrap();
        let w = t.close_window(600, 600).unwrap();
        let d = w.iter().find(|w| w.var_id.as_str() == "deaths").unwrap();
        assert_eq!(d.count_or_delta, 1.0);
        assert_eq!(
            t.closed_events(&"deaths".into()).unwrap()[0]
                .cause
                .as_deref(),
            Some("orc#3")
        );
        assert!(matches!(
            t.record_event(&"health".into(), 1.0, 601, None),
            Err(TelemetryError::ModeMismatch { .. })
        ));
        assert!(matches!(
            t.record_event(&"nope".into(), 1.0, 601, None),
            Err(TelemetryError::Unknown(_))
        ));
    }

    #[test]
    fn three_wall_hits_count_three() {
        let mut t = Telemetry::new();
        t.register_variable(TrackedVariable::event(
            "wall_hits",
            Orientation::HigherIsHarder,
        ))
        .unwrap();
        for tick in [10, 20, 30] {
            t.record_event(&"wall_hits".into(), 1.0, tick, None)
                .unwrap();
        }
        let w = t.close_window(600, 600).unwrap();
        assert_eq!(w[0].count_or_delta, 3.0);
    }

    #[test]
    fn event_ticks_must_not_go_backwards() {
        let mut t = Telemetry::new();
        t.register_variable(deaths()).unwrap();
        t.record_event(&"deaths".into(), 1.0, 50, None).unwrap();
        assert!(matches!(
            t.record_event(&"deaths".into(), 1.0, 49, None),
            Err(TelemetryError::NonMonotonic { .. })
        ));
    }

    #[test]
    fn throttle_rule() {
        let mut t = Telemetry::new();
        t.register_variable(health(30)).unwrap();
        let h = VarId::new("health");
        let got: Vec<_> = [0, 10, 30]
            .iter()
            .map(|&tick| t.sample_permanent(&h, 100.0, tick).unwrap())
            .collect();
        assert_eq!(
            got,
            vec![
                SampleOutcome::Accepted,
                SampleOutcome::Throttled,
                SampleOutcome::Accepted
            ]
        );

        let mut t = Telemetry::new();
        t.register_variable(health(1)).unwrap();
        for tick in 0..20 {
            assert_eq!(
                t.sample_permanent(&h, 1.0, tick).unwrap(),
                SampleOutcome::Accepted
            );
        }
        assert!(matches!(
            t.sample_permanent(&"nope".into(), 1.0, 0),
            Err(TelemetryError::Unknown(_))
        ));
    }

    #[test]
    fn sample_on_event_variable_is_mode_mismatch() {
        let mut t = Telemetry::new();
        t.register_variable(deaths()).unwrap();
        assert!(matches!(
            t.sample_permanent(&"deaths".into(), 1.0, 0),
            Err(TelemetryError::ModeMismatch { .. })
        ));
    }

    #[test]
    fn health_series_accumulates_and_summarizes_as_delta() {
        let mut t = Telemetry::new();
        t.register_variable(health(30)).unwrap();
        let h = VarId::new("health");
        for (tick, v) in [(0, 100.0), (30, 80.0), (60, 40.0)] {
            t.sample_permanent(&h, v, tick).unwrap();
        }
        let w = t.close_window(600, 600).unwrap();
        assert_eq!(w[0].samples.len(), 3);
        // hand sum of consecutive drops: 20 + 40
        assert_eq!(w[0].count_or_delta, 60.0);

        // next window starts from the carried 40
        t.sample_permanent(&h, 10.0, 600).unwrap();
        t.sample_permanent(&h, 25.0, 630).unwrap();
        let w = t.close_window(1200, 600).unwrap();
        assert_eq!(w[0].count_or_delta, (40.0 - 10.0) + (10.0 - 25.0));
    }

    #[test]
    fn mean_summary() {
        let mut t = Telemetry::new();
        t.register_variable(TrackedVariable::permanent(
            "gold",
            Orientation::HigherIsEasier,
            1,
            PermanentSummary::Mean,
            (0.0, 1000.0),
        ))
        .unwrap();
        for (tick, v) in [(0, 10.0), (5, 20.0), (9, 60.0)] {
            t.sample_permanent(&"gold".into(), v, tick).unwrap();
        }
        let w = t.close_window(10, 10).unwrap();
        assert_eq!(w[0].count_or_delta, 30.0);
        let w = t.close_window(20, 10).unwrap();
        assert_eq!(w[0].count_or_delta, 60.0);
    }

    #[test]
    fn empty_window_and_early_close() {
        let mut t = Telemetry::new();
        t.register_variable(deaths()).unwrap();
        assert_eq!(
            t.close_window(599, 600),
            Err(TelemetryError::Early { remaining: 1 })
        );
        let w = t.close_window(600, 600).unwrap();
        assert_eq!(w[0].count_or_delta, 0.0);
        assert_eq!(w[0].window_len, 600);
        assert_eq!(t.close_window(1200, 0), Err(TelemetryError::ZeroWindow));
    }

    #[test]
    fn two_deaths_in_window() {
        let mut t = Telemetry::new();
        t.register_variable(deaths()).unwrap();
        t.record_event(&"deaths".into(), 1.0, 100, None).unwrap();
        t.record_event(&"deaths".into(), 1.0, 400, None).unwrap();
        let w = t.close_window(600, 600).unwrap();
        assert_eq!((w[0].count_or_delta, w[0].window_len), (2.0, 600));
        let w = t.close_window(1200, 600).unwrap();
        assert_eq!(w[0].count_or_delta, 0.0);
    }

    fn spike_fixture(hits: &[(&str, f64)]) -> (Telemetry, VariableWindow) {
        let mut t = Telemetry::new();
        t.register_variable(TrackedVariable::event(
            "damage",
            Orientation::HigherIsHarder,
        ))
        .unwrap();
        t.register_variable(health(1)).unwrap();
        let h = VarId::new("health");
        let mut hp = 100.0;
        t.sample_permanent(&h, hp, 0).unwrap();
        for (i, (cause, dmg)) in hits.iter().enumerate() {
            let tick = 10 * (i as Tick + 1);
            t.record_event(&"damage".into(), *dmg, tick, Some(cause))
                .unwrap();
            hp -= dmg;
            t.sample_permanent(&h, hp, tick).unwrap();
        }
        let w = t.close_window(600, 600).unwrap();
        let hw = w.into_iter().find(|w| w.var_id == h).unwrap();
        (t, hw)
    }

    #[test]
    fn flat_health_has_no_spike() {
        let (t, w) = spike_fixture(&[]);
        assert_eq!(
            t.detect_spike(&"health".into(), &w, 0.5, 0.8).unwrap(),
            None
        );
    }

    #[test]
    fn single_source_spike() {
        let (t, w) = spike_fixture(&[("orc#1", 40.0), ("imp#2", 10.0), ("orc#1", 30.0)]);
        let r = t
            .detect_spike(&"health".into(), &w, 0.5, 0.8)
            .unwrap()
            .unwrap();
        assert_eq!(r.magnitude, 80.0);
        assert_eq!(
            r.attribution,
            SpikeAttribution::SingleSource("orc#1".into())
        );
        assert!((r.top_share - 70.0 / 80.0).abs() < 1e-12);
    }

    #[test]
    fn group_spike() {
        let (t, w) = spike_fixture(&[("a", 20.0), ("b", 20.0), ("c", 20.0), ("d", 20.0)]);
        let r = t
            .detect_spike(&"health".into(), &w, 0.5, 0.8)
            .unwrap()
            .unwrap();
        assert_eq!(r.attribution, SpikeAttribution::Group);
        assert_eq!(r.top_share, 0.25);
    }

    #[test]
    fn spike_errors() {
        let (t, w) = spike_fixture(&[]);
        assert!(matches!(
            t.detect_spike(&"damage".into(), &w, 0.5, 0.8),
            Err(TelemetryError::ModeMismatch { .. })
        ));
        assert!(matches!(
            t.detect_spike(&"x".into(), &w, 0.5, 0.8),
            Err(TelemetryError::Unknown(_))
        ));
        assert!(t.detect_spike(&"health".into(), &w, 0.0, 0.8).is_err());
        assert!(t.detect_spike(&"health".into(), &w, 0.5, 0.4).is_err());
    }
}

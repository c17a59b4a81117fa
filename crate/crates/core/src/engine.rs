//! The DDA engine a host game embeds: telemetry in, assessments every
//! evaluation window, model-issued change requests out through the queue.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adjustment::{
    ChangeError, ChangeQueue, ChangeRequest, DrainContext, DrainOutcome, FactorId, FactorTable,
    QueuePolicy,
};
use crate::assessment::{
    evaluate, AssessmentConfig, AssessmentError, AssessmentReport, CumulativeRank, FlowBand,
};
use crate::models::dscript::{
    default_rulebase, DynamicScripting, DynamicScriptingSettings, EncounterLearning,
    EncounterResult, FitnessMode, Rule, RuleBase, Script, Tactic, WeightRegime,
};
use crate::models::metrics::{metrics_update, MetricsSettings, Multipliers, WeightMatrix};
use crate::models::probabilistic::{
    challenge_adjust, expected_outcome, survival_band_default, ChallengeSettings, Expectation,
    ExpectationSettings, PlayerState, ZoneSpec,
};
use crate::models::ModelError;
use crate::reference::ReferenceSet;
use crate::telemetry::{
    SpikeReport, Telemetry, TelemetryError, Tick, TrackedVariable, VarId, VariableWindow,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    #[default]
    Off,
    Metrics,
    Probabilistic,
    #[serde(rename = "dscript")]
    DynamicScripting,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [
        ModelKind::Off,
        ModelKind::Metrics,
        ModelKind::Probabilistic,
        ModelKind::DynamicScripting,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Off => "off",
            ModelKind::Metrics => "metrics",
            ModelKind::Probabilistic => "probabilistic",
            ModelKind::DynamicScripting => "dscript",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegimeKind {
    Clipping,
    TopCulling,
    Unbounded,
}

/// Which model runs, plus the dynamic-scripting overrides a caller may pick
/// per run. Unset overrides fall back to the scenario config.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ModelSelection {
    pub kind: ModelKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fitness: Option<FitnessMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regime: Option<RegimeKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adrenaline: Option<bool>,
}

impl ModelSelection {
    pub fn off() -> Self {
        Self::default()
    }

    pub fn of(kind: ModelKind) -> Self {
        ModelSelection {
            kind,
            ..Self::default()
        }
    }

    pub fn dscript(fitness: FitnessMode, regime: RegimeKind) -> Self {
        ModelSelection {
            kind: ModelKind::DynamicScripting,
            fitness: Some(fitness),
            regime: Some(regime),
            adrenaline: None,
        }
    }

    pub fn with_adrenaline(mut self, on: bool) -> Self {
        self.adrenaline = Some(on);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricsConfig {
    pub matrix: WeightMatrix,
    pub bounds: BTreeMap<FactorId, (f64, f64)>,
    #[serde(default)]
    pub settings: MetricsSettings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbabilisticConfig {
    #[serde(default)]
    pub expectation: ExpectationSettings,
    #[serde(default)]
    pub challenge: ChallengeSettings,
    #[serde(default = "survival_band_default")]
    pub band: FlowBand,
}

impl Default for ProbabilisticConfig {
    fn default() -> Self {
        ProbabilisticConfig {
            expectation: ExpectationSettings::default(),
            challenge: ChallengeSettings::default(),
            band: survival_band_default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DscriptConfig {
    #[serde(default)]
    pub settings: DynamicScriptingSettings,
    #[serde(default = "one")]
    pub initial_weight: f64,
    /// Custom rules per agent type; agent types not listed get the default rulebase.
    #[serde(default)]
    pub rulebases: BTreeMap<String, Vec<Rule>>,
}

fn one() -> f64 {
    1.0
}

impl Default for DscriptConfig {
    fn default() -> Self {
        DscriptConfig {
            settings: DynamicScriptingSettings::default(),
            initial_weight: 1.0,
            rulebases: BTreeMap::new(),
        }
    }
}

impl DscriptConfig {
    /// Cap on rule weights, shared by clipping and top culling.
    pub fn weight_cap(&self) -> f64 {
        match self.settings.regime {
            WeightRegime::Clipping { cap } | WeightRegime::TopCulling { cap } => cap,
            WeightRegime::Unbounded => 5.0 * self.initial_weight,
        }
    }

    pub fn regime(&self, kind: RegimeKind) -> WeightRegime {
        let cap = self.weight_cap();
        match kind {
            RegimeKind::Clipping => WeightRegime::Clipping { cap },
            RegimeKind::TopCulling => WeightRegime::TopCulling { cap },
            RegimeKind::Unbounded => WeightRegime::Unbounded,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpikeConfig {
    pub var: VarId,
    pub drop_fraction: f64,
    pub quorum: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    /// Ticks between assessments (X).
    pub evaluation_interval: Tick,
    pub variables: Vec<TrackedVariable>,
    #[serde(default)]
    pub assessment: AssessmentConfig,
    #[serde(default)]
    pub policy: QueuePolicy,
    #[serde(default)]
    pub metrics: MetricsConfig,
    #[serde(default)]
    pub probabilistic: ProbabilisticConfig,
    #[serde(default)]
    pub dscript: DscriptConfig,
    #[serde(default)]
    pub spike: Option<SpikeConfig>,
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Telemetry(#[from] TelemetryError),
    #[error(transparent)]
    Assessment(#[from] AssessmentError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Change(#[from] ChangeError),
    #[error("model `{0}` needs a reference set; run calibration first")]
    MissingReference(&'static str),
    #[error("engine config: {0}")]
    Config(String),
}

enum ModelState {
    Off,
    Metrics(Multipliers),
    Probabilistic,
    DynamicScripting(Box<DynamicScripting>),
}

/// Everything one evaluation step produced.
#[derive(Debug, Clone, Default)]
pub struct WindowOutput {
    pub windows: Vec<VariableWindow>,
    pub progress: BTreeMap<VarId, f64>,
    pub report: Option<AssessmentReport>,
    pub spike: Option<SpikeReport>,
    pub requests: Vec<ChangeRequest>,
}

pub struct Engine {
    config: EngineConfig,
    selection: ModelSelection,
    telemetry: Telemetry,
    references: Option<ReferenceSet>,
    rank: CumulativeRank,
    queue: ChangeQueue,
    model: ModelState,
    last_report: Option<AssessmentReport>,
}

impl Engine {
    pub fn new(
        config: EngineConfig,
        selection: ModelSelection,
        references: Option<ReferenceSet>,
        seed: u64,
    ) -> Result<Self, EngineError> {
        if config.evaluation_interval == 0 {
            return Err(EngineError::Config(
                "evaluation interval must be positive".into(),
            ));
        }
        config.policy.validate()?;
        let mut telemetry = Telemetry::new();
        for v in &config.variables {
            telemetry.register_variable(v.clone())?;
        }
        if selection.kind != ModelKind::Off && references.is_none() {
            return Err(EngineError::MissingReference(selection.kind.name()));
        }
        let model = match selection.kind {
            ModelKind::Off => ModelState::Off,
            ModelKind::Metrics => {
                config.metrics.matrix.validate()?;
                ModelState::Metrics(Multipliers::neutral(config.metrics.bounds.clone())?)
            }
            ModelKind::Probabilistic => ModelState::Probabilistic,
            ModelKind::DynamicScripting => {
                let d = &config.dscript;
                let mut settings = d.settings.clone();
                if let Some(f) = selection.fitness {
                    settings.fitness = f;
                }
                if let Some(r) = selection.regime {
                    settings.regime = d.regime(r);
                }
                if let Some(a) = selection.adrenaline {
                    settings.adrenaline = a;
                }
                let mut bases = Vec::new();
                for (agent, rules) in &d.rulebases {
                    bases.push(RuleBase::new(
                        agent.clone(),
                        rules.clone(),
                        0.05 * d.initial_weight,
                    )?);
                }
                ModelState::DynamicScripting(Box::new(DynamicScripting::new(
                    bases, settings, seed,
                )?))
            }
        };
        Ok(Engine {
            config,
            selection,
            telemetry,
            references,
            rank: CumulativeRank::default(),
            queue: ChangeQueue::new(),
            model,
            last_report: None,
        })
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn selection(&self) -> ModelSelection {
        self.selection
    }

    pub fn telemetry(&self) -> &Telemetry {
        &self.telemetry
    }

    pub fn telemetry_mut(&mut self) -> &mut Telemetry {
        &mut self.telemetry
    }

    pub fn queue(&self) -> &ChangeQueue {
        &self.queue
    }

    pub fn last_report(&self) -> Option<&AssessmentReport> {
        self.last_report.as_ref()
    }

    pub fn cumulative_rank(&self) -> CumulativeRank {
        self.rank
    }

    /// Current metrics multipliers, when the metrics model is active.
    pub fn multipliers(&self) -> Option<&Multipliers> {
        match &self.model {
            ModelState::Metrics(m) => Some(m),
            _ => None,
        }
    }

    /// Factors the active model may write, for checking against the host.
    pub fn required_factors(&self) -> Vec<FactorId> {
        match &self.model {
            ModelState::Off | ModelState::DynamicScripting(_) => Vec::new(),
            ModelState::Metrics(m) => m.values.keys().cloned().collect(),
            ModelState::Probabilistic => {
                let c = &self.config.probabilistic.challenge;
                vec![
                    c.damage_factor.clone(),
                    c.count_factor.clone(),
                    c.potion_event_factor.clone(),
                    c.crit_event_factor.clone(),
                ]
            }
        }
    }

    pub fn window_due(&self, now: Tick) -> bool {
        now.saturating_sub(self.telemetry.window_start()) >= self.config.evaluation_interval
    }

    /// Closes the window at `now`, assesses it when references are loaded,
    /// and lets the metrics model enqueue its requests.
    pub fn close_window(&mut self, now: Tick) -> Result<WindowOutput, EngineError> {
        let windows = self
            .telemetry
            .close_window(now, self.config.evaluation_interval)?;
        let progress: BTreeMap<VarId, f64> = self
            .telemetry
            .variables()
            .map(|v| (v.id.clone(), self.telemetry.progress(&v.id).unwrap_or(0.0)))
            .collect();
        let mut out = WindowOutput {
            windows,
            progress,
            ..WindowOutput::default()
        };
        if let Some(sc) = &self.config.spike {
            if let Some(w) = out.windows.iter().find(|w| w.var_id == sc.var) {
                out.spike = self
                    .telemetry
                    .detect_spike(&sc.var, w, sc.drop_fraction, sc.quorum)?;
            }
        }
        let Some(refs) = &self.references else {
            return Ok(out);
        };
        let variables: BTreeMap<VarId, TrackedVariable> = self
            .telemetry
            .variables()
            .map(|v| (v.id.clone(), v.clone()))
            .collect();
        let report = evaluate(
            &out.windows,
            &variables,
            &out.progress,
            refs,
            &self.config.assessment,
            &mut self.rank,
            now,
        )?;
        if let ModelState::Metrics(mults) = &mut self.model {
            let m = &self.config.metrics;
            let (next, reqs) = metrics_update(&report, &m.matrix, mults, &m.settings)?;
            *mults = next;
            out.requests = reqs;
        }
        for r in &out.requests {
            self.queue.enqueue(r.clone());
        }
        self.last_report = Some(report.clone());
        out.report = Some(report);
        Ok(out)
    }

    /// Estimates the upcoming zone and enqueues pre-adjustments. Only the
    /// probabilistic model acts here.
    pub fn prepare_zone(
        &mut self,
        zone: &ZoneSpec,
        health: f64,
        max_health: f64,
        now: Tick,
    ) -> Result<Option<(Expectation, Vec<ChangeRequest>)>, EngineError> {
        if !matches!(self.model, ModelState::Probabilistic) {
            return Ok(None);
        }
        let p = &self.config.probabilistic;
        let mut settings = p.expectation;
        settings.seed = crate::rng::derive(settings.seed, now);
        let expectation = expected_outcome(zone, &settings)?;
        let player = PlayerState {
            health,
            max_health,
            proficiency: self
                .last_report
                .as_ref()
                .map(|r| r.global_proficiency)
                .unwrap_or(0.5),
        };
        let requests = challenge_adjust(expectation.value, &player, &p.band, &p.challenge, now);
        for r in &requests {
            self.queue.enqueue(r.clone());
        }
        Ok(Some((expectation, requests)))
    }

    pub fn drain(
        &mut self,
        context: DrainContext,
        now: Tick,
        factors: &mut dyn FactorTable,
    ) -> DrainOutcome {
        if matches!(self.model, ModelState::Off) {
            return DrainOutcome::default();
        }
        self.queue.drain(context, now, &self.config.policy, factors)
    }

    pub fn stage_boundary(&mut self) {
        self.queue.reset_stage();
    }

    /// Picks a script for a newly spawned agent under dynamic scripting.
    pub fn spawn_agent(
        &mut self,
        agent_type: &str,
        agent: u64,
    ) -> Result<Option<(Script, Tactic)>, EngineError> {
        let ModelState::DynamicScripting(ds) = &mut self.model else {
            return Ok(None);
        };
        if !ds.rulebases.contains_key(agent_type) {
            let rb = default_rulebase(agent_type, self.config.dscript.initial_weight);
            rb.validate(Some(&ds.settings.regime))?;
            ds.rulebases.insert(agent_type.to_string(), rb);
        }
        Ok(Some(ds.spawn(agent_type, agent)?))
    }

    pub fn finish_encounter(
        &mut self,
        result: &EncounterResult,
    ) -> Result<Option<EncounterLearning>, EngineError> {
        let ModelState::DynamicScripting(ds) = &mut self.model else {
            return Ok(None);
        };
        Ok(Some(ds.finish_encounter(result)?))
    }

    pub fn learning_limit(&self) -> Option<f64> {
        match &self.model {
            ModelState::DynamicScripting(ds) => Some(ds.learning.learning_limit),
            _ => None,
        }
    }
}

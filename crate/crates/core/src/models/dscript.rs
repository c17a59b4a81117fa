//! Dynamic scripting: weighted rulebases per agent type, script generation
//! by weighted sampling without replacement, fitness-driven weight updates
//! with conservation of total weight, and the safeguards that keep the
//! learner from outgrowing the player (weight clipping, top culling,
//! adrenaline rush, difference-minimizing fitness).

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ModelError;

pub type RuleId = u32;

/// Behaviour modifiers a rule contributes to the agent running it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tactic {
    #[serde(default = "one")]
    pub damage_mult: f64,
    #[serde(default = "one")]
    pub interval_mult: f64,
    #[serde(default)]
    pub hit_bonus: f64,
    /// Chance to shrug off a player hit.
    #[serde(default)]
    pub guard: f64,
}

fn one() -> f64 {
    1.0
}

impl Default for Tactic {
    fn default() -> Self {
        Tactic {
            damage_mult: 1.0,
            interval_mult: 1.0,
            hit_bonus: 0.0,
            guard: 0.0,
        }
    }
}

impl Tactic {
    /// Folds several tactics into one: multipliers multiply, bonuses add,
    /// guards combine as independent chances.
    pub fn combine<'a>(tactics: impl IntoIterator<Item = &'a Tactic>) -> Tactic {
        tactics
            .into_iter()
            .fold(Tactic::default(), |acc, t| Tactic {
                damage_mult: acc.damage_mult * t.damage_mult,
                interval_mult: acc.interval_mult * t.interval_mult,
                hit_bonus: acc.hit_bonus + t.hit_bonus,
                guard: 1.0 - (1.0 - acc.guard) * (1.0 - t.guard),
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rule {
    pub id: RuleId,
    pub name: String,
    pub tactic: Tactic,
    pub weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WeightRegime {
    /// Weights never exceed `cap`.
    Clipping { cap: f64 },
    /// Weights grow freely; rules above `cap` are skipped during generation.
    TopCulling { cap: f64 },
    /// No cap at all. Baseline without safeguards.
    Unbounded,
}

impl WeightRegime {
    fn upper(&self) -> f64 {
        match *self {
            WeightRegime::Clipping { cap } => cap,
            _ => f64::INFINITY,
        }
    }

    pub fn selection_cap(&self) -> Option<f64> {
        match *self {
            WeightRegime::TopCulling { cap } => Some(cap),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleBase {
    pub agent_type: String,
    pub rules: Vec<Rule>,
    pub weight_floor: f64,
    pub total_weight: f64,
}

impl RuleBase {
    pub fn new(
        agent_type: impl Into<String>,
        rules: Vec<Rule>,
        weight_floor: f64,
    ) -> Result<Self, ModelError> {
        let total_weight = rules.iter().map(|r| r.weight).sum();
        let rb = RuleBase {
            agent_type: agent_type.into(),
            rules,
            weight_floor,
            total_weight,
        };
        rb.validate(None)?;
        Ok(rb)
    }

    pub fn validate(&self, regime: Option<&WeightRegime>) -> Result<(), ModelError> {
        if !(self.weight_floor > 0.0) {
            return Err(ModelError::Config("weight floor must be positive".into()));
        }
        if self.rules.is_empty() {
            return Err(ModelError::Config(format!(
                "rulebase {} is empty",
                self.agent_type
            )));
        }
        let mut ids: Vec<RuleId> = self.rules.iter().map(|r| r.id).collect();
        ids.sort_unstable();
        ids.dedup();
        if ids.len() != self.rules.len() {
            return Err(ModelError::Config("duplicate rule ids".into()));
        }
        let cap = regime.map(|r| r.upper()).unwrap_or(f64::INFINITY);
        for r in &self.rules {
            if !(r.weight >= self.weight_floor) || r.weight > cap {
                return Err(ModelError::Config(format!(
                    "rule {} weight {} outside [{}, {}]",
                    r.id, r.weight, self.weight_floor, cap
                )));
            }
        }
        Ok(())
    }

    pub fn weight_sum(&self) -> f64 {
        self.rules.iter().map(|r| r.weight).sum()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.rules.iter().map(|r| r.weight).collect()
    }

    pub fn rule(&self, id: RuleId) -> Option<&Rule> {
        self.rules.iter().find(|r| r.id == id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Script {
    pub agent: u64,
    pub agent_type: String,
    pub rules: Vec<RuleId>,
    pub seed: u64,
}

/// Draws `size` distinct rules, each draw proportional to the remaining
/// weights. Under top culling, over-cap rules are never candidates.
pub fn generate_script<R: Rng + ?Sized>(
    rulebase: &RuleBase,
    size: usize,
    regime: &WeightRegime,
    rng: &mut R,
) -> Result<Vec<RuleId>, ModelError> {
    let cap = regime.selection_cap();
    let mut pool: Vec<(RuleId, f64)> = rulebase
        .rules
        .iter()
        .filter(|r| cap.is_none_or(|c| r.weight <= c))
        .map(|r| (r.id, r.weight))
        .collect();
    if pool.len() < size {
        return Err(ModelError::NotEnoughRules {
            eligible: pool.len(),
            size,
        });
    }
    let mut picked = Vec::with_capacity(size);
    for _ in 0..size {
        let total: f64 = pool.iter().map(|p| p.1).sum();
        let mut target = rng.gen::<f64>() * total;
        let mut chosen = pool.len() - 1;
        for (i, p) in pool.iter().enumerate() {
            if target < p.1 {
                chosen = i;
                break;
            }
            target -= p.1;
        }
        picked.push(pool.swap_remove(chosen).0);
    }
    Ok(picked)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitnessMode {
    #[default]
    Maximize,
    /// Reward encounters where learner and player perform alike.
    DifferenceMin,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EncounterResult {
    /// Normalized learner (AI side) performance.
    pub ai: f64,
    /// Normalized player performance.
    pub player: f64,
    pub player_won: bool,
}

pub fn encounter_fitness(result: &EncounterResult, mode: FitnessMode) -> Result<f64, ModelError> {
    for v in [result.ai, result.player] {
        if !(0.0..=1.0).contains(&v) {
            return Err(ModelError::Domain(format!(
                "performance {v} outside [0, 1]"
            )));
        }
    }
    Ok(match mode {
        FitnessMode::Maximize => result.ai,
        FitnessMode::DifferenceMin => 1.0 - (result.ai - result.player).abs(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UpdateParams {
    pub break_even: f64,
    pub max_reward: f64,
    pub max_penalty: f64,
}

impl UpdateParams {
    pub fn for_initial_weight(w: f64) -> Self {
        UpdateParams {
            break_even: 0.5,
            max_reward: 0.3 * w,
            max_penalty: 0.3 * w,
        }
    }

    /// Raw weight change for in-script rules at `fitness`, before clamping.
    pub fn delta(&self, fitness: f64, learning_limit: f64) -> f64 {
        let b = self.break_even;
        if fitness >= b {
            learning_limit * self.max_reward * (fitness - b) / (1.0 - b)
        } else {
            -learning_limit * self.max_penalty * (b - fitness) / b
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LearningState {
    pub learning_limit: f64,
    pub prev_player_fitness: Option<f64>,
    /// Player fitness delta below which learning slows (P).
    pub threshold: f64,
    pub decay: f64,
    pub limit_floor: f64,
}

impl Default for LearningState {
    fn default() -> Self {
        LearningState {
            learning_limit: 1.0,
            prev_player_fitness: None,
            threshold: 0.05,
            decay: 0.9,
            limit_floor: 0.1,
        }
    }
}

/// Shrinks the learning limit once the player's fitness stops moving.
pub fn adrenaline_rush_step(
    learning: &LearningState,
    current_player_fitness: f64,
) -> LearningState {
    let mut next = *learning;
    if let Some(prev) = learning.prev_player_fitness {
        if (current_player_fitness - prev).abs() < learning.threshold {
            next.learning_limit =
                (learning.learning_limit * learning.decay).max(learning.limit_floor);
        }
    }
    next.prev_player_fitness = Some(current_player_fitness);
    next
}

/// Applies one fitness signal to the rules in `script`, then rebalances the
/// other rules so the total weight is unchanged and every weight stays in
/// `[floor, cap]`.
pub fn update_weights(
    rulebase: &mut RuleBase,
    script: &[RuleId],
    fitness: f64,
    params: &UpdateParams,
    learning: &LearningState,
    regime: &WeightRegime,
) -> Result<Vec<f64>, ModelError> {
    let b = params.break_even;
    if !(b > 0.0 && b < 1.0) {
        return Err(ModelError::Domain(format!("break-even {b} outside (0, 1)")));
    }
    if !(0.0..=1.0).contains(&fitness) {
        return Err(ModelError::Domain(format!(
            "fitness {fitness} outside [0, 1]"
        )));
    }
    if !(params.max_reward >= 0.0 && params.max_penalty >= 0.0) {
        return Err(ModelError::Domain(
            "reward and penalty must be non-negative".into(),
        ));
    }
    if !(learning.learning_limit > 0.0 && learning.learning_limit <= 1.0) {
        return Err(ModelError::Domain(format!(
            "learning limit {} outside (0, 1]",
            learning.learning_limit
        )));
    }
    for id in script {
        if rulebase.rule(*id).is_none() {
            return Err(ModelError::UnknownRule(*id));
        }
    }

    let floor = rulebase.weight_floor;
    let cap = regime.upper();
    let before = rulebase.weights();
    let total = rulebase.total_weight;
    let delta = params.delta(fitness, learning.learning_limit);
    let in_script: Vec<bool> = rulebase
        .rules
        .iter()
        .map(|r| script.contains(&r.id))
        .collect();

    let mut w = before.clone();
    for (wi, &s) in w.iter_mut().zip(&in_script) {
        if s {
            *wi = (*wi + delta).clamp(floor, cap);
        }
    }

    // Spread the surplus or deficit over out-of-script rules first; once
    // those saturate, the in-script rules absorb the rest.
    for _ in 0..(4 * w.len() + 8) {
        let residual = total - w.iter().sum::<f64>();
        if residual.abs() <= 1e-12 * total.max(1.0) {
            break;
        }
        let can_move = |x: f64| if residual > 0.0 { x < cap } else { x > floor };
        let mut free: Vec<usize> = (0..w.len())
            .filter(|&i| !in_script[i] && can_move(w[i]))
            .collect();
        if free.is_empty() {
            free = (0..w.len()).filter(|&i| can_move(w[i])).collect();
        }
        if free.is_empty() {
            break;
        }
        let share = residual / free.len() as f64;
        for i in free {
            w[i] = (w[i] + share).clamp(floor, cap);
        }
    }

    for (rule, wi) in rulebase.rules.iter_mut().zip(&w) {
        rule.weight = *wi;
    }
    Ok(w.iter().zip(&before).map(|(a, b)| a - b).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicScriptingSettings {
    pub script_size: usize,
    pub params: UpdateParams,
    pub regime: WeightRegime,
    pub fitness: FitnessMode,
    /// Enables the adrenaline rush learning-limit decay.
    pub adrenaline: bool,
    pub learning: LearningState,
}

impl Default for DynamicScriptingSettings {
    fn default() -> Self {
        DynamicScriptingSettings {
            script_size: 4,
            params: UpdateParams::for_initial_weight(1.0),
            regime: WeightRegime::Clipping { cap: 5.0 },
            fitness: FitnessMode::DifferenceMin,
            adrenaline: true,
            learning: LearningState::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncounterLearning {
    pub fitness: f64,
    pub player_fitness: f64,
    pub learning_limit: f64,
    pub weights: BTreeMap<String, Vec<f64>>,
}

/// Stateful learner owned by an engine: hands out scripts as agents spawn
/// and learns from each finished encounter.
#[derive(Debug, Clone)]
pub struct DynamicScripting {
    pub rulebases: BTreeMap<String, RuleBase>,
    pub settings: DynamicScriptingSettings,
    pub learning: LearningState,
    rng: ChaCha8Rng,
    active: Vec<Script>,
}

impl DynamicScripting {
    pub fn new(
        rulebases: Vec<RuleBase>,
        settings: DynamicScriptingSettings,
        seed: u64,
    ) -> Result<Self, ModelError> {
        let mut map = BTreeMap::new();
        for rb in rulebases {
            rb.validate(Some(&settings.regime))?;
            if rb.rules.len() < settings.script_size {
                return Err(ModelError::NotEnoughRules {
                    eligible: rb.rules.len(),
                    size: settings.script_size,
                });
            }
            map.insert(rb.agent_type.clone(), rb);
        }
        Ok(DynamicScripting {
            rulebases: map,
            learning: settings.learning,
            settings,
            rng: ChaCha8Rng::seed_from_u64(seed),
            active: Vec::new(),
        })
    }

    pub fn spawn(&mut self, agent_type: &str, agent: u64) -> Result<(Script, Tactic), ModelError> {
        let rb = self.rulebases.get(agent_type).ok_or_else(|| {
            ModelError::Config(format!("no rulebase for agent type {agent_type}"))
        })?;
        let seed: u64 = self.rng.gen();
        let mut local = ChaCha8Rng::seed_from_u64(seed);
        let rules = generate_script(
            rb,
            self.settings.script_size,
            &self.settings.regime,
            &mut local,
        )?;
        let tactic = Tactic::combine(
            rules
                .iter()
                .filter_map(|id| rb.rule(*id))
                .map(|r| &r.tactic),
        );
        let script = Script {
            agent,
            agent_type: agent_type.to_string(),
            rules,
            seed,
        };
        self.active.push(script.clone());
        Ok((script, tactic))
    }

    /// Scores the encounter and updates every rulebase that fielded a script.
    pub fn finish_encounter(
        &mut self,
        result: &EncounterResult,
    ) -> Result<EncounterLearning, ModelError> {
        let fitness = encounter_fitness(result, self.settings.fitness)?;
        let scripts = std::mem::take(&mut self.active);
        for script in &scripts {
            let rb = self
                .rulebases
                .get_mut(&script.agent_type)
                .expect("scripts only come from known rulebases");
            update_weights(
                rb,
                &script.rules,
                fitness,
                &self.settings.params,
                &self.learning,
                &self.settings.regime,
            )?;
        }
        if self.settings.adrenaline {
            self.learning = adrenaline_rush_step(&self.learning, result.player);
        }
        Ok(EncounterLearning {
            fitness,
            player_fitness: result.player,
            learning_limit: self.learning.learning_limit,
            weights: self
                .rulebases
                .iter()
                .map(|(k, rb)| (k.clone(), rb.weights()))
                .collect(),
        })
    }
}

/// Twelve melee tactics of uneven strength, all starting at `weight`.
pub fn default_rulebase(agent_type: &str, weight: f64) -> RuleBase {
    let t = |d: f64, i: f64, h: f64, g: f64| Tactic {
        damage_mult: d,
        interval_mult: i,
        hit_bonus: h,
        guard: g,
    };
    let rules = [
        ("heavy_strike", t(1.8, 1.0, 0.0, 0.0)),
        ("flurry", t(1.0, 0.55, 0.0, 0.0)),
        ("aimed_blow", t(1.0, 1.0, 0.35, 0.0)),
        ("shield_wall", t(1.0, 1.0, 0.0, 0.45)),
        ("feint", t(1.1, 1.0, 0.1, 0.05)),
        ("measured_pace", t(1.0, 1.0, 0.0, 0.0)),
        ("wild_swing", t(1.2, 1.0, -0.2, 0.0)),
        ("hesitate", t(1.0, 1.7, 0.0, 0.0)),
        ("taunt", t(0.6, 1.0, 0.0, 0.0)),
        ("overextend", t(1.0, 1.0, 0.0, -0.4)),
        ("flinch", t(0.8, 1.3, -0.15, 0.0)),
        ("posture", t(1.0, 1.0, -0.05, 0.0)),
    ];
    let rules = rules
        .into_iter()
        .enumerate()
        .map(|(i, (name, tactic))| Rule {
            id: i as RuleId,
            name: name.to_string(),
            tactic,
            weight,
        })
        .collect();
    RuleBase::new(agent_type, rules, 0.05 * weight).expect("default rulebase is valid")
}

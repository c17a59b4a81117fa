use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::SimError;
use crate::adjustment::{FactorId, QueuePolicy, Visibility};
use crate::assessment::AssessmentConfig;
use crate::engine::{DscriptConfig, EngineConfig, MetricsConfig, ProbabilisticConfig, SpikeConfig};
use crate::models::dscript::{
    DynamicScriptingSettings, FitnessMode, LearningState, UpdateParams, WeightRegime,
};
use crate::models::metrics::{MetricsSettings, SignalMode, WeightMatrix};
use crate::telemetry::{Orientation, PermanentSummary, Tick, TrackedVariable};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlayerConfig {
    pub max_hp: f64,
    pub damage: f64,
    pub crit_mult: f64,
    pub potion_heal: f64,
    pub start_potions: u32,
    pub max_potions: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnemyTemplate {
    pub agent_type: String,
    pub hp: f64,
    pub damage: f64,
    pub attack_interval: Tick,
    pub hit_prob: f64,
    pub count: u32,
}

/// Live parameter a factor writes to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FactorTarget {
    /// Scale on enemy damage.
    EnemyDamage,
    EnemyHp,
    EnemyCount,
    EnemyAttackInterval,
    EnemyHitProb,
    /// Absolute drop chance per enemy death.
    PotionDropProb,
    /// Absolute player crit chance.
    CritProb,
    /// One-shot: the next enemy death drops a potion.
    ForcePotionDrop,
    /// One-shot: the next player hit crits.
    ForceCrit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FactorTiming {
    /// Living units pick the new value up at once.
    Immediate,
    /// Only units spawned afterwards see it.
    OnSpawn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorSpec {
    pub target: FactorTarget,
    pub bounds: (f64, f64),
    pub initial: f64,
    pub timing: FactorTiming,
}

impl FactorSpec {
    pub fn new(
        target: FactorTarget,
        bounds: (f64, f64),
        initial: f64,
        timing: FactorTiming,
    ) -> Self {
        FactorSpec {
            target,
            bounds,
            initial,
            timing,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameConfig {
    pub ticks_per_second: u32,
    pub waves: u32,
    /// Break between a wave ending and the next spawning.
    pub wave_interval: Tick,
    /// Hard stop for the episode.
    pub max_ticks: Tick,
    /// Waves per stage; stage boundaries are scene changes. 0 disables stages.
    #[serde(default)]
    pub stage_waves: u32,
    pub player: PlayerConfig,
    /// Wave `i` uses entry `min(i, len - 1)`.
    pub enemies: Vec<EnemyTemplate>,
    pub potion_drop_prob: f64,
    pub crit_prob: f64,
    /// Attacks per enemy assumed when a wave is turned into a zone estimate.
    pub zone_attacks: u32,
    pub factors: BTreeMap<FactorId, FactorSpec>,
}

impl GameConfig {
    pub fn template(&self, wave: u32) -> &EnemyTemplate {
        let i = (wave as usize).min(self.enemies.len() - 1);
        &self.enemies[i]
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::Config(m));
        let prob = |p: f64| (0.0..=1.0).contains(&p);
        if self.enemies.is_empty() {
            return bad("at least one enemy template is required".into());
        }
        if self.ticks_per_second == 0 || self.wave_interval == 0 || self.max_ticks == 0 {
            return bad("ticks_per_second, wave_interval and max_ticks must be >= 1".into());
        }
        let p = &self.player;
        if !(p.max_hp > 0.0)
            || !(p.damage >= 0.0)
            || !(p.crit_mult >= 1.0)
            || !(p.potion_heal >= 0.0)
        {
            return bad("player stats out of range".into());
        }
        if !prob(self.potion_drop_prob) || !prob(self.crit_prob) {
            return bad("drop and crit probabilities must be in [0, 1]".into());
        }
        for (i, e) in self.enemies.iter().enumerate() {
            if !prob(e.hit_prob) || e.attack_interval == 0 || !(e.hp > 0.0) || !(e.damage >= 0.0) {
                return bad(format!("enemy template {i} out of range"));
            }
            if e.agent_type.is_empty() {
                return bad(format!("enemy template {i} has no agent type"));
            }
        }
        for (id, f) in &self.factors {
            let (lo, hi) = f.bounds;
            if !(lo <= f.initial && f.initial <= hi) {
                return bad(format!("factor {id}: initial {} outside bounds", f.initial));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub game: GameConfig,
    pub dda: EngineConfig,
}

impl Scenario {
    pub fn validate(&self) -> Result<(), SimError> {
        self.game.validate()
    }

    /// A built-in name or a path to a TOML or JSON scenario file.
    pub fn load(name_or_path: &str) -> Result<Self, SimError> {
        if let Some(s) = Self::builtin(name_or_path) {
            return Ok(s);
        }
        let path = Path::new(name_or_path);
        let text = std::fs::read_to_string(path)
            .map_err(|e| SimError::Config(format!("cannot read scenario {name_or_path}: {e}")))?;
        let scenario: Scenario = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| SimError::Config(e.to_string()))?
        } else {
            toml::from_str(&text).map_err(|e| SimError::Config(e.to_string()))?
        };
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn builtin(name: &str) -> Option<Self> {
        match name {
            "arena" => Some(arena()),
            "arena-hard" => Some(arena_hard()),
            "duel" => Some(duel()),
            _ => None,
        }
    }

    pub const BUILTINS: [&'static str; 3] = ["arena", "arena-hard", "duel"];
}

fn grunt(hp: f64, damage: f64, attack_interval: Tick, hit_prob: f64, count: u32) -> EnemyTemplate {
    EnemyTemplate {
        agent_type: "grunt".into(),
        hp,
        damage,
        attack_interval,
        hit_prob,
        count,
    }
}

fn arena_factors() -> BTreeMap<FactorId, FactorSpec> {
    use FactorTarget as T;
    use FactorTiming::*;
    [
        (
            "enemy_damage",
            FactorSpec::new(T::EnemyDamage, (0.1, 4.0), 1.0, Immediate),
        ),
        (
            "enemy_hp",
            FactorSpec::new(T::EnemyHp, (0.25, 4.0), 1.0, OnSpawn),
        ),
        (
            "enemy_count",
            FactorSpec::new(T::EnemyCount, (0.25, 3.0), 1.0, OnSpawn),
        ),
        (
            "enemy_attack_interval",
            FactorSpec::new(T::EnemyAttackInterval, (0.25, 4.0), 1.0, OnSpawn),
        ),
        (
            "enemy_hit_prob",
            FactorSpec::new(T::EnemyHitProb, (0.1, 2.0), 1.0, Immediate),
        ),
        (
            "potion_drop_prob",
            FactorSpec::new(T::PotionDropProb, (0.0, 1.0), 0.15, Immediate),
        ),
        (
            "crit_prob",
            FactorSpec::new(T::CritProb, (0.0, 1.0), 0.1, Immediate),
        ),
        (
            "force_potion_drop",
            FactorSpec::new(T::ForcePotionDrop, (0.0, 1.0), 0.0, Immediate),
        ),
        (
            "force_crit",
            FactorSpec::new(T::ForceCrit, (0.0, 1.0), 0.0, Immediate),
        ),
    ]
    .into_iter()
    .map(|(k, v)| (FactorId::new(k), v))
    .collect()
}

/// The five tracked variables of the arena, with spans sized so one
/// reference-level window scores 0.5 and a typical miss stays inside [0, 1].
pub fn arena_variables() -> Vec<TrackedVariable> {
    vec![
        TrackedVariable::event("deaths", Orientation::HigherIsHarder)
            .with_span(3.0)
            .without_performance(),
        TrackedVariable::event("damage_taken", Orientation::HigherIsHarder).with_span(240.0),
        TrackedVariable::event("wave_clear_time", Orientation::HigherIsHarder)
            .with_span(1200.0)
            .without_performance(),
        TrackedVariable::permanent(
            "health",
            Orientation::HigherIsEasier,
            30,
            PermanentSummary::Mean,
            (0.0, 100.0),
        )
        .with_span(120.0)
        .with_attribution("damage_taken"),
        TrackedVariable::event("potions_used", Orientation::HigherIsHarder)
            .with_span(4.0)
            .without_performance(),
    ]
}

fn arena_dda() -> EngineConfig {
    let mut assessment = AssessmentConfig {
        reference_difficulty: 0.5,
        ..AssessmentConfig::default()
    };
    assessment.weights = [
        ("damage_taken", 0.6),
        ("health", 0.1),
        ("deaths", 0.2),
        ("wave_clear_time", 0.0),
        ("potions_used", 0.1),
    ]
    .into_iter()
    .map(|(k, w)| (k.into(), w))
    .collect();
    let matrix = WeightMatrix::new(SignalMode::Threshold)
        .with("damage_taken", "enemy_damage", 0.06)
        .with("deaths", "enemy_damage", 0.03);
    EngineConfig {
        evaluation_interval: 600,
        variables: arena_variables(),
        assessment,
        policy: QueuePolicy::default(),
        metrics: MetricsConfig {
            matrix,
            bounds: [(FactorId::new("enemy_damage"), (0.2, 3.0))].into(),
            settings: MetricsSettings {
                visibility: [(FactorId::new("enemy_damage"), Visibility::SubtleAnytime)].into(),
                ..MetricsSettings::default()
            },
        },
        probabilistic: ProbabilisticConfig::default(),
        dscript: DscriptConfig::default(),
        spike: Some(SpikeConfig {
            var: "health".into(),
            drop_fraction: 0.3,
            quorum: 0.5,
        }),
    }
}

pub fn arena() -> Scenario {
    Scenario {
        name: "arena".into(),
        game: GameConfig {
            ticks_per_second: 60,
            waves: 1000,
            wave_interval: 180,
            max_ticks: 18_000,
            stage_waves: 5,
            player: PlayerConfig {
                max_hp: 100.0,
                damage: 10.0,
                crit_mult: 2.0,
                potion_heal: 35.0,
                start_potions: 1,
                max_potions: 3,
            },
            enemies: vec![grunt(30.0, 6.0, 90, 0.6, 2), grunt(30.0, 6.0, 90, 0.6, 3)],
            potion_drop_prob: 0.15,
            crit_prob: 0.1,
            zone_attacks: 3,
            factors: arena_factors(),
        },
        dda: arena_dda(),
    }
}

pub fn arena_hard() -> Scenario {
    let mut s = arena();
    s.name = "arena-hard".into();
    s.game.enemies = vec![grunt(36.0, 9.0, 80, 0.7, 3), grunt(36.0, 9.0, 80, 0.7, 4)];
    s
}

/// One enemy per encounter, 500 encounters, for rulebase learning.
pub fn duel() -> Scenario {
    let mut s = arena();
    s.name = "duel".into();
    s.game.waves = 500;
    s.game.max_ticks = 5_000_000;
    s.game.wave_interval = 120;
    s.game.stage_waves = 0;
    s.game.potion_drop_prob = 0.0;
    s.game.player.start_potions = 0;
    s.game.enemies = vec![grunt(60.0, 9.0, 60, 0.6, 1)];
    s.game.factors.insert(
        "potion_drop_prob".into(),
        FactorSpec::new(
            FactorTarget::PotionDropProb,
            (0.0, 1.0),
            0.0,
            FactorTiming::Immediate,
        ),
    );
    s.dda.dscript = DscriptConfig {
        settings: DynamicScriptingSettings {
            script_size: 4,
            params: UpdateParams {
                max_reward: 0.05,
                max_penalty: 0.05,
                ..UpdateParams::for_initial_weight(1.0)
            },
            regime: WeightRegime::Clipping { cap: 5.0 },
            fitness: FitnessMode::DifferenceMin,
            adrenaline: true,
            learning: LearningState {
                limit_floor: 0.05,
                ..LearningState::default()
            },
        },
        initial_weight: 1.0,
        rulebases: BTreeMap::new(),
    };
    s
}

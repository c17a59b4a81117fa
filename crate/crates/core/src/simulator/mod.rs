//! Deterministic wave-arena combat used as the engine's test bed.
//!
//! Combat is resolved by probability rolls without movement. Each tick the
//! enemies act in spawn order, then the player. A player death ends the
//! wave as a loss; the player respawns at full health for the next wave.

mod bot;
mod config;
mod trace;

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub use bot::{BotProfile, TargetPolicy};
pub use config::{
    arena, arena_hard, arena_variables, duel, EnemyTemplate, FactorSpec, FactorTarget,
    FactorTiming, GameConfig, PlayerConfig, Scenario,
};
pub use trace::{
    flow_occupancy, EpisodeSummary, EpisodeTrace, PotionKind, SpawnInfo, TraceRecord, TRACE_SCHEMA,
};

use crate::adjustment::{DrainContext, DrainOutcome, FactorError, FactorId, FactorTable};
use crate::engine::{Engine, EngineError, ModelSelection};
use crate::models::dscript::{EncounterResult, Tactic};
use crate::models::probabilistic::{survival_ratio, PlayerState, ZoneEnemy, ZoneSpec};
use crate::reference::ReferenceSet;
use crate::rng::{self, Stream};
use crate::telemetry::{SampleOutcome, Tick, VarId};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("config: {0}")]
    Config(String),
    #[error("model writes factors missing from the game registry: {0:?}")]
    FactorMismatch(Vec<FactorId>),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("trace: {0}")]
    Trace(String),
    #[error("trace schema {found:?} is not supported (expected {expected})")]
    Schema { found: Option<u64>, expected: u32 },
    #[error("io: {0}")]
    Io(String),
}

/// Live, bounds-checked game factors.
#[derive(Debug, Clone)]
pub struct Factors {
    specs: BTreeMap<FactorId, FactorSpec>,
    values: BTreeMap<FactorId, f64>,
}

impl Factors {
    pub fn new(specs: &BTreeMap<FactorId, FactorSpec>) -> Self {
        Factors {
            values: specs.iter().map(|(k, s)| (k.clone(), s.initial)).collect(),
            specs: specs.clone(),
        }
    }

    pub fn get(&self, id: &str) -> Option<f64> {
        self.values.get(&FactorId::new(id)).copied()
    }

    fn by_target(&self, target: FactorTarget) -> Option<(&FactorId, &FactorSpec)> {
        self.specs.iter().find(|(_, s)| s.target == target)
    }

    fn live(&self, target: FactorTarget) -> Option<f64> {
        self.by_target(target).map(|(id, _)| self.values[id])
    }

    fn timing(&self, target: FactorTarget) -> FactorTiming {
        self.by_target(target)
            .map(|(_, s)| s.timing)
            .unwrap_or(FactorTiming::OnSpawn)
    }

    /// Clears a one-shot flag after it fired.
    fn consume(&mut self, target: FactorTarget) -> bool {
        let Some((id, _)) = self.by_target(target) else {
            return false;
        };
        let id = id.clone();
        let v = self.values.get_mut(&id).expect("registered");
        let fired = *v >= 0.5;
        if fired {
            *v = 0.0;
        }
        fired
    }

    pub fn snapshot(&self) -> BTreeMap<FactorId, f64> {
        self.values.clone()
    }
}

impl FactorTable for Factors {
    fn value(&self, factor: &FactorId) -> Option<f64> {
        self.values.get(factor).copied()
    }

    fn apply(&mut self, factor: &FactorId, value: f64) -> Result<(), FactorError> {
        let spec = self
            .specs
            .get(factor)
            .ok_or_else(|| FactorError::Unknown(factor.clone()))?;
        let (min, max) = spec.bounds;
        if !(min..=max).contains(&value) {
            return Err(FactorError::OutOfBounds {
                factor: factor.clone(),
                value,
                min,
                max,
            });
        }
        self.values.insert(factor.clone(), value);
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Enemy {
    pub id: u64,
    pub agent_type: String,
    pub hp: f64,
    pub max_hp: f64,
    /// Damage before the live damage factor.
    pub damage: f64,
    pub attack_interval: Tick,
    pub cooldown: Tick,
    pub hit_prob: f64,
    pub guard: f64,
    spawn_damage_scale: f64,
    spawn_hit_scale: f64,
}

impl Enemy {
    pub fn name(&self) -> String {
        format!("{}#{}", self.agent_type, self.id)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Player {
    pub hp: f64,
    pub max_hp: f64,
    pub cooldown: Tick,
    pub potions: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Break {
        until: Tick,
    },
    Fighting {
        wave: u32,
        started: Tick,
    },
    /// The wave just ended; the host must call [`Arena::end_wave`].
    WaveOver {
        wave: u32,
        started: Tick,
        won: bool,
    },
    Done,
}

#[derive(Debug, Clone, PartialEq)]
pub enum GameEvent {
    Hit {
        attacker: String,
        target: String,
        amount: f64,
        crit: bool,
        to_player: bool,
    },
    Death {
        unit: String,
        by: String,
        player: bool,
    },
    PotionDrop,
    PotionUse {
        heal: f64,
    },
}

pub const PLAYER: &str = "player";

/// Game state plus its RNG streams. Knows nothing about the engine.
#[derive(Debug, Clone)]
pub struct Arena {
    pub config: GameConfig,
    pub bot: BotProfile,
    pub factors: Factors,
    pub enemies: Vec<Enemy>,
    pub player: Player,
    pub tick: Tick,
    pub phase: Phase,
    pub waves_played: u32,
    next_id: u64,
    player_rng: ChaCha8Rng,
    enemy_rng: ChaCha8Rng,
    drop_rng: ChaCha8Rng,
}

impl Arena {
    pub fn new(config: GameConfig, bot: BotProfile, seed: u64) -> Result<Self, SimError> {
        config.validate()?;
        bot.validate()?;
        let p = &config.player;
        let player = Player {
            hp: p.max_hp,
            max_hp: p.max_hp,
            cooldown: bot.attack_interval,
            potions: p.start_potions.min(p.max_potions),
        };
        Ok(Arena {
            factors: Factors::new(&config.factors),
            player,
            tick: 0,
            phase: Phase::Break { until: 0 },
            waves_played: 0,
            next_id: 1,
            enemies: Vec::new(),
            player_rng: rng::stream(seed, Stream::PlayerRolls),
            enemy_rng: rng::stream(seed, Stream::EnemyRolls),
            drop_rng: rng::stream(seed, Stream::Drops),
            config,
            bot,
        })
    }

    fn scale(&self, target: FactorTarget) -> f64 {
        self.factors.live(target).unwrap_or(1.0)
    }

    fn potion_drop_prob(&self) -> f64 {
        self.factors
            .live(FactorTarget::PotionDropProb)
            .unwrap_or(self.config.potion_drop_prob)
    }

    fn crit_prob(&self) -> f64 {
        self.factors
            .live(FactorTarget::CritProb)
            .unwrap_or(self.config.crit_prob)
    }

    pub fn apply_factor(&mut self, id: &str, value: f64) -> Result<(), FactorError> {
        self.factors.apply(&FactorId::new(id), value)
    }

    /// Enemy count the next wave would spawn with the current factors.
    pub fn wave_size(&self, wave: u32) -> u32 {
        let t = self.config.template(wave);
        if t.count == 0 {
            return 0;
        }
        ((t.count as f64 * self.scale(FactorTarget::EnemyCount)).round() as u32).max(1)
    }

    /// The next wave as the probabilistic model sees it.
    pub fn zone(&self, wave: u32) -> ZoneSpec {
        let t = self.config.template(wave);
        let damage = t.damage * self.scale(FactorTarget::EnemyDamage);
        let hit = (t.hit_prob * self.scale(FactorTarget::EnemyHitProb)).clamp(0.0, 1.0);
        let enemies = (0..self.wave_size(wave))
            .map(|i| {
                ZoneEnemy::hit_or_miss(
                    format!("{}#{i}", t.agent_type),
                    damage,
                    hit,
                    self.config.zone_attacks,
                )
            })
            .collect();
        ZoneSpec { enemies }
    }

    /// Spawns wave `wave`; `tactic` may attach a behaviour to each new agent.
    pub fn spawn_wave(
        &mut self,
        wave: u32,
        mut tactic: impl FnMut(&str, u64) -> Result<Option<Tactic>, SimError>,
    ) -> Result<Vec<SpawnInfo>, SimError> {
        let t = self.config.template(wave).clone();
        let count = self.wave_size(wave);
        let hp = t.hp * self.scale(FactorTarget::EnemyHp);
        let interval_scale = self.scale(FactorTarget::EnemyAttackInterval);
        let mut info = Vec::with_capacity(count as usize);
        for _ in 0..count {
            let id = self.next_id;
            self.next_id += 1;
            let tac = tactic(&t.agent_type, id)?.unwrap_or_default();
            let interval = ((t.attack_interval as f64 * interval_scale * tac.interval_mult).round()
                as Tick)
                .max(1);
            let e = Enemy {
                id,
                agent_type: t.agent_type.clone(),
                hp,
                max_hp: hp,
                damage: t.damage * tac.damage_mult,
                attack_interval: interval,
                cooldown: interval,
                hit_prob: (t.hit_prob + tac.hit_bonus).clamp(0.0, 1.0),
                guard: tac.guard.clamp(0.0, 1.0),
                spawn_damage_scale: self.scale(FactorTarget::EnemyDamage),
                spawn_hit_scale: self.scale(FactorTarget::EnemyHitProb),
            };
            info.push(SpawnInfo {
                id,
                agent_type: e.agent_type.clone(),
                hp,
                damage: e.damage * e.spawn_damage_scale,
                attack_interval: interval,
                hit_prob: (e.hit_prob * e.spawn_hit_scale).clamp(0.0, 1.0),
            });
            self.enemies.push(e);
        }
        self.player.cooldown = self.bot.attack_interval;
        self.phase = if self.enemies.is_empty() {
            Phase::WaveOver {
                wave,
                started: self.tick,
                won: true,
            }
        } else {
            Phase::Fighting {
                wave,
                started: self.tick,
            }
        };
        Ok(info)
    }

    fn enemy_damage(&self, e: &Enemy) -> f64 {
        let s = match self.factors.timing(FactorTarget::EnemyDamage) {
            FactorTiming::Immediate => self.scale(FactorTarget::EnemyDamage),
            FactorTiming::OnSpawn => e.spawn_damage_scale,
        };
        e.damage * s
    }

    fn enemy_hit(&self, e: &Enemy) -> f64 {
        let s = match self.factors.timing(FactorTarget::EnemyHitProb) {
            FactorTiming::Immediate => self.scale(FactorTarget::EnemyHitProb),
            FactorTiming::OnSpawn => e.spawn_hit_scale,
        };
        (e.hit_prob * s).clamp(0.0, 1.0)
    }

    /// Advances one tick. Outside a fight only the clock moves.
    pub fn step(&mut self) -> Vec<GameEvent> {
        self.tick += 1;
        let mut events = Vec::new();
        let Phase::Fighting { wave, started } = self.phase else {
            return events;
        };

        for i in 0..self.enemies.len() {
            let e = &mut self.enemies[i];
            e.cooldown -= 1;
            if e.cooldown > 0 {
                continue;
            }
            e.cooldown = e.attack_interval;
            let e = &self.enemies[i];
            let (hit_p, dmg, name) = (self.enemy_hit(e), self.enemy_damage(e), e.name());
            if self.enemy_rng.gen::<f64>() >= hit_p {
                continue;
            }
            if self.bot.evade_prob > 0.0 && self.enemy_rng.gen::<f64>() < self.bot.evade_prob {
                continue;
            }
            let amount = dmg.min(self.player.hp);
            self.player.hp -= amount;
            events.push(GameEvent::Hit {
                attacker: name.clone(),
                target: PLAYER.into(),
                amount,
                crit: false,
                to_player: true,
            });
            if self.player.hp <= 0.0 {
                events.push(GameEvent::Death {
                    unit: PLAYER.into(),
                    by: name,
                    player: true,
                });
                self.enemies.clear();
                self.phase = Phase::WaveOver {
                    wave,
                    started,
                    won: false,
                };
                return events;
            }
        }

        if !self.bot.passive {
            self.player.cooldown -= 1;
            if self.player.cooldown == 0 {
                self.player.cooldown = self.bot.attack_interval;
                self.player_attack(&mut events);
            }
            let p = &mut self.player;
            if p.potions > 0 && p.hp < self.bot.potion_use_threshold * p.max_hp {
                let heal = self.config.player.potion_heal.min(p.max_hp - p.hp);
                p.hp += heal;
                p.potions -= 1;
                events.push(GameEvent::PotionUse { heal });
            }
        }

        if self.enemies.is_empty() {
            self.phase = Phase::WaveOver {
                wave,
                started,
                won: true,
            };
        }
        events
    }

    fn player_attack(&mut self, events: &mut Vec<GameEvent>) {
        let target = match self.bot.target_policy {
            TargetPolicy::Oldest => 0,
            TargetPolicy::LowestHp => self
                .enemies
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.hp.total_cmp(&b.1.hp).then(a.1.id.cmp(&b.1.id)))
                .map(|(i, _)| i)
                .unwrap_or(0),
        };
        if self.player_rng.gen::<f64>() >= self.bot.accuracy {
            return;
        }
        let guard = self.enemies[target].guard;
        if guard > 0.0 && self.player_rng.gen::<f64>() < guard {
            return;
        }
        let crit = self.factors.consume(FactorTarget::ForceCrit)
            || self.player_rng.gen::<f64>() < self.crit_prob();
        let p = &self.config.player;
        let dmg = if crit {
            p.damage * p.crit_mult
        } else {
            p.damage
        };
        let e = &mut self.enemies[target];
        let amount = dmg.min(e.hp);
        e.hp -= amount;
        let name = e.name();
        events.push(GameEvent::Hit {
            attacker: PLAYER.into(),
            target: name.clone(),
            amount,
            crit,
            to_player: false,
        });
        if e.hp > 0.0 {
            return;
        }
        self.enemies.remove(target);
        events.push(GameEvent::Death {
            unit: name,
            by: PLAYER.into(),
            player: false,
        });
        let forced = self.factors.consume(FactorTarget::ForcePotionDrop);
        if forced || self.drop_rng.gen::<f64>() < self.potion_drop_prob() {
            self.player.potions = (self.player.potions + 1).min(self.config.player.max_potions);
            events.push(GameEvent::PotionDrop);
        }
    }

    /// Closes a finished wave: respawns a dead player and schedules the
    /// next wave. Returns `(wave, started, won, respawn_heal)`.
    pub fn end_wave(&mut self) -> Option<(u32, Tick, bool, f64)> {
        let Phase::WaveOver { wave, started, won } = self.phase else {
            return None;
        };
        let mut heal = 0.0;
        if !won {
            heal = self.player.max_hp - self.player.hp;
            self.player.hp = self.player.max_hp;
        }
        self.waves_played += 1;
        self.phase = if self.waves_played >= self.config.waves {
            Phase::Done
        } else {
            Phase::Break {
                until: self.tick + self.config.wave_interval,
            }
        };
        Some((wave, started, won, heal))
    }
}

struct Episode<'a> {
    arena: Arena,
    engine: Engine,
    records: Vec<TraceRecord>,
    summary: EpisodeSummary,
    var_ids: BTreeMap<&'a str, VarId>,
    wave_damage_to_player: f64,
    wave_damage_to_enemies: f64,
    wave_enemy_hp: f64,
}

impl Episode<'_> {
    fn feed(&mut self, var: &str, delta: f64, cause: Option<&str>) -> Result<(), SimError> {
        let Some(id) = self.var_ids.get(var) else {
            return Ok(());
        };
        let tick = self.arena.tick;
        self.engine
            .telemetry_mut()
            .record_event(id, delta, tick, cause)
            .map_err(EngineError::from)?;
        self.records.push(TraceRecord::Telemetry {
            tick,
            var: id.clone(),
            value: delta,
            cause: cause.map(str::to_string),
        });
        Ok(())
    }

    fn sample_health(&mut self) -> Result<(), SimError> {
        let Some(id) = self.var_ids.get("health") else {
            return Ok(());
        };
        let (tick, hp) = (self.arena.tick, self.arena.player.hp);
        let outcome = self
            .engine
            .telemetry_mut()
            .sample_permanent(id, hp, tick)
            .map_err(EngineError::from)?;
        if outcome == SampleOutcome::Accepted {
            self.records.push(TraceRecord::Telemetry {
                tick,
                var: id.clone(),
                value: hp,
                cause: None,
            });
        }
        Ok(())
    }

    fn drain(&mut self, context: DrainContext, tick: Tick) {
        let DrainOutcome {
            applied, dropped, ..
        } = self.engine.drain(context, tick, &mut self.arena.factors);
        self.summary.applied_changes += applied.len() as u32;
        self.records.extend(
            applied
                .into_iter()
                .map(|change| TraceRecord::Applied { context, change }),
        );
        self.records.extend(
            dropped
                .into_iter()
                .map(|change| TraceRecord::Dropped { context, change }),
        );
    }

    /// Closes the window ending at `tick`, before that tick's events.
    fn close_window(&mut self, tick: Tick) -> Result<(), SimError> {
        let out = self.engine.close_window(tick)?;
        self.summary.windows += 1;
        self.records.push(TraceRecord::Window {
            tick,
            n: out
                .windows
                .iter()
                .map(|w| (w.var_id.clone(), w.count_or_delta))
                .collect(),
            progress: out.progress,
        });
        if let Some(report) = out.report {
            self.records.push(TraceRecord::Assessment {
                report: Box::new(report),
            });
        }
        if let Some(report) = out.spike {
            self.records.push(TraceRecord::Spike { tick, report });
        }
        for request in out.requests {
            self.records.push(TraceRecord::Enqueued { request });
        }
        self.drain(DrainContext::SubtleWindow, tick);
        Ok(())
    }

    fn start_wave(&mut self) -> Result<(), SimError> {
        let wave = self.arena.waves_played;
        let tick = self.arena.tick;
        let zone = self.arena.zone(wave);
        let (hp, max) = (self.arena.player.hp, self.arena.player.max_hp);
        if let Some((exp, requests)) = self.engine.prepare_zone(&zone, hp, max, tick)? {
            let player = PlayerState {
                health: hp,
                max_health: max,
                proficiency: 0.0,
            };
            self.records.push(TraceRecord::Expectation {
                tick,
                wave,
                value: exp.value,
                method: exp.method,
                survival_ratio: survival_ratio(exp.value, &player),
            });
            for request in requests {
                self.records.push(TraceRecord::Enqueued { request });
            }
            self.drain(DrainContext::UnseenZone, tick);
        }
        let mut scripts = Vec::new();
        let engine = &mut self.engine;
        let enemies = self.arena.spawn_wave(wave, |agent_type, id| {
            Ok(engine.spawn_agent(agent_type, id)?.map(|(script, tactic)| {
                scripts.push(script);
                tactic
            }))
        })?;
        self.wave_damage_to_player = 0.0;
        self.wave_damage_to_enemies = 0.0;
        self.wave_enemy_hp = enemies.iter().map(|e| e.hp).sum();
        self.records.push(TraceRecord::WaveStart {
            tick,
            wave,
            enemies,
        });
        for s in scripts {
            self.records.push(TraceRecord::Script {
                tick,
                agent: s.agent,
                agent_type: s.agent_type,
                rules: s.rules,
                seed: s.seed,
            });
        }
        Ok(())
    }

    fn handle(&mut self, event: GameEvent) -> Result<(), SimError> {
        let tick = self.arena.tick;
        match event {
            GameEvent::Hit {
                attacker,
                target,
                amount,
                crit,
                to_player,
            } => {
                if to_player {
                    self.summary.damage_taken += amount;
                    self.wave_damage_to_player += amount;
                } else {
                    self.wave_damage_to_enemies += amount;
                }
                self.records.push(TraceRecord::Hit {
                    tick,
                    attacker: attacker.clone(),
                    target,
                    amount,
                    crit,
                });
                if to_player {
                    self.feed("damage_taken", amount, Some(&attacker))?;
                }
            }
            GameEvent::Death { unit, by, player } => {
                self.records.push(TraceRecord::Death {
                    tick,
                    unit,
                    by: by.clone(),
                });
                if player {
                    self.summary.deaths += 1;
                    self.feed("deaths", 1.0, Some(&by))?;
                }
            }
            GameEvent::PotionDrop => self.records.push(TraceRecord::Potion {
                tick,
                kind: PotionKind::Drop,
                heal: 0.0,
            }),
            GameEvent::PotionUse { heal } => {
                self.summary.potions_used += 1;
                self.summary.potion_healing += heal;
                self.records.push(TraceRecord::Potion {
                    tick,
                    kind: PotionKind::Use,
                    heal,
                });
                self.feed("potions_used", 1.0, None)?;
            }
        }
        Ok(())
    }

    fn finish_wave(&mut self) -> Result<(), SimError> {
        let Some((wave, started, won, heal)) = self.arena.end_wave() else {
            return Ok(());
        };
        let tick = self.arena.tick;
        let duration = tick - started;
        self.records.push(TraceRecord::WaveEnd {
            tick,
            wave,
            won,
            duration,
        });
        self.summary.waves_played += 1;
        if won {
            self.summary.waves_won += 1;
            self.feed("wave_clear_time", duration as f64, None)?;
        } else {
            self.summary.respawn_healing += heal;
            self.records.push(TraceRecord::Respawn { tick, heal });
        }
        let max_hp = self.arena.player.max_hp;
        let result = EncounterResult {
            ai: if won {
                (self.wave_damage_to_player / max_hp).min(1.0)
            } else {
                1.0
            },
            player: if won || self.wave_enemy_hp <= 0.0 {
                1.0
            } else {
                (self.wave_damage_to_enemies / self.wave_enemy_hp).min(1.0)
            },
            player_won: won,
        };
        if let Some(learning) = self.engine.finish_encounter(&result)? {
            self.records.push(TraceRecord::Learning {
                tick,
                encounter: wave,
                result,
                learning,
            });
        }
        let context = if won {
            DrainContext::UnseenZone
        } else {
            DrainContext::PlayerDead
        };
        self.drain(context, tick);
        let stage = self.arena.config.stage_waves;
        if stage > 0 && self.arena.waves_played.is_multiple_of(stage) {
            self.drain(DrainContext::SceneChange, tick);
            self.engine.stage_boundary();
        }
        Ok(())
    }
}

/// Plays one seeded episode. With no reference set, windows are still
/// closed and logged (calibration needs them) but nothing is assessed.
pub fn run_episode(
    scenario: &Scenario,
    bot: &BotProfile,
    selection: ModelSelection,
    reference: Option<&ReferenceSet>,
    seed: u64,
) -> Result<EpisodeTrace, SimError> {
    scenario.validate()?;
    let arena = Arena::new(scenario.game.clone(), bot.clone(), seed)?;
    let engine = Engine::new(
        scenario.dda.clone(),
        selection,
        reference.cloned(),
        rng::derive(seed, Stream::Scripts as u64),
    )?;
    let missing: Vec<FactorId> = engine
        .required_factors()
        .into_iter()
        .filter(|f| !scenario.game.factors.contains_key(f))
        .collect();
    if !missing.is_empty() {
        return Err(SimError::FactorMismatch(missing));
    }
    let var_ids = [
        "deaths",
        "damage_taken",
        "wave_clear_time",
        "health",
        "potions_used",
    ]
    .into_iter()
    .filter_map(|v| {
        let id = VarId::new(v);
        engine.telemetry().variable(&id).map(|_| (v, id))
    })
    .collect();

    let mut ep = Episode {
        arena,
        engine,
        records: Vec::new(),
        summary: EpisodeSummary::default(),
        var_ids,
        wave_damage_to_player: 0.0,
        wave_damage_to_enemies: 0.0,
        wave_enemy_hp: 0.0,
    };

    ep.sample_health()?;
    let initial = ep
        .engine
        .telemetry()
        .variables()
        .map(|v| {
            (
                v.id.clone(),
                ep.engine.telemetry().progress(&v.id).unwrap_or(0.0),
            )
        })
        .collect();
    let sample = std::mem::take(&mut ep.records);
    ep.records.push(TraceRecord::Header {
        schema: TRACE_SCHEMA,
        seed,
        scenario: Box::new(scenario.clone()),
        bot: bot.clone(),
        model: selection,
        reference: reference.is_some(),
        initial,
    });
    ep.records.extend(sample);
    ep.start_wave()?;

    let max_ticks = scenario.game.max_ticks;
    loop {
        if ep.arena.phase == Phase::Done || ep.arena.tick >= max_ticks {
            break;
        }
        let next = ep.arena.tick + 1;
        if ep.engine.window_due(next) {
            ep.close_window(next)?;
        }
        for event in ep.arena.step() {
            ep.handle(event)?;
        }
        if matches!(ep.arena.phase, Phase::WaveOver { .. }) {
            ep.finish_wave()?;
        }
        if let Phase::Break { until } = ep.arena.phase {
            if ep.arena.tick >= until {
                ep.start_wave()?;
            }
        }
        ep.sample_health()?;
    }

    let reports: Vec<_> = ep
        .records
        .iter()
        .filter_map(|r| match r {
            TraceRecord::Assessment { report } => Some(report.as_ref()),
            _ => None,
        })
        .collect();
    let band = &scenario.dda.assessment.difficulty_band;
    ep.summary.flow_occupancy = flow_occupancy(reports.iter().copied(), band, 0);
    let perfs: Vec<f64> = reports.iter().filter_map(|r| r.mean_performance).collect();
    if !perfs.is_empty() {
        ep.summary.mean_performance = Some(perfs.iter().sum::<f64>() / perfs.len() as f64);
    }
    if !reports.is_empty() {
        ep.summary.cumulative_rank = Some(ep.engine.cumulative_rank().sum);
    }
    ep.summary.ticks = ep.arena.tick;
    ep.summary.final_hp = ep.arena.player.hp;
    let summary = ep.summary.clone();
    ep.records.push(TraceRecord::Outcome { summary });
    Ok(EpisodeTrace {
        records: ep.records,
    })
}

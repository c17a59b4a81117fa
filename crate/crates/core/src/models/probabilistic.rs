//! Probabilistic pre-adjustment: estimate the damage a zone will deal before
//! the player enters it, then scale the zone so the player is expected to
//! leave it with a healthy but not untouched health bar.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::adjustment::{ChangeOp, ChangeRequest, FactorId, Visibility};
use crate::assessment::FlowBand;
use crate::telemetry::Tick;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub damage: f64,
    pub prob: f64,
}

/// One attacker: `attacks` independent draws from `outcomes`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZoneEnemy {
    pub tag: String,
    pub attacks: u32,
    pub outcomes: Vec<Outcome>,
}

impl ZoneEnemy {
    pub fn hit_or_miss(tag: impl Into<String>, damage: f64, hit_prob: f64, attacks: u32) -> Self {
        ZoneEnemy {
            tag: tag.into(),
            attacks,
            outcomes: vec![
                Outcome {
                    damage: 0.0,
                    prob: 1.0 - hit_prob,
                },
                Outcome {
                    damage,
                    prob: hit_prob,
                },
            ],
        }
    }

    /// Miss / hit / critical hit.
    pub fn with_crit(
        tag: impl Into<String>,
        damage: f64,
        hit_prob: f64,
        crit_prob: f64,
        crit_multiplier: f64,
        attacks: u32,
    ) -> Self {
        ZoneEnemy {
            tag: tag.into(),
            attacks,
            outcomes: vec![
                Outcome {
                    damage: 0.0,
                    prob: 1.0 - hit_prob,
                },
                Outcome {
                    damage,
                    prob: hit_prob * (1.0 - crit_prob),
                },
                Outcome {
                    damage: damage * crit_multiplier,
                    prob: hit_prob * crit_prob,
                },
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ZoneSpec {
    pub enemies: Vec<ZoneEnemy>,
}

impl ZoneSpec {
    pub fn validate(&self) -> Result<(), ModelError> {
        for e in &self.enemies {
            if e.outcomes.is_empty() {
                return Err(ModelError::Probability(format!("{}: no outcomes", e.tag)));
            }
            let mut sum = 0.0;
            for o in &e.outcomes {
                if !(0.0..=1.0).contains(&o.prob) || !o.damage.is_finite() {
                    return Err(ModelError::Probability(format!(
                        "{}: invalid outcome {:?}",
                        e.tag, o
                    )));
                }
                sum += o.prob;
            }
            if (sum - 1.0).abs() > 1e-9 {
                return Err(ModelError::Probability(format!(
                    "{}: outcome probabilities sum to {sum}",
                    e.tag
                )));
            }
        }
        Ok(())
    }

    /// Number of joint outcomes, saturating at `u64::MAX`.
    pub fn joint_outcomes(&self) -> u64 {
        self.enemies.iter().fold(1u64, |acc, e| {
            (0..e.attacks).fold(acc, |a, _| a.saturating_mul(e.outcomes.len() as u64))
        })
    }

    fn draws(&self) -> Vec<&[Outcome]> {
        self.enemies
            .iter()
            .flat_map(|e| std::iter::repeat_n(e.outcomes.as_slice(), e.attacks as usize))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpectationSettings {
    /// Largest joint outcome count solved by enumeration.
    pub enumeration_cap: u64,
    pub monte_carlo_samples: u64,
    pub seed: u64,
}

impl Default for ExpectationSettings {
    fn default() -> Self {
        ExpectationSettings {
            enumeration_cap: 1_000_000,
            monte_carlo_samples: 20_000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExpectationMethod {
    Enumeration,
    MonteCarlo { n: u64, stderr: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Expectation {
    pub value: f64,
    pub method: ExpectationMethod,
}

/// Neumaier compensated sum.
#[derive(Default)]
struct Accum {
    sum: f64,
    comp: f64,
}

impl Accum {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn total(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Expected total damage over the zone.
pub fn expected_outcome(
    zone: &ZoneSpec,
    settings: &ExpectationSettings,
) -> Result<Expectation, ModelError> {
    zone.validate()?;
    let draws = zone.draws();
    if draws.is_empty() {
        return Ok(Expectation {
            value: 0.0,
            method: ExpectationMethod::Enumeration,
        });
    }
    if zone.joint_outcomes() <= settings.enumeration_cap {
        return Ok(Expectation {
            value: enumerate(&draws),
            method: ExpectationMethod::Enumeration,
        });
    }
    monte_carlo(&draws, settings.monte_carlo_samples, settings.seed)
}

/// Walks every joint outcome with a mixed-radix counter.
fn enumerate(draws: &[&[Outcome]]) -> f64 {
    let mut idx = vec![0usize; draws.len()];
    let mut acc = Accum::default();
    loop {
        let mut p = 1.0;
        let mut v = 0.0;
        for (d, &i) in draws.iter().zip(&idx) {
            p *= d[i].prob;
            v += d[i].damage;
        }
        acc.add(p * v);
        let mut pos = 0;
        loop {
            if pos == idx.len() {
                return acc.total();
            }
            idx[pos] += 1;
            if idx[pos] < draws[pos].len() {
                break;
            }
            idx[pos] = 0;
            pos += 1;
        }
    }
}

pub fn monte_carlo(draws: &[&[Outcome]], n: u64, seed: u64) -> Result<Expectation, ModelError> {
    if n == 0 {
        return Err(ModelError::Config(
            "monte carlo needs at least one sample".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sum = Accum::default();
    let mut sum_sq = Accum::default();
    for _ in 0..n {
        let mut total = 0.0;
        for d in draws {
            let u: f64 = rng.gen();
            let mut c = 0.0;
            let mut pick = d[d.len() - 1].damage;
            for o in d.iter() {
                c += o.prob;
                if u < c {
                    pick = o.damage;
                    break;
                }
            }
            total += pick;
        }
        sum.add(total);
        sum_sq.add(total * total);
    }
    let nf = n as f64;
    let mean = sum.total() / nf;
    let var = if n > 1 {
        ((sum_sq.total() - nf * mean * mean) / (nf - 1.0)).max(0.0)
    } else {
        0.0
    };
    Ok(Expectation {
        value: mean,
        method: ExpectationMethod::MonteCarlo {
            n,
            stderr: (var / nf).sqrt(),
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlayerState {
    pub health: f64,
    pub max_health: f64,
    /// Global proficiency in [0, 1].
    pub proficiency: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChallengeSettings {
    /// Fractional scale change per unit of survival-ratio error.
    pub gain: f64,
    pub max_step: f64,
    pub damage_factor: FactorId,
    pub count_factor: FactorId,
    pub scale_bounds: (f64, f64),
    pub potion_event_factor: FactorId,
    pub crit_event_factor: FactorId,
    pub low_proficiency: f64,
    pub high_proficiency: f64,
}

impl Default for ChallengeSettings {
    fn default() -> Self {
        ChallengeSettings {
            gain: 1.0,
            max_step: 0.5,
            damage_factor: "enemy_damage".into(),
            count_factor: "enemy_count".into(),
            scale_bounds: (0.25, 3.0),
            potion_event_factor: "force_potion_drop".into(),
            crit_event_factor: "force_crit".into(),
            low_proficiency: 0.4,
            high_proficiency: 0.6,
        }
    }
}

/// Default band on the survival ratio: leave the zone with 15%-35% health.
pub fn survival_band_default() -> FlowBand {
    FlowBand {
        target: 0.25,
        margin: 0.1,
        semantics: crate::assessment::BandSemantics::RatioCentered,
    }
}

/// Fraction of max health the player is expected to keep through the zone.
pub fn survival_ratio(expected: f64, player: &PlayerState) -> f64 {
    (player.health - expected) / player.max_health
}

pub fn challenge_adjust(
    expected: f64,
    player: &PlayerState,
    band: &FlowBand,
    settings: &ChallengeSettings,
    tick: Tick,
) -> Vec<ChangeRequest> {
    let r = survival_ratio(expected, player);
    let mut out = Vec::new();
    let scale = if r < band.lower() {
        (1.0 - settings.gain * (band.lower() - r)).max(1.0 - settings.max_step)
    } else if r > band.upper() {
        (1.0 + settings.gain * (r - band.upper())).min(1.0 + settings.max_step)
    } else {
        return out;
    };
    for factor in [&settings.damage_factor, &settings.count_factor] {
        out.push(ChangeRequest {
            tag: format!("prob:{factor}"),
            factor: factor.clone(),
            change: ChangeOp::Multiplicative(scale),
            bounds: settings.scale_bounds,
            visibility: Visibility::UnseenZone,
            issued_tick: tick,
        });
    }
    if r < band.lower() && player.proficiency <= settings.low_proficiency {
        out.push(event(&settings.potion_event_factor, "prob:potion", tick));
    }
    if r > band.upper()
        && player.health >= player.max_health
        && player.proficiency >= settings.high_proficiency
    {
        out.push(event(&settings.crit_event_factor, "prob:crit", tick));
    }
    out
}

fn event(factor: &FactorId, tag: &str, tick: Tick) -> ChangeRequest {
    ChangeRequest {
        tag: tag.to_string(),
        factor: factor.clone(),
        change: ChangeOp::Set(1.0),
        bounds: (0.0, 1.0),
        visibility: Visibility::UnseenZone,
        issued_tick: tick,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_coin_flip_enemies() {
        let zone = ZoneSpec {
            enemies: vec![
                ZoneEnemy::hit_or_miss("a", 10.0, 0.5, 1),
                ZoneEnemy::hit_or_miss("b", 10.0, 0.5, 1),
            ],
        };
        let e = expected_outcome(&zone, &ExpectationSettings::default()).unwrap();
        assert_eq!(e.value, 10.0);
        assert_eq!(e.method, ExpectationMethod::Enumeration);
    }

    #[test]
    fn empty_zone() {
        let e = expected_outcome(&ZoneSpec::default(), &ExpectationSettings::default()).unwrap();
        assert_eq!(e.value, 0.0);
    }

    #[test]
    fn bad_probabilities_rejected() {
        let mut enemy = ZoneEnemy::hit_or_miss("a", 10.0, 0.5, 1);
        enemy.outcomes[0].prob = 0.6;
        let zone = ZoneSpec {
            enemies: vec![enemy],
        };
        assert!(matches!(
            expected_outcome(&zone, &ExpectationSettings::default()),
            Err(ModelError::Probability(_))
        ));
    }

    #[test]
    fn falls_back_to_monte_carlo_over_cap() {
        let zone = ZoneSpec {
            enemies: vec![ZoneEnemy::hit_or_miss("a", 4.0, 0.25, 30)],
        };
        let e = expected_outcome(
            &zone,
            &ExpectationSettings {
                enumeration_cap: 1000,
                monte_carlo_samples: 200_000,
                seed: 3,
            },
        )
        .unwrap();
        let ExpectationMethod::MonteCarlo { n, stderr } = e.method else {
            panic!("expected monte carlo");
        };
        assert_eq!(n, 200_000);
        assert!((e.value - 30.0).abs() < 4.0 * stderr, "{} vs 30", e.value);
    }

    #[test]
    fn low_health_zone_scales_down() {
        let player = PlayerState {
            health: 40.0,
            max_health: 100.0,
            proficiency: 0.3,
        };
        let reqs = challenge_adjust(
            55.0,
            &player,
            &survival_band_default(),
            &ChallengeSettings::default(),
            0,
        );
        assert!(reqs.len() >= 2);
        for r in &reqs[..2] {
            let ChangeOp::Multiplicative(s) = r.change else {
                panic!()
            };
            assert!(s < 1.0);
            assert_eq!(r.visibility, Visibility::UnseenZone);
        }
        assert!(reqs.iter().any(|r| r.tag == "prob:potion"));
    }

    #[test]
    fn harmless_zone_at_forty_percent_scales_up() {
        let player = PlayerState {
            health: 40.0,
            max_health: 100.0,
            proficiency: 0.5,
        };
        let reqs = challenge_adjust(
            0.0,
            &player,
            &survival_band_default(),
            &ChallengeSettings::default(),
            0,
        );
        assert_eq!(reqs.len(), 2);
        assert!(matches!(reqs[0].change, ChangeOp::Multiplicative(s) if s > 1.0));
    }

    #[test]
    fn balanced_zone_no_requests_and_full_health_expert_gets_crit() {
        let player = PlayerState {
            health: 100.0,
            max_health: 100.0,
            proficiency: 0.8,
        };
        let band = survival_band_default();
        assert!(
            challenge_adjust(75.0, &player, &band, &ChallengeSettings::default(), 0).is_empty()
        );
        let reqs = challenge_adjust(5.0, &player, &band, &ChallengeSettings::default(), 0);
        assert!(reqs.iter().any(|r| r.tag == "prob:crit"));
        assert!(reqs.iter().all(|r| r.visibility == Visibility::UnseenZone));
    }
}

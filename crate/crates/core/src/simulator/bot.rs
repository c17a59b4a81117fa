use std::path::Path;

use serde::{Deserialize, Serialize};

use super::SimError;
use crate::telemetry::Tick;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetPolicy {
    /// Finish off the weakest enemy first.
    #[default]
    LowestHp,
    /// Attack in spawn order.
    Oldest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BotProfile {
    pub name: String,
    pub accuracy: f64,
    pub evade_prob: f64,
    pub attack_interval: Tick,
    /// Drink a potion once health falls below this fraction.
    pub potion_use_threshold: f64,
    #[serde(default)]
    pub target_policy: TargetPolicy,
    /// Never attacks. Used by scripted scenarios.
    #[serde(default)]
    pub passive: bool,
}

impl BotProfile {
    fn preset(
        name: &str,
        accuracy: f64,
        evade_prob: f64,
        attack_interval: Tick,
        potion: f64,
    ) -> Self {
        BotProfile {
            name: name.into(),
            accuracy,
            evade_prob,
            attack_interval,
            potion_use_threshold: potion,
            target_policy: TargetPolicy::LowestHp,
            passive: false,
        }
    }

    pub fn novice() -> Self {
        let mut b = Self::preset("novice", 0.55, 0.05, 50, 0.25);
        b.target_policy = TargetPolicy::Oldest;
        b
    }

    pub fn medium() -> Self {
        Self::preset("medium", 0.75, 0.15, 40, 0.35)
    }

    pub fn expert() -> Self {
        Self::preset("expert", 0.92, 0.3, 30, 0.4)
    }

    /// Stands still and never attacks or drinks.
    pub fn passive() -> Self {
        BotProfile {
            passive: true,
            ..Self::preset("passive", 0.0, 0.0, 1, 0.0)
        }
    }

    pub const PRESETS: [&'static str; 4] = ["novice", "medium", "expert", "passive"];

    pub fn preset_named(name: &str) -> Option<Self> {
        match name {
            "novice" => Some(Self::novice()),
            "medium" => Some(Self::medium()),
            "expert" => Some(Self::expert()),
            "passive" => Some(Self::passive()),
            _ => None,
        }
    }

    /// A preset name or a path to a TOML or JSON profile.
    pub fn load(name_or_path: &str) -> Result<Self, SimError> {
        if let Some(b) = Self::preset_named(name_or_path) {
            return Ok(b);
        }
        let path = Path::new(name_or_path);
        let text = std::fs::read_to_string(path)
            .map_err(|e| SimError::Config(format!("unknown bot {name_or_path}: {e}")))?;
        let bot: BotProfile = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| SimError::Config(e.to_string()))?
        } else {
            toml::from_str(&text).map_err(|e| SimError::Config(e.to_string()))?
        };
        bot.validate()?;
        Ok(bot)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let prob = |p: f64| (0.0..=1.0).contains(&p);
        if !prob(self.accuracy) || !prob(self.evade_prob) || !prob(self.potion_use_threshold) {
            return Err(SimError::Config(format!(
                "bot {}: probabilities must be in [0, 1]",
                self.name
            )));
        }
        if self.attack_interval == 0 {
            return Err(SimError::Config(format!(
                "bot {}: attack interval must be >= 1",
                self.name
            )));
        }
        Ok(())
    }
}

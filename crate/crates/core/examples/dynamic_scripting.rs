//! A learner picking scripts for one agent type against a toy opponent.
//! Stronger tactics win more often; watch the weights move toward them.

use dda::models::dscript::{
    default_rulebase, DynamicScripting, DynamicScriptingSettings, EncounterResult, FitnessMode,
    WeightRegime,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let settings = DynamicScriptingSettings {
        fitness: FitnessMode::Maximize,
        regime: WeightRegime::Clipping { cap: 4.0 },
        adrenaline: false,
        ..DynamicScriptingSettings::default()
    };
    let mut ds = DynamicScripting::new(vec![default_rulebase("grunt", 1.0)], settings, 5)?;
    let mut world = ChaCha8Rng::seed_from_u64(9);

    for encounter in 0..300u64 {
        let (_, tactic) = ds.spawn("grunt", encounter)?;
        let strength = tactic.damage_mult / tactic.interval_mult
            * (1.0 + tactic.hit_bonus)
            * (1.0 + tactic.guard);
        let ai: f64 = (0.35 * strength + world.gen_range(-0.2..0.2)).clamp(0.0, 1.0);
        let result = EncounterResult {
            ai,
            player: 1.0 - ai,
            player_won: ai < 0.5,
        };
        let learning = ds.finish_encounter(&result)?;
        if encounter % 100 == 99 {
            println!(
                "after {:3} encounters, fitness {:.2}",
                encounter + 1,
                learning.fitness
            );
        }
    }
    let rb = &ds.rulebases["grunt"];
    let mut rules: Vec<_> = rb.rules.iter().collect();
    rules.sort_by(|a, b| b.weight.total_cmp(&a.weight));
    for r in rules {
        println!("  {:14} {:.2}", r.name, r.weight);
    }
    println!("total weight {:.6}", rb.weight_sum());
    Ok(())
}

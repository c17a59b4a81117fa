//! Expected damage of an upcoming zone, then the pre-entry adjustment.

use dda::models::probabilistic::{
    challenge_adjust, expected_outcome, survival_band_default, survival_ratio, ChallengeSettings,
    ExpectationSettings, PlayerState, ZoneEnemy, ZoneSpec,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let zone = ZoneSpec {
        enemies: vec![
            ZoneEnemy::hit_or_miss("archer", 5.0, 0.9, 2),
            ZoneEnemy::hit_or_miss("grunt", 10.0, 0.5, 2),
            ZoneEnemy::with_crit("brute", 20.0, 0.25, 0.1, 2.0, 2),
        ],
    };
    let exact = expected_outcome(&zone, &ExpectationSettings::default())?;
    println!(
        "expected damage {:.4} ({:?}, {} joint outcomes)",
        exact.value,
        exact.method,
        zone.joint_outcomes()
    );
    let sampled = expected_outcome(
        &zone,
        &ExpectationSettings {
            enumeration_cap: 0,
            monte_carlo_samples: 200_000,
            seed: 3,
        },
    )?;
    println!(
        "monte carlo     {:.4} ({:?})",
        sampled.value, sampled.method
    );

    let band = survival_band_default();
    for health in [40.0, 100.0] {
        let player = PlayerState {
            health,
            max_health: 100.0,
            proficiency: if health < 50.0 { 0.3 } else { 0.7 },
        };
        let r = survival_ratio(exact.value, &player);
        println!("health {health}: survival ratio {r:.2}");
        for req in challenge_adjust(
            exact.value,
            &player,
            &band,
            &ChallengeSettings::default(),
            0,
        ) {
            println!("  {} {:?} ({:?})", req.factor, req.change, req.visibility);
        }
    }
    Ok(())
}

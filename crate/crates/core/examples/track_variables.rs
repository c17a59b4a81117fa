//! Feed event and level telemetry, close a window, look for a health spike.

use dda::telemetry::{Orientation, PermanentSummary, Telemetry, TrackedVariable, VarId};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut t = Telemetry::new();
    let dmg = t.register_variable(TrackedVariable::event(
        "damage_taken",
        Orientation::HigherIsHarder,
    ))?;
    let hp = t.register_variable(
        TrackedVariable::permanent(
            "health",
            Orientation::HigherIsEasier,
            30,
            PermanentSummary::Mean,
            (0.0, 100.0),
        )
        .with_attribution("damage_taken"),
    )?;

    t.sample_permanent(&hp, 100.0, 0)?;
    for (tick, amount, who) in [
        (40, 12.0, "grunt#1"),
        (90, 15.0, "grunt#1"),
        (150, 9.0, "grunt#2"),
    ] {
        t.record_event(&dmg, amount, tick, Some(who))?;
    }
    // Samples closer together than 30 ticks are throttled.
    println!("sample at 10: {:?}", t.sample_permanent(&hp, 99.0, 10)?);
    t.sample_permanent(&hp, 73.0, 100)?;
    t.sample_permanent(&hp, 64.0, 160)?;

    let windows = t.close_window(600, 600)?;
    for w in &windows {
        println!(
            "{:14} N = {:6.2} over {} ticks",
            w.var_id.as_str(),
            w.count_or_delta,
            w.window_len
        );
    }
    let health = windows
        .iter()
        .find(|w| w.var_id == VarId::new("health"))
        .unwrap();
    match t.detect_spike(&hp, health, 0.3, 0.6)? {
        Some(s) => println!(
            "spike: health fell {:.0} points, {:?}",
            s.magnitude, s.attribution
        ),
        None => println!("no spike"),
    }
    Ok(())
}

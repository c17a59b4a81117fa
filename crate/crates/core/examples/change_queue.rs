//! Queue changes by visibility and watch each drain context admit a subset.

use dda::adjustment::{
    ChangeOp, ChangeQueue, ChangeRequest, DrainContext, FactorMap, QueuePolicy, Visibility,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut factors = FactorMap::new()
        .with("enemy_damage", 1.0)
        .with("enemy_count", 1.0)
        .with("music_tempo", 1.0);
    factors.register_applier("enemy_damage".into(), |old, new| {
        println!("  enemy_damage {old:.2} -> {new:.2}")
    });

    let policy = QueuePolicy {
        min_ticks_between_executions: 100,
        ..QueuePolicy::default()
    };
    let mut q = ChangeQueue::new();
    let req = |tag: &str, f: &str, op, vis| ChangeRequest::new(tag, f, op, (0.1, 3.0), vis, 0);
    q.enqueue(req(
        "dmg",
        "enemy_damage",
        ChangeOp::Multiplicative(0.9),
        Visibility::SubtleAnytime,
    )?);
    // Same tag: replaces the pending request.
    q.enqueue(req(
        "dmg",
        "enemy_damage",
        ChangeOp::Multiplicative(0.8),
        Visibility::SubtleAnytime,
    )?);
    q.enqueue(req(
        "count",
        "enemy_count",
        ChangeOp::Additive(-0.25),
        Visibility::UnseenZone,
    )?);
    q.enqueue(req(
        "tempo",
        "music_tempo",
        ChangeOp::Set(1.2),
        Visibility::RequiresBreak,
    )?);
    println!("pending: {}", q.len());

    for (tick, ctx) in [
        (0, DrainContext::SubtleWindow),
        (50, DrainContext::UnseenZone),
        (150, DrainContext::UnseenZone),
        (300, DrainContext::SceneChange),
    ] {
        println!("drain {ctx:?} at {tick}");
        let out = q.drain(ctx, tick, &policy, &mut factors);
        if out.gated {
            println!("  gated by the time threshold");
        }
        for a in &out.applied {
            println!("  applied {} on {}: {:.2}", a.tag, a.factor, a.new);
        }
    }
    println!("left pending: {}", q.len());
    Ok(())
}

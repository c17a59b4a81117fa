//! Per-window time series from a metrics-model trace.

use dda::engine::{ModelKind, ModelSelection};
use dda::harness::report;
use dda::reference::calibrate;
use dda::simulator::{arena, arena_hard, run_episode, BotProfile};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let base = arena();
    let refs = calibrate(
        &base,
        &BotProfile::medium(),
        100,
        base.dda.evaluation_interval,
        42,
    )?;
    let trace = run_episode(
        &arena_hard(),
        &BotProfile::novice(),
        ModelSelection::of(ModelKind::Metrics),
        Some(&refs),
        3,
    )?;
    let table = report(&trace);
    let cols = [
        "tick",
        "n:damage_taken",
        "global_difficulty",
        "factor:enemy_damage",
    ];
    println!("{}", cols.join("\t"));
    let series: Vec<_> = cols.iter().map(|c| table.column(c).unwrap()).collect();
    for i in (0..table.rows.len()).step_by(3) {
        let cells: Vec<String> = series
            .iter()
            .map(|s| {
                s[i].map(|v| format!("{v:.2}"))
                    .unwrap_or_else(|| "-".into())
            })
            .collect();
        println!("{}", cells.join("\t"));
    }
    Ok(())
}

//! Closed loop: a novice on the hard arena, with the metrics model easing
//! enemy damage until global difficulty settles in the flow band.

use dda::engine::{ModelKind, ModelSelection};
use dda::reference::calibrate;
use dda::simulator::{arena, arena_hard, flow_occupancy, run_episode, BotProfile};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let base = arena();
    let refs = calibrate(
        &base,
        &BotProfile::medium(),
        100,
        base.dda.evaluation_interval,
        1,
    )?;
    let hard = arena_hard();
    let novice = BotProfile::novice();
    let band = hard.dda.assessment.difficulty_band;

    for kind in [ModelKind::Off, ModelKind::Metrics] {
        let trace = run_episode(&hard, &novice, ModelSelection::of(kind), Some(&refs), 11)?;
        let gd: Vec<String> = trace
            .assessments()
            .map(|r| format!("{:.2}", r.global_difficulty))
            .collect();
        println!(
            "{}: occupancy after warm-up {:.2}",
            kind.name(),
            flow_occupancy(trace.assessments(), &band, 10).unwrap()
        );
        println!("  global difficulty {}", gd.join(" "));
        let steps: Vec<String> = trace.applied().map(|a| format!("{:.2}", a.new)).collect();
        if !steps.is_empty() {
            println!("  enemy_damage {}", steps.join(" "));
        }
    }
    Ok(())
}

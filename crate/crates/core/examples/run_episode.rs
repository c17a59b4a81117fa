//! One seeded episode per model on the default arena; writes the traces.

use dda::engine::{ModelKind, ModelSelection};
use dda::harness::summary_line;
use dda::reference::calibrate;
use dda::simulator::{arena, run_episode, BotProfile};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let scenario = arena();
    let bot = BotProfile::medium();
    let refs = calibrate(&scenario, &bot, 100, scenario.dda.evaluation_interval, 42)?;
    let dir = std::env::temp_dir();
    for kind in ModelKind::ALL {
        let trace = run_episode(&scenario, &bot, ModelSelection::of(kind), Some(&refs), 2024)?;
        let path = dir.join(format!("dda-{}.jsonl", kind.name()));
        trace.write(&path)?;
        println!(
            "{:13} {}",
            kind.name(),
            summary_line(trace.summary().unwrap())
        );
    }
    println!("traces in {}", dir.display());
    Ok(())
}

//! Record reference curves from medium-bot playthroughs and save them.

use dda::reference::{calibrate, ReferenceSet};
use dda::simulator::{arena, BotProfile};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let scenario = arena();
    let refs = calibrate(
        &scenario,
        &BotProfile::medium(),
        50,
        scenario.dda.evaluation_interval,
        7,
    )?;
    for c in refs.curves() {
        let last = c.knots.last().unwrap();
        println!(
            "{:16} Z/window {:8.2}   progress at tick {}: {:.1} (sd {:.1})",
            c.var_id.as_str(),
            c.z_per_window,
            last.tick(),
            last.value(),
            last.stddev()
        );
    }
    let path = std::env::temp_dir().join("dda-arena-reference.json");
    refs.save(&path)?;
    let back = ReferenceSet::load(&path)?;
    assert_eq!(back, refs);
    println!("saved to {}", path.display());
    Ok(())
}

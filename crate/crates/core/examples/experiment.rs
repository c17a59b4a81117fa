//! A small model x bot x seed matrix, printed as the summary CSV.

use dda::engine::{ModelKind, ModelSelection};
use dda::harness::{run_experiment, ExperimentSpec, SeedSpec};
use dda::reference::calibrate;
use dda::simulator::{arena, BotProfile};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let scenario = arena();
    let refs = calibrate(
        &scenario,
        &BotProfile::medium(),
        100,
        scenario.dda.evaluation_interval,
        42,
    )?;
    let dir = std::env::temp_dir().join("dda-experiment");
    std::fs::create_dir_all(&dir)?;
    let reference = dir.join("reference.json");
    refs.save(&reference)?;

    let spec = ExperimentSpec {
        config: "arena".into(),
        models: vec![
            ModelSelection::off(),
            ModelSelection::of(ModelKind::Metrics),
            ModelSelection::of(ModelKind::Probabilistic),
        ],
        bots: vec!["novice".into(), "expert".into()],
        seeds: SeedSpec::Derived { base_seed: 1, n: 5 },
        reference: Some(reference),
        out: dir,
        warmup_windows: 5,
    };
    print!("{}", run_experiment(&spec)?.to_csv());
    Ok(())
}

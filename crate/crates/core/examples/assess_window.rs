//! Score a window against manual references and read the flow verdict.

use std::collections::BTreeMap;

use dda::assessment::{
    difficulty_ratio, ease, evaluate, performance_ratio, AssessmentConfig, CumulativeRank,
};
use dda::reference::ReferenceSet;
use dda::telemetry::{Orientation, Telemetry, TrackedVariable};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let d = difficulty_ratio(30.0, 20.0, 40.0)?;
    println!(
        "N=30 Z=20 D=40: difficulty {:.2}, ease {:.2}",
        d.value,
        ease(d.value)?
    );
    println!(
        "performance 45 of an expected 50: {:.2}",
        performance_ratio(45.0, 50.0)?
    );

    let vars = [
        TrackedVariable::event("damage_taken", Orientation::HigherIsHarder)
            .with_reference(25.0)
            .with_span(120.0),
        TrackedVariable::event("kills", Orientation::HigherIsEasier)
            .with_reference(4.0)
            .with_span(8.0),
    ];
    let mut t = Telemetry::new();
    for v in &vars {
        t.register_variable(v.clone())?;
    }
    t.record_event(&vars[0].id, 48.0, 100, None)?;
    t.record_event(&vars[1].id, 3.0, 200, None)?;
    let windows = t.close_window(600, 600)?;

    let specs: BTreeMap<_, _> = vars.iter().map(|v| (v.id.clone(), v.clone())).collect();
    let progress = vars
        .iter()
        .map(|v| (v.id.clone(), t.progress(&v.id).unwrap()))
        .collect();
    let config = AssessmentConfig {
        reference_difficulty: 0.5,
        ..AssessmentConfig::default()
    };
    let mut rank = CumulativeRank::default();
    let report = evaluate(
        &windows,
        &specs,
        &progress,
        &ReferenceSet::new(),
        &config,
        &mut rank,
        600,
    )?;
    for (id, a) in &report.per_variable {
        println!(
            "{:13} difficulty {:.3} {:?}",
            id.as_str(),
            a.difficulty,
            a.classification
        );
    }
    println!(
        "global difficulty {:.3} -> {:?}",
        report.global_difficulty, report.global_class
    );
    Ok(())
}

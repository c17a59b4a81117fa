mod common;

use std::collections::BTreeMap;

use common::*;
use dda::engine::{ModelKind, ModelSelection};
use dda::harness::report;
use dda::reference::{calibrate, ReferenceCurve, ReferenceSet};
use dda::rng;
use dda::simulator::{
    arena, arena_hard, run_episode, BotProfile, EnemyTemplate, Scenario, TraceRecord,
};
use dda::telemetry::VarId;

fn short(mut s: Scenario, ticks: u64) -> Scenario {
    s.game.max_ticks = ticks;
    s
}

fn refs() -> ReferenceSet {
    calibrate(&short(arena(), 12_000), &BotProfile::medium(), 10, 600, 3).unwrap()
}

/// Piecewise-linear interpolation written from scratch.
fn interpolate(curve: &ReferenceCurve, t: f64) -> f64 {
    let pts: Vec<(f64, f64)> = curve.knots.iter().map(|k| (k.0 as f64, k.1)).collect();
    if t <= pts[0].0 {
        return pts[0].1;
    }
    for w in pts.windows(2) {
        if t <= w[1].0 {
            return w[0].1 + (w[1].1 - w[0].1) * (t - w[0].0) / (w[1].0 - w[0].0);
        }
    }
    pts[pts.len() - 1].1
}

#[test]
fn window_counts_match_raw_telemetry() {
    let r = refs();
    for (bot, model) in [
        (BotProfile::novice(), ModelKind::Metrics),
        (BotProfile::expert(), ModelKind::Probabilistic),
        (BotProfile::medium(), ModelKind::Off),
    ] {
        let t = run_episode(
            &short(arena_hard(), 12_000),
            &bot,
            ModelSelection::of(model),
            Some(&r),
            8,
        )
        .unwrap();
        let engine: Vec<_> = t.run_series().windows;
        let rebuilt = rebuild_windows(&t);
        assert_eq!(engine.len(), rebuilt.len());
        assert_eq!(engine.len(), 20);
        for (e, o) in engine.iter().zip(&rebuilt) {
            assert_eq!(e.end, o.end);
            for (var, n) in &o.n {
                let got = e.n[&VarId::new(var.as_str())];
                assert!((got - n).abs() < 1e-9, "{var} at {}: {got} vs {n}", o.end);
                let p = e.progress[&VarId::new(var.as_str())];
                assert!(
                    (p - o.progress[var]).abs() < 1e-9,
                    "{var} progress at {}",
                    o.end
                );
            }
        }
    }
}

#[test]
fn assessments_match_recomputation() {
    let r = refs();
    let t = run_episode(
        &short(arena_hard(), 12_000),
        &BotProfile::novice(),
        ModelSelection::of(ModelKind::Metrics),
        Some(&r),
        21,
    )
    .unwrap();
    let oracle = oracle_global_difficulty(&t, &r);
    let reports: Vec<_> = t.assessments().collect();
    assert_eq!(reports.len(), oracle.len());
    let (scenario, ..) = t.header().unwrap();
    for (rep, (tick, g)) in reports.iter().zip(&oracle) {
        assert_eq!(rep.tick, *tick);
        assert!(
            (rep.global_difficulty - g).abs() < 1e-12,
            "tick {tick}: {} vs {g}",
            rep.global_difficulty
        );
        assert!((rep.global_proficiency - (1.0 - g)).abs() < 1e-12);
    }

    // Performance: current progress over the curve's expected value.
    for (rep, w) in reports.iter().zip(rebuild_windows(&t)) {
        let mut perfs = Vec::new();
        for v in &scenario.dda.variables {
            let curve = r.get(&v.id).unwrap();
            let expected = interpolate(curve, w.end as f64);
            let got = rep.per_variable[&v.id].performance;
            if v.performance && expected > 0.0 {
                let want = w.progress[v.id.as_str()] / expected;
                assert!((got.unwrap() - want).abs() < 1e-9, "{} at {}", v.id, w.end);
                perfs.push(want);
            } else {
                assert!(got.is_none());
            }
        }
        let mean = perfs.iter().sum::<f64>() / perfs.len() as f64;
        assert!((rep.mean_performance.unwrap() - mean).abs() < 1e-9);
    }
}

#[test]
fn calibration_matches_independent_runs() {
    let s = short(arena(), 6_000);
    let bot = BotProfile::expert();
    let set = calibrate(&s, &bot, 6, 600, 99).unwrap();

    let traces: Vec<_> = (0..6)
        .map(|i| run_episode(&s, &bot, ModelSelection::off(), None, rng::derive(99, i)).unwrap())
        .collect();
    let rebuilt: Vec<_> = traces.iter().map(rebuild_windows).collect();
    for v in &s.dda.variables {
        let name = v.id.as_str();
        let all: Vec<f64> = rebuilt
            .iter()
            .flat_map(|ws| ws.iter().map(|w| w.n[name]))
            .collect();
        let z = all.iter().sum::<f64>() / all.len() as f64;
        let curve = set.get(&v.id).unwrap();
        assert!(
            (curve.z_per_window - z).abs() < 1e-9,
            "{name}: {} vs {z}",
            curve.z_per_window
        );
        assert_eq!(curve.knots.len(), 11);
        for k in 1..=10usize {
            let vals: Vec<f64> = rebuilt.iter().map(|ws| ws[k - 1].progress[name]).collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let var =
                vals.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (vals.len() - 1) as f64;
            let knot = curve.knots[k];
            assert_eq!(knot.0, 600 * k as u64);
            assert!((knot.1 - mean).abs() < 1e-9, "{name} knot {k}");
            assert!((knot.2 - var.sqrt()).abs() < 1e-9, "{name} sd {k}");
        }
    }
}

#[test]
fn scripted_bot_dies_once_per_window() {
    // 20 certain hits of 5 every 29 ticks kill at tick 580; the 20-tick
    // break lines the next wave up with the next window.
    let mut s = short(arena(), 6_000);
    s.game.wave_interval = 20;
    s.game.enemies = vec![EnemyTemplate {
        agent_type: "grunt".into(),
        hp: 30.0,
        damage: 5.0,
        attack_interval: 29,
        hit_prob: 1.0,
        count: 1,
    }];
    let set = calibrate(&s, &BotProfile::passive(), 3, 600, 0).unwrap();
    let deaths = set.get(&VarId::new("deaths")).unwrap();
    assert_eq!(deaths.z_per_window, 1.0);
    let knots: Vec<f64> = deaths.knots.iter().map(|k| k.1).collect();
    let expected: Vec<f64> = (0..=10).map(f64::from).collect();
    assert_eq!(knots, expected);
    assert!(deaths.knots.iter().all(|k| k.2 == 0.0));
    assert_eq!(
        set.get(&VarId::new("damage_taken")).unwrap().z_per_window,
        100.0
    );
}

#[test]
fn report_columns_match_trace() {
    let r = refs();
    let t = run_episode(
        &short(arena_hard(), 12_000),
        &BotProfile::novice(),
        ModelSelection::of(ModelKind::Metrics),
        Some(&r),
        2,
    )
    .unwrap();
    let table = report(&t);
    let ticks: Vec<u64> = table
        .column("tick")
        .unwrap()
        .iter()
        .map(|c| c.unwrap() as u64)
        .collect();
    let windows = rebuild_windows(&t);
    assert_eq!(ticks, windows.iter().map(|w| w.end).collect::<Vec<_>>());
    for v in ["deaths", "damage_taken", "health"] {
        let col = table.column(&format!("n:{v}")).unwrap();
        for (c, w) in col.iter().zip(&windows) {
            assert!((c.unwrap() - w.n[v]).abs() < 1e-9);
        }
    }

    let applied: Vec<(u64, f64)> = t
        .records
        .iter()
        .filter_map(|r| match r {
            TraceRecord::Applied { change, .. } if change.factor.as_str() == "enemy_damage" => {
                Some((change.tick, change.new))
            }
            _ => None,
        })
        .collect();
    assert!(!applied.is_empty());
    let col = table.column("factor:enemy_damage").unwrap();
    for (c, tick) in col.iter().zip(&ticks) {
        let want = applied
            .iter()
            .rfind(|a| a.0 <= *tick)
            .map(|a| a.1)
            .unwrap_or(1.0);
        assert_eq!(c.unwrap(), want, "row at {tick}");
    }
    let by_tick: BTreeMap<u64, f64> = t
        .assessments()
        .map(|a| (a.tick, a.global_difficulty))
        .collect();
    for (c, tick) in table
        .column("global_difficulty")
        .unwrap()
        .iter()
        .zip(&ticks)
    {
        assert_eq!(*c, by_tick.get(tick).copied());
    }
}

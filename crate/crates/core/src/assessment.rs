//! Difficulty, ease and performance ratios, flow-band classification, and the
//! per-window assessment report.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::reference::ReferenceSet;
use crate::telemetry::{Orientation, Tick, TrackedVariable, VarId, VariableWindow};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AssessmentError {
    #[error("difficulty span must be positive, got {0}")]
    NonPositiveSpan(f64),
    #[error("difficulty {0} outside [0, 1]")]
    DifficultyRange(f64),
    #[error("expected value {0} is not positive; use the difficulty form for this variable")]
    DegenerateReference(f64),
    #[error("invalid flow band: target={target}, margin={margin}")]
    InvalidBand { target: f64, margin: f64 },
    #[error("weights sum to {0}, expected 1")]
    WeightSum(f64),
    #[error("negative weight for `{0}`")]
    NegativeWeight(VarId),
    #[error("value for `{var}` outside [0, 1]: {value}")]
    ValueRange { var: VarId, value: f64 },
    #[error("value and weight keys differ: {0:?}")]
    KeyMismatch(Vec<VarId>),
    #[error("no reference for variables: {0:?}")]
    MissingReference(Vec<VarId>),
    #[error("window for unregistered variable `{0}`")]
    UnknownVariable(VarId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandSemantics {
    /// Centered on 0.5; valid range [0, 1].
    DifficultyCentered,
    /// Centered on 1.0; valid range [0, inf).
    RatioCentered,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowBand {
    pub target: f64,
    pub margin: f64,
    pub semantics: BandSemantics,
}

impl FlowBand {
    pub fn new(
        target: f64,
        margin: f64,
        semantics: BandSemantics,
    ) -> Result<Self, AssessmentError> {
        let band = FlowBand {
            target,
            margin,
            semantics,
        };
        band.validate()?;
        Ok(band)
    }

    pub fn difficulty_default() -> Self {
        FlowBand {
            target: 0.5,
            margin: 0.1,
            semantics: BandSemantics::DifficultyCentered,
        }
    }

    pub fn ratio_default() -> Self {
        FlowBand {
            target: 1.0,
            margin: 0.2,
            semantics: BandSemantics::RatioCentered,
        }
    }

    pub fn validate(&self) -> Result<(), AssessmentError> {
        let bad = AssessmentError::InvalidBand {
            target: self.target,
            margin: self.margin,
        };
        if !(self.margin > 0.0) || !self.target.is_finite() || !self.margin.is_finite() {
            return Err(bad);
        }
        let (lo, hi) = (self.lower(), self.upper());
        let ok = match self.semantics {
            BandSemantics::DifficultyCentered => lo >= 0.0 && hi <= 1.0,
            BandSemantics::RatioCentered => lo >= 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(bad)
        }
    }

    pub fn lower(&self) -> f64 {
        self.target - self.margin
    }

    pub fn upper(&self) -> f64 {
        self.target + self.margin
    }

    /// Closed interval membership.
    pub fn contains(&self, value: f64) -> bool {
        value >= self.lower() && value <= self.upper()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowClass {
    TooEasy,
    InFlow,
    TooHard,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Difficulty {
    pub value: f64,
    /// Raw ratio fell outside [0, 1] and was clamped.
    pub clamped: bool,
}

/// `(n - z) / d`, clamped into [0, 1].
pub fn difficulty_ratio(n: f64, z: f64, d: f64) -> Result<Difficulty, AssessmentError> {
    if !(d > 0.0) {
        return Err(AssessmentError::NonPositiveSpan(d));
    }
    let raw = (n - z) / d;
    let clamped = !(0.0..=1.0).contains(&raw);
    Ok(Difficulty {
        value: raw.clamp(0.0, 1.0),
        clamped,
    })
}

pub fn ease(difficulty: f64) -> Result<f64, AssessmentError> {
    if !(0.0..=1.0).contains(&difficulty) {
        return Err(AssessmentError::DifficultyRange(difficulty));
    }
    Ok(1.0 - difficulty)
}

/// Current over expected progress.
pub fn performance_ratio(current: f64, expected: f64) -> Result<f64, AssessmentError> {
    if !(expected > 0.0) {
        return Err(AssessmentError::DegenerateReference(expected));
    }
    Ok(current / expected)
}

/// Places `value` relative to `band`. `orientation` says what a larger value
/// means for the player: above the band is too hard for `HigherIsHarder`
/// values and too easy for `HigherIsEasier` ones.
pub fn classify_flow(value: f64, band: &FlowBand, orientation: Orientation) -> FlowClass {
    if band.contains(value) {
        return FlowClass::InFlow;
    }
    let above = value > band.upper();
    match (above, orientation) {
        (true, Orientation::HigherIsHarder) | (false, Orientation::HigherIsEasier) => {
            FlowClass::TooHard
        }
        _ => FlowClass::TooEasy,
    }
}

/// Weighted sum of normalized per-variable values.
pub fn global_proficiency(
    values: &BTreeMap<VarId, f64>,
    weights: &BTreeMap<VarId, f64>,
) -> Result<f64, AssessmentError> {
    let mismatch: Vec<VarId> = values
        .keys()
        .filter(|k| !weights.contains_key(*k))
        .chain(weights.keys().filter(|k| !values.contains_key(*k)))
        .cloned()
        .collect();
    if !mismatch.is_empty() {
        return Err(AssessmentError::KeyMismatch(mismatch));
    }
    let mut sum_w = 0.0;
    for (k, &w) in weights {
        if !(w >= 0.0) {
            return Err(AssessmentError::NegativeWeight(k.clone()));
        }
        sum_w += w;
    }
    if (sum_w - 1.0).abs() > 1e-9 {
        return Err(AssessmentError::WeightSum(sum_w));
    }
    let mut total = 0.0;
    for (k, &v) in values {
        if !(0.0..=1.0).contains(&v) {
            return Err(AssessmentError::ValueRange {
                var: k.clone(),
                value: v,
            });
        }
        total += weights[k] * v;
    }
    Ok(total.clamp(0.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssessmentConfig {
    pub difficulty_band: FlowBand,
    pub performance_band: FlowBand,
    /// Per-variable weights for the global aggregate. Empty means uniform.
    #[serde(default)]
    pub weights: BTreeMap<VarId, f64>,
    /// Difficulty assigned to play exactly at the reference value.
    #[serde(default)]
    pub reference_difficulty: f64,
}

impl Default for AssessmentConfig {
    fn default() -> Self {
        AssessmentConfig {
            difficulty_band: FlowBand::difficulty_default(),
            performance_band: FlowBand::ratio_default(),
            weights: BTreeMap::new(),
            reference_difficulty: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CumulativeRank {
    /// Sum of per-window mean performance ratios.
    pub sum: f64,
    pub windows: u64,
}

impl CumulativeRank {
    pub fn add(&mut self, mean_performance: f64) {
        self.sum += mean_performance;
        self.windows += 1;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableAssessment {
    /// Window value N.
    pub n: f64,
    /// Reference value Z.
    pub z: f64,
    /// Normalizing span D.
    pub span: f64,
    pub orientation: Orientation,
    /// Orientation-adjusted difficulty in [0, 1].
    pub difficulty: f64,
    pub ease: f64,
    pub clamped: bool,
    pub classification: FlowClass,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub performance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub performance_class: Option<FlowClass>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssessmentReport {
    pub tick: Tick,
    pub window_start: Tick,
    pub window_len: Tick,
    pub per_variable: BTreeMap<VarId, VariableAssessment>,
    pub global_difficulty: f64,
    pub global_proficiency: f64,
    pub global_class: FlowClass,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_performance: Option<f64>,
    pub cumulative_rank: CumulativeRank,
}

/// Uniform weights over `vars` when `configured` is empty, else `configured`.
pub fn effective_weights(
    configured: &BTreeMap<VarId, f64>,
    vars: impl Iterator<Item = VarId>,
) -> BTreeMap<VarId, f64> {
    if !configured.is_empty() {
        return configured.clone();
    }
    let ids: Vec<VarId> = vars.collect();
    let w = 1.0 / ids.len().max(1) as f64;
    ids.into_iter().map(|id| (id, w)).collect()
}

/// Scores one closed window of every variable against its reference.
pub fn evaluate(
    windows: &[VariableWindow],
    variables: &BTreeMap<VarId, TrackedVariable>,
    progress: &BTreeMap<VarId, f64>,
    references: &ReferenceSet,
    config: &AssessmentConfig,
    rank: &mut CumulativeRank,
    tick: Tick,
) -> Result<AssessmentReport, AssessmentError> {
    let missing: Vec<VarId> = windows
        .iter()
        .filter(|w| {
            references.get(&w.var_id).is_none()
                && variables
                    .get(&w.var_id)
                    .is_none_or(|v| v.reference_z.is_none())
        })
        .map(|w| w.var_id.clone())
        .collect();
    if !missing.is_empty() {
        return Err(AssessmentError::MissingReference(missing));
    }

    let mut per_variable = BTreeMap::new();
    for w in windows {
        let var = variables
            .get(&w.var_id)
            .ok_or_else(|| AssessmentError::UnknownVariable(w.var_id.clone()))?;
        let curve = references.get(&w.var_id);
        let z = match curve {
            Some(c) => c.z_per_window,
            None => var.reference_z.expect("checked above"),
        };
        let span = var.span.unwrap_or(w.window_len as f64);
        let n = w.count_or_delta;
        let n_oriented = match var.orientation {
            Orientation::HigherIsHarder => n,
            Orientation::HigherIsEasier => 2.0 * z - n,
        };
        let d = difficulty_ratio(n_oriented, z - config.reference_difficulty * span, span)?;
        let e = ease(d.value)?;
        let performance = match curve {
            Some(c) if var.performance => {
                let current = progress.get(&w.var_id).copied().unwrap_or(0.0);
                performance_ratio(current, c.lookup(tick as f64)).ok()
            }
            _ => None,
        };
        per_variable.insert(
            w.var_id.clone(),
            VariableAssessment {
                n,
                z,
                span,
                orientation: var.orientation,
                difficulty: d.value,
                ease: e,
                clamped: d.clamped,
                classification: classify_flow(
                    d.value,
                    &config.difficulty_band,
                    Orientation::HigherIsHarder,
                ),
                performance,
                performance_class: performance
                    .map(|p| classify_flow(p, &config.performance_band, var.orientation)),
            },
        );
    }

    let weights = effective_weights(&config.weights, per_variable.keys().cloned());
    let difficulties: BTreeMap<VarId, f64> = per_variable
        .iter()
        .map(|(k, v)| (k.clone(), v.difficulty))
        .collect();
    let eases: BTreeMap<VarId, f64> = per_variable
        .iter()
        .map(|(k, v)| (k.clone(), v.ease))
        .collect();
    let global_difficulty = global_proficiency(&difficulties, &weights)?;
    let global = global_proficiency(&eases, &weights)?;

    let perfs: Vec<f64> = per_variable
        .values()
        .filter_map(|v| v.performance)
        .collect();
    let mean_performance = if perfs.is_empty() {
        None
    } else {
        Some(perfs.iter().sum::<f64>() / perfs.len() as f64)
    };
    if let Some(m) = mean_performance {
        rank.add(m);
    }
    let (window_start, window_len) = windows
        .first()
        .map(|w| (w.window_start, w.window_len))
        .unwrap_or((tick, 0));

    Ok(AssessmentReport {
        tick,
        window_start,
        window_len,
        per_variable,
        global_difficulty,
        global_proficiency: global,
        global_class: classify_flow(
            global_difficulty,
            &config.difficulty_band,
            Orientation::HigherIsHarder,
        ),
        mean_performance,
        cumulative_rank: *rank,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reference::{CurveSource, Knot, ReferenceCurve};
    use crate::telemetry::TrackedVariable;
    use proptest::prelude::*;

    #[test]
    fn difficulty_examples() {
        assert_eq!(
            difficulty_ratio(3.0, 3.0, 10.0).unwrap(),
            Difficulty {
                value: 0.0,
                clamped: false
            }
        );
        assert_eq!(
            difficulty_ratio(13.0, 3.0, 10.0).unwrap(),
            Difficulty {
                value: 1.0,
                clamped: false
            }
        );
        assert_eq!(difficulty_ratio(7.0, 3.0, 10.0).unwrap().value, 0.4);
        assert_eq!(
            difficulty_ratio(1.0, 5.0, 10.0).unwrap(),
            Difficulty {
                value: 0.0,
                clamped: true
            }
        );
        assert_eq!(
            difficulty_ratio(1.0, 0.0, 0.0),
            Err(AssessmentError::NonPositiveSpan(0.0))
        );
    }

    #[test]
    fn ease_examples() {
        assert_eq!(ease(0.5).unwrap(), 0.5);
        assert_eq!(ease(0.0).unwrap(), 1.0);
        assert_eq!(ease(0.4).unwrap(), 0.6);
        assert!(ease(1.5).is_err());
    }

    #[test]
    fn performance_examples() {
        assert_eq!(performance_ratio(100.0, 100.0).unwrap(), 1.0);
        assert_eq!(performance_ratio(90.0, 100.0).unwrap(), 0.9);
        let p = performance_ratio(130.0, 100.0).unwrap();
        assert_eq!(p, 1.3);
        assert_eq!(
            classify_flow(p, &FlowBand::ratio_default(), Orientation::HigherIsEasier),
            FlowClass::TooEasy
        );
        assert!(matches!(
            performance_ratio(1.0, 0.0),
            Err(AssessmentError::DegenerateReference(_))
        ));
    }

    #[test]
    fn classify_examples() {
        let d = FlowBand::difficulty_default();
        let r = FlowBand::ratio_default();
        assert_eq!(
            classify_flow(0.5, &d, Orientation::HigherIsHarder),
            FlowClass::InFlow
        );
        assert_eq!(
            classify_flow(0.75, &r, Orientation::HigherIsEasier),
            FlowClass::TooHard
        );
        assert_eq!(
            classify_flow(0.6, &d, Orientation::HigherIsHarder),
            FlowClass::InFlow
        );
        assert_eq!(
            classify_flow(0.4, &d, Orientation::HigherIsHarder),
            FlowClass::InFlow
        );
        assert_eq!(
            classify_flow(0.61, &d, Orientation::HigherIsHarder),
            FlowClass::TooHard
        );
        assert_eq!(
            classify_flow(0.61, &d, Orientation::HigherIsEasier),
            FlowClass::TooEasy
        );
        assert_eq!(
            classify_flow(1.21, &r, Orientation::HigherIsHarder),
            FlowClass::TooHard
        );
        assert_eq!(
            classify_flow(0.79, &r, Orientation::HigherIsHarder),
            FlowClass::TooEasy
        );
    }

    #[test]
    fn band_validation() {
        assert!(FlowBand::new(0.5, 0.0, BandSemantics::DifficultyCentered).is_err());
        assert!(FlowBand::new(0.95, 0.1, BandSemantics::DifficultyCentered).is_err());
        assert!(FlowBand::new(1.0, 0.2, BandSemantics::RatioCentered).is_ok());
    }

    fn map(pairs: &[(&str, f64)]) -> BTreeMap<VarId, f64> {
        pairs.iter().map(|(k, v)| (VarId::new(*k), *v)).collect()
    }

    #[test]
    fn global_examples() {
        let eq = map(&[("a", 0.5), ("b", 0.5)]);
        assert_eq!(
            global_proficiency(&map(&[("a", 0.4), ("b", 0.6)]), &eq).unwrap(),
            0.5
        );
        let w = map(&[("a", 0.75), ("b", 0.25)]);
        let g = global_proficiency(&map(&[("a", 0.8), ("b", 0.4)]), &w).unwrap();
        assert!((g - 0.7).abs() < 1e-15);
        assert_eq!(
            global_proficiency(&map(&[("a", 0.3), ("b", 0.3)]), &w).unwrap(),
            0.3
        );
        assert!(matches!(
            global_proficiency(&map(&[("a", 0.3)]), &w),
            Err(AssessmentError::KeyMismatch(_))
        ));
        assert!(matches!(
            global_proficiency(
                &map(&[("a", 0.3), ("b", 0.3)]),
                &map(&[("a", 0.5), ("b", 0.6)])
            ),
            Err(AssessmentError::WeightSum(_))
        ));
    }

    fn vars() -> BTreeMap<VarId, TrackedVariable> {
        let mut m = BTreeMap::new();
        m.insert(
            "deaths".into(),
            TrackedVariable::event("deaths", Orientation::HigherIsHarder).with_reference(1.0),
        );
        m.insert(
            "damage".into(),
            TrackedVariable::event("damage", Orientation::HigherIsHarder).with_span(100.0),
        );
        m
    }

    fn refs() -> ReferenceSet {
        ReferenceSet::from_curves(vec![ReferenceCurve {
            var_id: "damage".into(),
            z_per_window: 50.0,
            knots: vec![
                Knot(0, 0.0, 0.0),
                Knot(600, 50.0, 5.0),
                Knot(1200, 100.0, 7.0),
            ],
            source: CurveSource::Manual,
        }])
        .unwrap()
    }

    fn window(var: &str, n: f64) -> VariableWindow {
        VariableWindow {
            var_id: var.into(),
            window_start: 0,
            window_len: 600,
            count_or_delta: n,
            samples: vec![],
        }
    }

    #[test]
    fn evaluate_at_reference() {
        let mut rank = CumulativeRank::default();
        let r = evaluate(
            &[window("damage", 50.0), window("deaths", 1.0)],
            &vars(),
            &map(&[("damage", 50.0), ("deaths", 1.0)]),
            &refs(),
            &AssessmentConfig::default(),
            &mut rank,
            600,
        )
        .unwrap();
        for v in r.per_variable.values() {
            assert_eq!(v.difficulty, 0.0);
            assert_eq!(v.difficulty + v.ease, 1.0);
        }
        assert_eq!(r.per_variable[&VarId::new("damage")].performance, Some(1.0));
        assert_eq!(r.global_class, FlowClass::TooEasy);
        assert_eq!(rank.windows, 1);
        assert_eq!(rank.sum, 1.0);
    }

    #[test]
    fn evaluate_deaths_uses_window_len_span() {
        let mut rank = CumulativeRank::default();
        let r = evaluate(
            &[window("deaths", 2.0)],
            &vars(),
            &BTreeMap::new(),
            &ReferenceSet::new(),
            &AssessmentConfig::default(),
            &mut rank,
            600,
        )
        .unwrap();
        let d = &r.per_variable[&VarId::new("deaths")];
        assert!((d.difficulty - 1.0 / 600.0).abs() < 1e-15);
        assert!(!d.clamped);
        assert_eq!(r.mean_performance, None);
        assert_eq!(rank.windows, 0);
    }

    #[test]
    fn evaluate_missing_reference() {
        let mut vs = vars();
        vs.insert(
            "potions".into(),
            TrackedVariable::event("potions", Orientation::HigherIsHarder),
        );
        let err = evaluate(
            &[window("potions", 1.0), window("damage", 1.0)],
            &vs,
            &BTreeMap::new(),
            &refs(),
            &AssessmentConfig::default(),
            &mut CumulativeRank::default(),
            600,
        )
        .unwrap_err();
        assert_eq!(
            err,
            AssessmentError::MissingReference(vec!["potions".into()])
        );
    }

    #[test]
    fn reference_difficulty_centers_reference_play() {
        let config = AssessmentConfig {
            reference_difficulty: 0.5,
            ..AssessmentConfig::default()
        };
        let mut vs = vars();
        vs.insert(
            "health".into(),
            TrackedVariable::event("health", Orientation::HigherIsEasier)
                .with_reference(70.0)
                .with_span(100.0),
        );
        let r = evaluate(
            &[window("damage", 50.0), window("health", 90.0)],
            &vs,
            &BTreeMap::new(),
            &refs(),
            &config,
            &mut CumulativeRank::default(),
            600,
        )
        .unwrap();
        assert_eq!(r.per_variable[&VarId::new("damage")].difficulty, 0.5);
        // more health than reference reads as easier
        assert!((r.per_variable[&VarId::new("health")].difficulty - 0.3).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn difficulty_plus_ease_is_one(n in -1e3..1e3f64, z in -1e3..1e3f64, d in 1e-3..1e3f64) {
            let diff = difficulty_ratio(n, z, d).unwrap();
            prop_assert!((0.0..=1.0).contains(&diff.value));
            prop_assert_eq!(diff.value + ease(diff.value).unwrap(), 1.0);
            let raw = (n - z) / d;
            prop_assert_eq!(diff.clamped, !(0.0..=1.0).contains(&raw));
        }

        #[test]
        fn classify_in_flow_region_is_closed_interval(v in -1.0..2.0f64, t in 0.2..0.8f64, m in 0.01..0.2f64) {
            let band = FlowBand { target: t, margin: m, semantics: BandSemantics::DifficultyCentered };
            let c = classify_flow(v, &band, Orientation::HigherIsHarder);
            prop_assert_eq!(c == FlowClass::InFlow, v >= t - m && v <= t + m);
        }

        #[test]
        fn global_is_monotone_and_permutation_invariant(
            vals in proptest::collection::vec(0.0..=1.0f64, 2..6),
            raw_w in proptest::collection::vec(0.01..1.0f64, 6),
            bump in 0.0..0.5f64,
        ) {
            let k = vals.len();
            let total: f64 = raw_w[..k].iter().sum();
            let ws: Vec<f64> = raw_w[..k].iter().map(|w| w / total).collect();
            let ids: Vec<VarId> = (0..k).map(|i| VarId::new(format!("v{i}"))).collect();
            let values: BTreeMap<_, _> = ids.iter().cloned().zip(vals.iter().copied()).collect();
            let weights: BTreeMap<_, _> = ids.iter().cloned().zip(ws.iter().copied()).collect();
            let g = global_proficiency(&values, &weights).unwrap();
            prop_assert!((0.0..=1.0).contains(&g));

            let mut up = values.clone();
            let first = up.get_mut(&ids[0]).unwrap();
            *first = (*first + bump).min(1.0);
            prop_assert!(global_proficiency(&up, &weights).unwrap() >= g - 1e-15);

            // relabel: reverse ids, carrying (value, weight) pairs together
            let rev: Vec<VarId> = ids.iter().rev().cloned().collect();
            let pv: BTreeMap<_, _> = rev.iter().cloned().zip(vals.iter().copied()).collect();
            let pw: BTreeMap<_, _> = rev.iter().cloned().zip(ws.iter().copied()).collect();
            prop_assert!((global_proficiency(&pv, &pw).unwrap() - g).abs() < 1e-12);
        }
    }
}

//! Metrics model: per-factor multipliers nudged by weighted per-variable
//! signals after every assessment.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::adjustment::{ChangeOp, ChangeRequest, FactorId, Visibility};
use crate::assessment::{AssessmentReport, FlowClass, VariableAssessment};
use crate::telemetry::{Orientation, VarId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalMode {
    /// -1 / 0 / +1 from the flow classification.
    #[default]
    Threshold,
    /// Performance ratio over the 1.0 target, minus one.
    Ratio,
}

/// How the weighted signal combines with the current multiplier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Composition {
    /// `m + sum(w * s)`
    #[default]
    Additive,
    /// `m * (1 + sum(w * s))`
    Multiplicative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightEntry {
    pub var: VarId,
    pub factor: FactorId,
    /// Positive when raising the factor makes the game harder.
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct WeightMatrix {
    pub entries: Vec<WeightEntry>,
    #[serde(default)]
    pub mode: SignalMode,
}

impl WeightMatrix {
    pub fn new(mode: SignalMode) -> Self {
        WeightMatrix {
            entries: Vec::new(),
            mode,
        }
    }

    pub fn with(mut self, var: &str, factor: &str, weight: f64) -> Self {
        self.entries.push(WeightEntry {
            var: var.into(),
            factor: factor.into(),
            weight,
        });
        self
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let mut seen = std::collections::BTreeSet::new();
        for e in &self.entries {
            if !e.weight.is_finite() {
                return Err(ModelError::Config(format!(
                    "weight {} -> {} is not finite",
                    e.var, e.factor
                )));
            }
            if !seen.insert((&e.var, &e.factor)) {
                return Err(ModelError::Config(format!(
                    "duplicate weight {} -> {}",
                    e.var, e.factor
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Multipliers {
    pub values: BTreeMap<FactorId, f64>,
    pub bounds: BTreeMap<FactorId, (f64, f64)>,
}

impl Multipliers {
    /// Every factor starts at the neutral 1.0.
    pub fn neutral(bounds: BTreeMap<FactorId, (f64, f64)>) -> Result<Self, ModelError> {
        for (f, &(lo, hi)) in &bounds {
            if !(lo <= 1.0 && 1.0 <= hi) {
                return Err(ModelError::Config(format!(
                    "multiplier bounds for {f} must contain 1.0"
                )));
            }
        }
        Ok(Multipliers {
            values: bounds.keys().map(|f| (f.clone(), 1.0)).collect(),
            bounds,
        })
    }

    pub fn get(&self, factor: &FactorId) -> Option<f64> {
        self.values.get(factor).copied()
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricsSettings {
    #[serde(default)]
    pub composition: Composition,
    /// Visibility class per factor; unlisted factors are subtle.
    #[serde(default)]
    pub visibility: BTreeMap<FactorId, Visibility>,
}

/// Per-variable signal pushing toward the flow band: negative means "make
/// it easier".
pub fn signal(assessment: &VariableAssessment, mode: SignalMode) -> f64 {
    match mode {
        SignalMode::Threshold => match assessment.classification {
            FlowClass::InFlow => 0.0,
            FlowClass::TooHard => -1.0,
            FlowClass::TooEasy => 1.0,
        },
        SignalMode::Ratio => {
            let Some(perf) = assessment.performance else {
                return 0.0;
            };
            let s = match assessment.orientation {
                Orientation::HigherIsEasier => perf - 1.0,
                Orientation::HigherIsHarder => 1.0 - perf,
            };
            s.clamp(-1.0, 1.0)
        }
    }
}

pub fn metrics_update(
    report: &AssessmentReport,
    matrix: &WeightMatrix,
    multipliers: &Multipliers,
    settings: &MetricsSettings,
) -> Result<(Multipliers, Vec<ChangeRequest>), ModelError> {
    let mut push: BTreeMap<&FactorId, f64> = BTreeMap::new();
    for e in &matrix.entries {
        let va = report
            .per_variable
            .get(&e.var)
            .ok_or_else(|| ModelError::UnknownVariable(e.var.clone()))?;
        if !multipliers.values.contains_key(&e.factor) {
            return Err(ModelError::UnknownFactor(e.factor.clone()));
        }
        *push.entry(&e.factor).or_default() += e.weight * signal(va, matrix.mode);
    }

    let mut next = multipliers.clone();
    let mut requests = Vec::new();
    for (factor, delta) in push {
        let old = multipliers.values[factor];
        let (lo, hi) = multipliers.bounds[factor];
        let raw = match settings.composition {
            Composition::Additive => old + delta,
            Composition::Multiplicative => old * (1.0 + delta),
        };
        let new = raw.clamp(lo, hi);
        if new == old {
            continue;
        }
        next.values.insert(factor.clone(), new);
        let visibility = settings
            .visibility
            .get(factor)
            .copied()
            .unwrap_or(Visibility::SubtleAnytime);
        requests.push(ChangeRequest::new(
            format!("metrics:{factor}"),
            factor.clone(),
            ChangeOp::Set(new),
            (lo, hi),
            visibility,
            report.tick,
        )?);
    }
    Ok((next, requests))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assessment::CumulativeRank;
    use proptest::prelude::*;

    fn va(class: FlowClass, perf: Option<f64>, orientation: Orientation) -> VariableAssessment {
        VariableAssessment {
            n: 0.0,
            z: 0.0,
            span: 1.0,
            orientation,
            difficulty: 0.5,
            ease: 0.5,
            clamped: false,
            classification: class,
            performance: perf,
            performance_class: None,
        }
    }

    fn report(vars: Vec<(&str, VariableAssessment)>) -> AssessmentReport {
        AssessmentReport {
            tick: 600,
            window_start: 0,
            window_len: 600,
            per_variable: vars.into_iter().map(|(k, v)| (VarId::new(k), v)).collect(),
            global_difficulty: 0.5,
            global_proficiency: 0.5,
            global_class: FlowClass::InFlow,
            mean_performance: None,
            cumulative_rank: CumulativeRank::default(),
        }
    }

    fn mults() -> Multipliers {
        Multipliers::neutral([(FactorId::new("enemy_damage"), (0.25, 3.0))].into()).unwrap()
    }

    #[test]
    fn in_flow_means_no_change() {
        let r = report(vec![(
            "deaths",
            va(FlowClass::InFlow, None, Orientation::HigherIsHarder),
        )]);
        let m = WeightMatrix::new(SignalMode::Threshold).with("deaths", "enemy_damage", 0.1);
        let (next, reqs) = metrics_update(&r, &m, &mults(), &MetricsSettings::default()).unwrap();
        assert!(reqs.is_empty());
        assert_eq!(next, mults());
    }

    #[test]
    fn single_pair_step() {
        let r = report(vec![(
            "deaths",
            va(FlowClass::TooEasy, None, Orientation::HigherIsHarder),
        )]);
        let m = WeightMatrix::new(SignalMode::Threshold).with("deaths", "enemy_damage", 0.1);
        let (next, reqs) = metrics_update(&r, &m, &mults(), &MetricsSettings::default()).unwrap();
        assert!((next.get(&"enemy_damage".into()).unwrap() - 1.1).abs() < 1e-15);
        assert_eq!(reqs.len(), 1);
        assert_eq!(reqs[0].tag, "metrics:enemy_damage");
        assert_eq!(reqs[0].visibility, Visibility::SubtleAnytime);
    }

    #[test]
    fn ratio_mode_respects_orientation() {
        let harder = va(FlowClass::InFlow, Some(1.5), Orientation::HigherIsHarder);
        let easier = va(FlowClass::InFlow, Some(1.5), Orientation::HigherIsEasier);
        assert_eq!(signal(&harder, SignalMode::Ratio), -0.5);
        assert_eq!(signal(&easier, SignalMode::Ratio), 0.5);
        assert_eq!(
            signal(
                &va(FlowClass::InFlow, Some(9.0), Orientation::HigherIsEasier),
                SignalMode::Ratio
            ),
            1.0
        );
        assert_eq!(
            signal(
                &va(FlowClass::TooHard, None, Orientation::HigherIsEasier),
                SignalMode::Ratio
            ),
            0.0
        );
    }

    #[test]
    fn multiplicative_composition() {
        let r = report(vec![(
            "deaths",
            va(FlowClass::TooHard, None, Orientation::HigherIsHarder),
        )]);
        let m = WeightMatrix::new(SignalMode::Threshold).with("deaths", "enemy_damage", 0.2);
        let settings = MetricsSettings {
            composition: Composition::Multiplicative,
            ..Default::default()
        };
        let mut cur = mults();
        cur.values.insert("enemy_damage".into(), 2.0);
        let (next, _) = metrics_update(&r, &m, &cur, &settings).unwrap();
        assert!((next.get(&"enemy_damage".into()).unwrap() - 1.6).abs() < 1e-12);
    }

    #[test]
    fn unknown_variable_is_an_error() {
        let r = report(vec![]);
        let m = WeightMatrix::new(SignalMode::Threshold).with("deaths", "enemy_damage", 0.1);
        assert!(matches!(
            metrics_update(&r, &m, &mults(), &MetricsSettings::default()),
            Err(ModelError::UnknownVariable(_))
        ));
    }

    #[test]
    fn duplicate_pair_rejected() {
        let m = WeightMatrix::new(SignalMode::Threshold)
            .with("a", "f", 0.1)
            .with("a", "f", 0.2);
        assert!(m.validate().is_err());
    }

    proptest! {
        #[test]
        fn multipliers_stay_in_bounds(
            steps in proptest::collection::vec((0u8..3, -2.0..2.0f64), 1..100),
            additive in any::<bool>(),
        ) {
            let settings = MetricsSettings {
                composition: if additive { Composition::Additive } else { Composition::Multiplicative },
                ..Default::default()
            };
            let mut cur = mults();
            for (class, w) in steps {
                let class = [FlowClass::TooEasy, FlowClass::InFlow, FlowClass::TooHard][class as usize];
                let r = report(vec![("deaths", va(class, None, Orientation::HigherIsHarder))]);
                let m = WeightMatrix::new(SignalMode::Threshold).with("deaths", "enemy_damage", w);
                let (next, reqs) = metrics_update(&r, &m, &cur, &settings).unwrap();
                let v = next.get(&"enemy_damage".into()).unwrap();
                prop_assert!((0.25..=3.0).contains(&v));
                for req in reqs {
                    prop_assert_eq!(req.bounds, (0.25, 3.0));
                }
                cur = next;
            }
        }
    }
}

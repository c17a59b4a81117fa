//! Game-agnostic dynamic difficulty adjustment.
//!
//! A host game registers the player-performance variables it can observe
//! ([`telemetry`]), loads reference curves recorded from bot playthroughs
//! ([`reference`]), and lets the [`engine`] assess each evaluation window
//! ([`assessment`]). Models ([`models`]) turn assessments into tagged,
//! clamped change requests that the [`adjustment`] queue applies only when
//! the player will not notice.
//!
//! The [`simulator`] is a deterministic wave arena used to exercise all of
//! this end to end; [`harness`] drives calibration, runs and experiments.

// `!(a < b)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adjustment;
pub mod assessment;
pub mod engine;
pub mod harness;
pub mod models;
pub mod reference;
pub mod rng;
pub mod simulator;
pub mod telemetry;

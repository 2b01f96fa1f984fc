//! Relabels unlabeled AIS position streams with vessel identities.
//!
//! The pipeline projects active track endpoints forward, gates and scores
//! them, keeps the best `k` as candidate ancestors for each new posit and lets
//! a small feed-forward classifier (or a baseline decider) pick among them or
//! start a new track.

pub mod baselines;
pub mod classifier;
pub mod cli;
pub mod config;
pub mod dataio;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod gating;
pub mod kinematics;
pub mod screening;
pub mod tracker;
pub mod utm;
pub mod workflow;

pub use error::{Error, Result};
pub use gating::{CandidateScore, GateConfig, ScoreConfig, TrackId};
pub use kinematics::{Posit, ProjectionModel, RawRecord};
pub use screening::{EndpointStore, ScreenConfig, ScreenResult};

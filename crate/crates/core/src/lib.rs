//! Core library for forecasting a computer user's next action.
//!
//! The pipeline runs in four stages:
//!
//! - [`events`] parses recorded keyboard/mouse logs (JSONL).
//! - [`tokenizer`] turns raw events into discrete [`tokenizer::UserAction`]s
//!   with per-action context, and [`vocab`] maps them to dense indices.
//! - [`patch`] identifies clicked widgets by their DPI-normalized image patch,
//!   using normalized cross-correlation for matching and screen localization.
//! - [`model`] holds a from-scratch GRU/LSTM forecaster with an MLP head,
//!   trained with cross-entropy and Adam.
//!
//! [`attraction`] turns predicted button locations into a cursor pull field,
//! and [`synth`] generates seeded synthetic users and screens with known ground
//! truth.

pub mod attraction;
pub mod config;
pub mod corpus;
pub mod error;
pub mod events;
pub mod geom;
pub mod model;
pub mod patch;
pub mod synth;
pub mod tokenizer;
pub mod vocab;

pub use error::{Error, Result};

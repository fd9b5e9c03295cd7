//! Supervised-learning predictions of posted-price purchase decisions from
//! BDM willingness-to-pay, two-alternative forced choice and Buy-task data.
//!
//! The pipeline runs: [`sim`] or [`domain::load_cohort`] produce a
//! [`domain::Cohort`]; [`features`] turns its Buy rows into one of eight
//! feature spaces; [`learners`] fit purchase-probability models that
//! [`model`] wraps behind one interface; [`evaluation`] scores them under
//! repeated holdout protocols; [`pricing`] turns fitted models into demand
//! curves and revenue-maximizing prices.

pub mod acceptance;
pub mod cli;
pub mod domain;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod learners;
pub mod manifest;
pub mod model;
pub mod pricing;
pub mod rng;
pub mod sim;

pub use error::{Error, Result};

//! Optimal-transport repair of tabular features for conditional fairness.
//!
//! Repair plans are designed once on a small, fully labelled research set
//! ([`repair::design_repair_model`]) and then applied to arbitrarily large
//! archives record by record ([`repair::repair_dataset`]). Within each group
//! of the unprotected attribute `u`, every feature is transported from its
//! `s`-conditional distribution onto the W2 barycentre of the two
//! `s`-conditionals, which removes the dependence of the feature on `s`
//! given `u`.

pub mod datagen;
pub mod density;
pub mod error;
pub mod ingest;
pub mod io;
pub mod metrics;
pub mod model;
pub mod repair;
pub mod transport;

pub use error::{Error, Result};

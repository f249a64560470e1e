//! Core of the interactive reconstruction harness.

pub mod datasets;
pub mod models;
pub mod disentanglement;
pub mod task;
pub mod analytics;
pub mod single_dim;
pub mod agents;

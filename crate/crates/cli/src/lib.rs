//! Experiment driver for the Koopman learning library: config ingestion,
//! orchestration of the equation-seeded online method against batch EDMD,
//! and CSV/SVG output.

pub mod config;
pub mod experiment;
pub mod output;
pub mod plot;
pub mod report;

pub use config::ExperimentConfig;
pub use experiment::{Method, SummaryRow};

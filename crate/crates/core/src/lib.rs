//! Self-play data mixing for a referential guessing game: synthetic scenes,
//! a rule-based oracle, a scripted human-proxy questioner, a recurrent
//! questioner trained from scratch, corpus mixing and dialogue metrics.

pub mod corpus;
pub mod dialogue;
pub mod error;
pub mod experiment;
pub mod jsonl;
pub mod lang;
pub mod metrics;
pub mod model;
pub mod oracle;
pub mod rng;
pub mod scene;
pub mod selfplay;
pub mod teacher;

pub use error::{Error, Result};

//! Audience persona engine.
//!
//! Turns a channel's comment corpus into a dimension/value trait taxonomy,
//! clusters annotated comments into audience segments, synthesizes persona
//! profiles, and serves retrieval-grounded persona dialogue.
//!
//! All model access goes through [`gateway::Gateway`]; with
//! [`gateway::Gateway::stub`] the whole pipeline runs offline and
//! deterministically.

pub mod cluster;
pub mod corpus;
pub mod dialogue;
pub mod distill;
pub mod exec;
pub mod flags;
pub mod gateway;
pub mod json;
pub mod metrics;
pub mod persona;
pub mod pipeline;

pub use exec::ExecMode;
pub use flags::Flag;

//! Corpus-driven instruction and solution probability heuristics for
//! inductive program search.
//!
//! The pipeline: load or generate a [`corpus::Corpus`] of program units,
//! cluster it into instruction subsets ([`subsets`]), derive instruction
//! probabilities and per-size thresholds ([`probability`]), count the
//! search space that survives the thresholds exactly ([`spacecount`]),
//! check how thresholds generalise to unseen units ([`xval`]), and use them
//! to prune an enumerative synthesizer ([`synth`]).

pub mod corpus;
pub mod probability;
pub mod scope;
pub mod spacecount;
pub mod subsets;
pub mod synth;
pub mod xval;

pub use scope::{Scope, LOG_SLACK};

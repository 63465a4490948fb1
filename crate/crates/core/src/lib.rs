//! Differentiable probabilistic logic networks.
//!
//! Truth-value strengths live on a reverse-mode [`autodiff::Tape`], so
//! chaining through PLN rules builds a differentiable computation graph and
//! strengths (or rule formula weights) can be fitted by gradient descent.

pub mod atom_store;
pub mod autodiff;
pub mod numfmt;
pub mod pattern_matcher;
pub mod pln_rules;
pub mod rule_engine;
pub mod trainer;
pub mod experiments;

//! Equation-description pipeline: synthetic corpus generation, a conv +
//! attention-LSTM model that reads rendered equation images into controlled
//! English, the inverse description parser, and text-similarity metrics.
//!
//! The controlled language is designed so that every rendered expression has
//! exactly one description and every emitted description parses back to the
//! expression that produced it; [`parse`] is the machine check for that.

pub mod autodiff;
pub mod data;
pub mod error;
pub mod exec;
pub mod expr;
pub mod layout;
pub mod metrics;
pub mod model;
pub mod parse;
pub mod pipeline;
pub mod verbalize;
pub mod words;

pub use error::{Error, Result};

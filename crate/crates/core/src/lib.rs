//! Automated trustworthiness testing for text classifiers.
//!
//! A prediction is judged by explaining it with a perturbation-based
//! surrogate ([`explain`]), keeping the words that pushed the model toward
//! the predicted class ([`oracle::filter_explanation`]), and asking an
//! ensemble of calibrated word-embedding models ([`calibrate`], [`relate`])
//! whether those words are semantically related to the class name.
//!
//! The [`noise`], [`experiment`] and [`analyze`] modules run the
//! noise-injection grid used to choose a tool configuration, and [`evalgt`]
//! scores the oracle against human ground truth.

pub mod analyze;
pub mod calibrate;
pub mod classify;
pub mod corpus;
pub mod embed;
mod error;
pub mod evalgt;
pub mod experiment;
pub mod explain;
pub mod jsonl;
pub mod noise;
pub mod oracle;
pub mod relate;
pub mod seed;

pub use error::{Error, Result};

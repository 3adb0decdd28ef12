//! Two-phase human labelling of oracle explanations.
//!
//! An annotator first sees only the text and the candidate classes and must
//! guess the class. Only after a correct guess is the explanation (its top
//! ten words, scores and highlight offsets) revealed, and the annotator
//! labels it trustworthy, untrustworthy or undefined. Two agreeing labels
//! settle a task; a disagreement brings in a third annotator.
//!
//! [`workflow`] holds the state machine, [`server`] exposes it over HTTP.

pub mod pool;
pub mod server;
pub mod workflow;

pub use pool::{load_pool, PoolItem};
pub use workflow::{ApiError, Event, Workflow};

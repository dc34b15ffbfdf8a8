//! Batch-mode active model adaptation over precomputed embeddings.
//!
//! A source model's class landmarks define, for every target instance, how
//! its position relative to those landmarks changes between a start layer and
//! an end layer. Instances whose change disagrees with what their source-class
//! mixture predicts are "distinctive"; the loop queries labels for the most
//! distinctive instances first and shifts toward prediction uncertainty as the
//! target head improves.

pub mod active;
pub mod pattern;
pub mod selection;
pub mod store;
pub mod trainer;

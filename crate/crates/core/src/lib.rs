//! Privacy-policy analysis: split policies into sentences, classify each
//! sentence as sensitive (describing data practices or user choices) or not,
//! shorten policies to their sensitive sentences, tag those sentences with
//! data-practice topics and render reports.

pub mod classify;
pub mod condense;
pub mod corpus;
pub mod error;
pub mod evaluate;
pub mod features;
pub mod jsonl;
pub mod preprocess;
pub mod report;
pub mod stem;
pub mod topics;

pub use error::{Error, Result};

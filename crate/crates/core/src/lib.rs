//! Detect informal references to cataloged research datasets in scholarly
//! full text, link them to the catalog, and feed reviewer verdicts back as
//! bibliography entries and gold training data.

pub mod acquire;
pub mod catalog;
pub mod corpus_index;
pub mod docparse;
pub mod extract;
pub mod jsonl;
pub mod linkage;
pub mod par;
pub mod pipeline;
pub mod report;
pub mod review;
pub mod text;

pub use par::Execution;

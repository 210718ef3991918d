//! Knowledge-augmented graph text classification.
//!
//! Documents, words and lexicon concepts form one heterogeneous graph. A
//! graph encoder (GCN, GAT or DGCNN) followed by an attention block produces
//! document features; a classifier on those is interpolated with a second
//! classifier on precomputed document embeddings.
//!
//! Typical flow: [`corpus::load_corpus`] and [`lexicon::load_lexicon`],
//! then [`pipeline::Experiment::build`], then [`pipeline::Experiment::run_fold`]
//! or [`pipeline::cross_validate`].

pub mod attention;
pub mod classifier;
pub mod cli;
pub mod corpus;
pub mod embeddings;
pub mod encoders;
pub mod error;
pub mod fixtures;
pub mod gradcheck;
pub mod graph;
pub mod lexicon;
pub mod model;
pub mod numerics;
pub mod pipeline;
pub mod training;
mod util;

pub use error::{Error, Result};

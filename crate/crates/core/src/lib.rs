//! Joint entity, relation and event extraction as anchored graph parsing.
//!
//! Sentences are encoded as information graphs ([`graph`]), a query-based
//! biaffine parser ([`parser`]) predicts such graphs from token embeddings
//! ([`embed`]), and predictions are scored with the usual trigger/argument
//! metrics ([`score`]).

pub mod checkpoint;
pub mod corpus;
pub mod embed;
pub mod fixtures;
pub mod graph;
pub mod io;
pub mod nesting;
pub mod nn;
pub mod parser;
pub mod score;
pub mod synth;
pub mod train;

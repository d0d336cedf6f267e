pub mod graph;
pub mod parse;
pub mod prompts;
pub mod lexicon;
pub mod provider;
pub mod filters;
pub mod explore;
pub mod dataset;
pub mod pipeline;
pub mod eval;
pub mod stats;

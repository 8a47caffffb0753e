//! Toolkit for pairwise LLM evaluators: judging, preference-fairness
//! prompt optimization on unlabeled data, and meta-evaluation against
//! human judgments.

pub mod backend;
pub mod error;
pub mod judge;
pub mod metaeval;
pub mod model;
pub mod objectives;
pub mod optimizer;
pub mod synth;

pub use error::{Error, Result};
pub use model::{
    enumerate_pairs, load_dataset, save_dataset, AspectSpec, Candidate, Dataset, EvalItem,
    Instruction, PairTask, UnlabeledDataset, UnlabeledItem,
};

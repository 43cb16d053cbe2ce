//! Multiomics classification pipeline: per-omics sample graphs, graph-attention
//! encoders with contrastive pretraining, attention fusion, adaptive
//! cross-omics distillation, and batch experiment harnesses.
//!
//! Everything runs on a deterministic CPU tensor engine with reverse-mode
//! automatic differentiation; identical seeds reproduce identical numbers.

pub mod distill;
pub mod error;
pub mod fusion;
pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod data;
pub mod gat;
pub mod gcl;
pub mod gradcheck;
pub mod graph;
pub mod heads;
pub mod metrics;
pub mod model;
pub mod params;
pub mod pipeline;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{AdamState, Gradients, Tape, Tensor};

/// CLI entry point; returns the process exit code.
pub fn run_cli() -> i32 {
    cli::run()
}

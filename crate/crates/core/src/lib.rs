//! A self-contained lazy-tensor runtime with just-in-time dynamic batching.
//!
//! Operations on lazy handles are recorded into a depth-indexed lookup table
//! instead of executing; at a materialization point or scope exit the
//! scheduler groups same-depth nodes by signature, stacks their operands on a
//! batch axis, launches each group's kernel once, and slices results back to
//! the individual samples. Plans are cached by scope structure, so repeated
//! passes over structurally identical workloads skip the grouping work.
//!
//! The crate ships a child-sum tree LSTM workload that drives the engine, a
//! granularity simulator that contrasts kernel-level with subgraph-level
//! batching on tree corpora, and a CLI for corpus generation, benchmarking,
//! and simulation.

pub mod autodiff;
pub mod bench;
pub mod cli;
pub mod corpus;
pub mod counter;
pub mod granularity;
pub mod graph;
pub mod scheduler;
pub mod tensor;
pub mod treelstm;

pub use graph::{BatchingScope, GraphError, LazyTensor, NodeKind, Param, SignatureKey};
pub use scheduler::{ExecStats, PlanCache};
pub use tensor::{EwiseKind, Tensor, TensorError};

//! Pure analysis and synthesis machinery for path-guided unit test generation.
//!
//! The crate is `no_std` and only needs `alloc`. Everything that touches the
//! file system, processes or the network lives in the `chaintest` crate.
//!
//! Pipeline stages, in order:
//!
//! 1. [`paths`] enumerates condition chains over a [`model::ControlFlowGraph`].
//! 2. [`cover`] picks a small subset of chains covering every coverage atom.
//! 3. [`context`] assembles the focal context shown next to the focal method.
//! 4. [`prompt`] plans tests and renders one generation prompt per test.
//! 5. [`repair`] runs the change-log repair loop for tests that fail to compile.
//! 6. [`metrics`] folds finished artifacts into a session report.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod build;
pub mod context;
pub mod cover;
pub mod llm;
pub mod metrics;
pub mod model;
pub mod paths;
pub mod prompt;
pub mod repair;
pub mod shape;
pub mod validate;

#[cfg(feature = "testkit")]
pub mod testkit;

mod util;

pub use model::{
    BasicBlock, BlockId, ConditionChain, ConditionExpr, ConditionShape, ConditionStep,
    ControlFlowGraph, CoverageAtom, FocalMethod, Outcome, ProgramModel, TermKind, Terminator,
    TestArtifact, TestKind, TestStatus,
};

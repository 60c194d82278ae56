//! Distributed constraint optimisation by dynamic programming: DPOP,
//! MB-DPOP and RMB-DPOP over a deterministic simulated message bus.
//!
//! The crate is `no_std` and only needs `alloc`.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod bounded;
pub mod dpop;
pub mod generator;
pub mod mbdpop;
pub mod model;
pub mod oracle;
pub mod pseudotree;
pub mod rmbdpop;
pub mod runtime;
pub mod solver;
pub mod tables;

pub use model::{Assignment, CostTable, Problem, VariableId};
pub use pseudotree::{build_pseudo_tree, PseudoTree};

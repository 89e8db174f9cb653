//! Campaign orchestration around the core assessment library: configuration,
//! repetition scheduling, result persistence, provenance, statistics over
//! stores, and paper-style table emission.
//!
//! The split of responsibilities: `flowbench-core` knows how to run one
//! pipeline on one split; this crate knows how to run thousands of them
//! reproducibly, write every outcome down, and read the pile back.

pub mod campaign;
pub mod cli;
pub mod config;
pub mod hardware;
pub mod store;
pub mod synth;
pub mod tables;

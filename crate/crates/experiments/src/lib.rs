//! RiverSwim experiments, the replication harness and the `qinfer` CLI.

pub mod cli;
pub mod config;
pub mod riverswim;
pub mod run;
pub mod table;

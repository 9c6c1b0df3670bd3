//! Hybrid raw-data query framework.
//!
//! Queries run over two storage formats at once: raw CSV files scanned in
//! place with cached positional maps ([`insitu`]), and a columnar loaded
//! store of binary column files ([`colstore`]). The [`orr`] planner decides
//! which attributes are worth loading by classifying queries by join count
//! and fitting the loaded partition into a storage budget. The [`muar`]
//! scheduler dispatches queries once live resource availability (tracked by
//! [`rmon`]) clears a minimum bar, sizing each query's hash-join work memory
//! from its join count and the free RAM at dispatch time. [`exec`] routes
//! every attribute access to whichever format holds it and joins across
//! formats with a spill-aware grace hash join.
//!
//! The `examples/` directory walks through each capability; the `rawhf`
//! binary wires them into `register` / `plan` / `load` / `run` / `gen` /
//! `report` commands.

pub mod catalog;
pub mod cli;
pub mod colstore;
pub mod config;
pub mod csvio;
pub mod driver;
pub mod error;
pub mod exec;
pub mod gen;
pub mod insitu;
pub mod metrics;
pub mod muar;
pub mod orr;
pub mod rmon;
pub mod value;

pub use error::{Error, Result};

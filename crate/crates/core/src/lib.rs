//! Cycle-accurate simulation of a single LPDDR4/LPDDR5 channel behind an
//! FR-FCFS memory controller.
//!
//! The crate is organised bottom-up: [`config`] resolves device parameters
//! and clocking, [`protocol`] enforces the command timing rules,
//! [`controller`] turns requests into commands, [`traffic`] produces
//! requests, [`engine`] runs the cycle loop and [`sweep`] drives many runs.

pub mod config;
pub mod controller;
pub mod engine;
pub mod protocol;
pub mod sweep;
pub mod traffic;

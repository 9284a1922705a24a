//! Device-side protocol: commands, per-bank state, bus occupancy and the
//! timing rules that decide when a command may go out.

mod bank;
mod bus;
mod device;
mod trace;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::Standard;

pub use bank::{BankPhase, BankState};
pub use bus::{measure_window, BusModel, Interval, WindowError};
pub use device::{data_interval, Blocked, DataSlots, DeviceState};
pub use trace::{read_trace, validate_trace, write_trace, TraceError, Violation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CommandKind {
    Act,
    Rd,
    Wr,
    Rda,
    Wra,
    Pre,
    RefPb,
}

impl CommandKind {
    pub const ALL: [CommandKind; 7] = [
        CommandKind::Act,
        CommandKind::Rd,
        CommandKind::Wr,
        CommandKind::Rda,
        CommandKind::Wra,
        CommandKind::Pre,
        CommandKind::RefPb,
    ];

    pub fn is_column(self) -> bool {
        matches!(
            self,
            CommandKind::Rd | CommandKind::Wr | CommandKind::Rda | CommandKind::Wra
        )
    }

    pub fn is_read(self) -> bool {
        matches!(self, CommandKind::Rd | CommandKind::Rda)
    }

    pub fn is_write(self) -> bool {
        matches!(self, CommandKind::Wr | CommandKind::Wra)
    }

    pub fn auto_precharge(self) -> bool {
        matches!(self, CommandKind::Rda | CommandKind::Wra)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            CommandKind::Act => "ACT",
            CommandKind::Rd => "RD",
            CommandKind::Wr => "WR",
            CommandKind::Rda => "RDA",
            CommandKind::Wra => "WRA",
            CommandKind::Pre => "PRE",
            CommandKind::RefPb => "REFpb",
        }
    }
}

impl fmt::Display for CommandKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CommandKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        CommandKind::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown command kind `{s}`"))
    }
}

/// Default command-bus cost in command clock cycles. LPDDR5 sends commands
/// on both clock edges, so an ACT fits in two cycles and everything else in
/// one; LPDDR4 needs twice that on its single-rate CA bus.
pub fn slot_cost(standard: Standard, kind: CommandKind) -> u64 {
    match (standard, kind) {
        (Standard::Lpddr5, CommandKind::Act) => 2,
        (Standard::Lpddr5, _) => 1,
        (Standard::Lpddr4, CommandKind::Act) => 4,
        (Standard::Lpddr4, _) => 2,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Command {
    pub kind: CommandKind,
    pub bank_group: u32,
    /// Bank index within its group.
    pub bank: u32,
    pub row: u32,
    pub column: u32,
    pub issue_cycle: u64,
}

impl Command {
    pub fn new(kind: CommandKind, bank_group: u32, bank: u32, row: u32, column: u32) -> Self {
        Command {
            kind,
            bank_group,
            bank,
            row,
            column,
            issue_cycle: 0,
        }
    }

    pub fn at(mut self, cycle: u64) -> Self {
        self.issue_cycle = cycle;
        self
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProtocolError {
    #[error("illegal issue of {kind} to bank {bank} at cycle {cycle}: {reason:?}")]
    IllegalIssue {
        kind: CommandKind,
        bank: u32,
        cycle: u64,
        reason: Blocked,
    },
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_page_access_costs_three_lp5_slots() {
        let total = slot_cost(Standard::Lpddr5, CommandKind::Act) + slot_cost(Standard::Lpddr5, CommandKind::Rda);
        assert_eq!(total, 3);
        assert_eq!(slot_cost(Standard::Lpddr4, CommandKind::Act), 4);
        assert_eq!(slot_cost(Standard::Lpddr4, CommandKind::RefPb), 2);
    }

    #[test]
    fn kind_names_round_trip() {
        for k in CommandKind::ALL {
            assert_eq!(k.as_str().parse::<CommandKind>(), Ok(k));
        }
        assert!("NOP".parse::<CommandKind>().is_err());
    }
}

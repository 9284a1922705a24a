use std::collections::VecDeque;

use serde::Serialize;

use super::bank::BankState;
use super::bus::{BusModel, Interval};
use super::{Command, CommandKind, ProtocolError};
use crate::config::{CycleTimings, DeviceConfig};

/// Why a command cannot be issued at a given cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Blocked {
    NoSuchBank,
    BankState,
    RowMismatch,
    Timing(&'static str),
    CommandBus,
    DataBus,
}

/// Data-bus intervals of one burst: one, or two for an interleaved burst.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DataSlots {
    slots: [Interval; 2],
    len: usize,
}

impl DataSlots {
    pub fn as_slice(&self) -> &[Interval] {
        &self.slots[..self.len]
    }

    pub fn end(&self) -> u64 {
        self.slots[self.len - 1].end
    }
}

/// Data-bus occupancy of a column command issued at `now`.
pub fn data_interval(kind: CommandKind, t: &CycleTimings, now: u64) -> DataSlots {
    debug_assert!(kind.is_column());
    let start = now + if kind.is_read() { t.rl } else { t.wl };
    if t.interleaved {
        let first = Interval::new(start, start + t.half_burst);
        let second_start = first.end + t.interleave_gap;
        DataSlots {
            slots: [first, Interval::new(second_start, second_start + t.half_burst)],
            len: 2,
        }
    } else {
        let only = Interval::new(start, start + t.burst);
        DataSlots {
            slots: [only, only],
            len: 1,
        }
    }
}

/// Mutable state of one channel: banks, the ACT window and both buses.
#[derive(Debug, Clone)]
pub struct DeviceState {
    timing: CycleTimings,
    banks_per_group: u32,
    bank_groups: u32,
    banks: Vec<BankState>,
    // last four ACTs, oldest first
    act_window: VecDeque<u64>,
    last_act: Option<u64>,
    last_column: Option<u64>,
    last_column_in_group: Vec<Option<u64>>,
    // bus turnaround limits
    next_read: u64,
    // write-to-read limit within each bank group
    next_read_in_group: Vec<u64>,
    next_write: u64,
    bus: BusModel,
}

impl DeviceState {
    pub fn new(config: &DeviceConfig, timing: CycleTimings) -> Self {
        let groups = config.bank_groups();
        DeviceState {
            timing,
            banks_per_group: config.bank_mode.banks_per_group(),
            bank_groups: groups,
            banks: vec![BankState::default(); config.banks() as usize],
            act_window: VecDeque::with_capacity(4),
            last_act: None,
            last_column: None,
            last_column_in_group: vec![None; groups as usize],
            next_read: 0,
            next_read_in_group: vec![0; groups as usize],
            next_write: 0,
            bus: BusModel::new(),
        }
    }

    pub fn timing(&self) -> &CycleTimings {
        &self.timing
    }

    pub fn bus(&self) -> &BusModel {
        &self.bus
    }

    pub fn banks(&self) -> &[BankState] {
        &self.banks
    }

    pub fn bank_count(&self) -> usize {
        self.banks.len()
    }

    /// Flat index of (group, bank-in-group), if it exists.
    pub fn flat_bank(&self, bank_group: u32, bank: u32) -> Option<usize> {
        (bank_group < self.bank_groups && bank < self.banks_per_group)
            .then(|| (bank_group * self.banks_per_group + bank) as usize)
    }

    pub fn split_bank(&self, flat: usize) -> (u32, u32) {
        let flat = flat as u32;
        (flat / self.banks_per_group, flat % self.banks_per_group)
    }

    pub fn bank(&self, flat: usize) -> &BankState {
        &self.banks[flat]
    }

    pub fn slot_cost(&self, kind: CommandKind) -> u64 {
        match kind {
            CommandKind::Act => self.timing.act_slots,
            _ => self.timing.cmd_slots,
        }
    }

    pub fn can_issue(&self, cmd: &Command, now: u64) -> bool {
        self.check(cmd, now).is_ok()
    }

    /// Like [`can_issue`](Self::can_issue) but names the first rule that
    /// blocks the command.
    pub fn check(&self, cmd: &Command, now: u64) -> Result<(), Blocked> {
        let flat = self.flat_bank(cmd.bank_group, cmd.bank).ok_or(Blocked::NoSuchBank)?;
        let bank = &self.banks[flat];
        let t = &self.timing;
        match cmd.kind {
            CommandKind::Act => {
                if bank.open_row.is_some() {
                    return Err(Blocked::BankState);
                }
                if now < bank.earliest_act {
                    return Err(Blocked::Timing("tRP/tRFCpb"));
                }
                if self.last_act.is_some_and(|a| now < a + t.rrd) {
                    return Err(Blocked::Timing("tRRD"));
                }
                if self.act_window.len() == 4 && now < self.act_window[0] + t.faw {
                    return Err(Blocked::Timing("tFAW"));
                }
            }
            k if k.is_column() => {
                match bank.open_row {
                    None => return Err(Blocked::BankState),
                    Some(r) if r != cmd.row => return Err(Blocked::RowMismatch),
                    Some(_) => {}
                }
                let (bank_ready, bus_ready) = if k.is_read() {
                    (
                        bank.earliest_rd,
                        self.next_read.max(self.next_read_in_group[cmd.bank_group as usize]),
                    )
                } else {
                    (bank.earliest_wr, self.next_write)
                };
                if now < bank_ready {
                    return Err(Blocked::Timing("tRCD"));
                }
                if now < bus_ready {
                    return Err(Blocked::Timing("turnaround"));
                }
                if self.last_column.is_some_and(|c| now < c + t.ccd_s) {
                    return Err(Blocked::Timing("tCCD_S"));
                }
                if self.last_column_in_group[cmd.bank_group as usize].is_some_and(|c| now < c + t.ccd_l) {
                    return Err(Blocked::Timing("tCCD_L"));
                }
                if !self.bus.data_free(data_interval(k, t, now).as_slice()) {
                    return Err(Blocked::DataBus);
                }
            }
            CommandKind::Pre => {
                if bank.open_row.is_none() {
                    return Err(Blocked::BankState);
                }
                if now < bank.earliest_pre {
                    return Err(Blocked::Timing("tRAS/tRTP/tWR"));
                }
            }
            CommandKind::RefPb => {
                if bank.open_row.is_some() {
                    return Err(Blocked::BankState);
                }
                if now < bank.earliest_ref {
                    return Err(Blocked::Timing("tRP/tRFCpb"));
                }
            }
            _ => unreachable!(),
        }
        if !self.bus.command_free(now) {
            return Err(Blocked::CommandBus);
        }
        Ok(())
    }

    /// Applies `cmd` at `now`. The command must pass [`check`](Self::check);
    /// anything else is a scheduler bug.
    pub fn issue(&mut self, cmd: &Command, now: u64) -> Result<Option<DataSlots>, ProtocolError> {
        self.check(cmd, now).map_err(|reason| ProtocolError::IllegalIssue {
            kind: cmd.kind,
            bank: cmd.bank_group * self.banks_per_group + cmd.bank,
            cycle: now,
            reason,
        })?;
        let flat = self.flat_bank(cmd.bank_group, cmd.bank).expect("checked");
        let t = self.timing.clone();
        self.bus.retire(now);
        self.bus.reserve_command(now, self.slot_cost(cmd.kind));
        let bank = &mut self.banks[flat];
        let mut slots = None;
        match cmd.kind {
            CommandKind::Act => {
                bank.open_row = Some(cmd.row);
                bank.activated_at = now;
                BankState::bump(&mut bank.earliest_rd, now + t.rcd);
                BankState::bump(&mut bank.earliest_wr, now + t.rcd);
                BankState::bump(&mut bank.earliest_pre, now + t.ras);
                if self.act_window.len() == 4 {
                    self.act_window.pop_front();
                }
                self.act_window.push_back(now);
                self.last_act = Some(now);
            }
            kind if kind.is_column() => {
                let data = data_interval(kind, &t, now);
                self.bus.reserve_data(data.as_slice());
                slots = Some(data);
                self.last_column = Some(now);
                self.last_column_in_group[cmd.bank_group as usize] = Some(now);
                let precharge_ok = if kind.is_read() {
                    let write_at = (now + t.rl + t.burst_span + t.rtw_penalty).saturating_sub(t.wl);
                    BankState::bump(&mut self.next_write, write_at);
                    now + t.burst + t.rtp
                } else {
                    let data_end = now + t.wl + t.burst_span + t.wtr_penalty;
                    BankState::bump(&mut self.next_read, data_end + t.wtr_s);
                    BankState::bump(&mut self.next_read_in_group[cmd.bank_group as usize], data_end + t.wtr);
                    now + t.wl + t.burst_span + t.wr
                };
                BankState::bump(&mut bank.earliest_pre, precharge_ok);
                if kind.auto_precharge() {
                    let precharge_at = precharge_ok.max(bank.activated_at + t.ras);
                    bank.open_row = None;
                    BankState::bump(&mut bank.earliest_act, precharge_at + t.rp);
                    BankState::bump(&mut bank.earliest_ref, precharge_at + t.rp);
                }
            }
            CommandKind::Pre => {
                bank.open_row = None;
                BankState::bump(&mut bank.earliest_act, now + t.rp);
                BankState::bump(&mut bank.earliest_ref, now + t.rp);
            }
            CommandKind::RefPb => {
                BankState::bump(&mut bank.earliest_act, now + t.rfc_pb);
                BankState::bump(&mut bank.earliest_ref, now + t.rfc_pb);
                BankState::bump(&mut bank.refresh_until, now + t.rfc_pb);
            }
            _ => unreachable!(),
        }
        Ok(slots)
    }
}

//! Memory controller: turns requests into a legal command stream.
//!
//! Reads and writes wait in separate bounded queues. Writes are batched: the
//! controller serves reads until the write queue reaches the high watermark
//! (and, when that fills the queue, until the read queue is nearly empty),
//! then drains writes down to the low watermark. Within the active queue an
//! FR-FCFS scheduler picks the oldest ready row hit, falling back to the
//! oldest ready row command. Per-bank refresh runs alongside and only takes
//! priority once a bank owes too many refreshes.

mod mapping;
mod refresh;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::config::{ControllerConfig, PagePolicy, SimConfig};
use crate::protocol::{Command, CommandKind, DeviceState};

pub use mapping::{AddressMapper, MapError, MappedAddress};
pub use refresh::RefreshState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RequestKind {
    Read,
    Write,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Request {
    pub id: u64,
    pub kind: RequestKind,
    pub address: u64,
    pub arrival_cycle: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Admission {
    Accepted,
    /// Queue full; the request is handed back for a later retry.
    Backpressure(Request),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum DrainMode {
    ServingReads,
    DrainingWrites,
}

/// State of a request's target row when it is looked at.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowState {
    Closed,
    Hit,
    Conflict,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ServicePlan {
    pub kind: RequestKind,
    pub row_state: RowState,
}

/// Commands still needed to serve a request under `policy`.
///
/// Closed page never sends an explicit PRE: a conflicting row is closed by
/// the auto-precharge of whoever opened it, so the template starts at ACT.
pub fn apply_page_policy(plan: ServicePlan, policy: PagePolicy) -> Vec<CommandKind> {
    use CommandKind::*;
    let column = match (plan.kind, policy) {
        (RequestKind::Read, PagePolicy::Open) => Rd,
        (RequestKind::Write, PagePolicy::Open) => Wr,
        (RequestKind::Read, PagePolicy::Closed) => Rda,
        (RequestKind::Write, PagePolicy::Closed) => Wra,
    };
    match (plan.row_state, policy) {
        (RowState::Hit, _) => vec![column],
        (RowState::Closed, _) | (RowState::Conflict, PagePolicy::Closed) => vec![Act, column],
        (RowState::Conflict, PagePolicy::Open) => vec![Pre, Act, column],
    }
}

#[derive(Debug, Clone)]
struct Entry {
    request: Request,
    mapped: MappedAddress,
    bank: usize,
    // an ACT was issued on this request's behalf
    activated: bool,
    // id of an older request to the same address this one must not pass
    blocked_by: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum QueueKind {
    Read,
    Write,
}

/// A command chosen by the scheduler, with the request it serves.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Selection {
    pub command: Command,
    queue: Option<QueueKind>,
    request_id: u64,
}

/// A request whose column command has been issued.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Completion {
    pub request: Request,
    pub row_hit: bool,
    pub column_cycle: u64,
}

#[derive(Debug, Clone)]
pub struct ControllerState {
    config: ControllerConfig,
    policy: PagePolicy,
    mapper: AddressMapper,
    banks_per_group: u32,
    read_queue: Vec<Entry>,
    write_queue: Vec<Entry>,
    drain_mode: DrainMode,
    pending_per_bank: Vec<u32>,
    // address -> ids of queued requests, oldest first
    outstanding: HashMap<u64, Vec<(u64, RequestKind)>>,
    refresh: RefreshState,
}

impl ControllerState {
    pub fn new(sim: &SimConfig) -> Self {
        let device = &sim.device;
        let banks = device.banks() as usize;
        let timing = crate::config::CycleTimings::derive(device, &sim.timing);
        ControllerState {
            config: sim.controller.clone(),
            policy: sim.controller.policy_for(sim.traffic.pattern),
            mapper: AddressMapper::new(device),
            banks_per_group: device.bank_mode.banks_per_group(),
            read_queue: Vec::with_capacity(sim.controller.read_queue_capacity),
            write_queue: Vec::with_capacity(sim.controller.write_queue_capacity),
            drain_mode: DrainMode::ServingReads,
            pending_per_bank: vec![0; banks],
            outstanding: HashMap::new(),
            refresh: RefreshState::new(banks, timing.refi_pb, sim.controller.refresh_postpone_limit),
        }
    }

    pub fn policy(&self) -> PagePolicy {
        self.policy
    }

    pub fn drain_mode(&self) -> DrainMode {
        self.drain_mode
    }

    pub fn mapper(&self) -> &AddressMapper {
        &self.mapper
    }

    pub fn read_len(&self) -> usize {
        self.read_queue.len()
    }

    pub fn write_len(&self) -> usize {
        self.write_queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.read_queue.is_empty() && self.write_queue.is_empty()
    }

    pub fn refresh(&self) -> &RefreshState {
        &self.refresh
    }

    /// Enqueues `request` if its queue has room.
    ///
    /// # Panics
    /// If the address is misaligned or outside the channel; the traffic
    /// generator only produces valid addresses.
    pub fn admit(&mut self, request: Request) -> Admission {
        let (queue, cap) = match request.kind {
            RequestKind::Read => (&self.read_queue, self.config.read_queue_capacity),
            RequestKind::Write => (&self.write_queue, self.config.write_queue_capacity),
        };
        if queue.len() >= cap {
            return Admission::Backpressure(request);
        }
        let mapped = self
            .mapper
            .map(request.address)
            .unwrap_or_else(|e| panic!("request {}: {e}", request.id));
        let bank = (mapped.bank_group * self.banks_per_group + mapped.bank) as usize;
        let prior = self.outstanding.entry(request.address).or_default();
        // reads may pass reads; every other pair to one address keeps order
        let blocked_by = prior
            .iter()
            .rev()
            .find(|(_, k)| !(*k == RequestKind::Read && request.kind == RequestKind::Read))
            .map(|(id, _)| *id);
        prior.push((request.id, request.kind));
        let entry = Entry {
            request,
            mapped,
            bank,
            activated: false,
            blocked_by,
        };
        self.pending_per_bank[bank] += 1;
        match request.kind {
            RequestKind::Read => self.read_queue.push(entry),
            RequestKind::Write => self.write_queue.push(entry),
        }
        Admission::Accepted
    }

    fn update_drain_mode(&mut self) {
        let reads_ready = self.read_queue.iter().any(|e| e.blocked_by.is_none());
        let writes = self.write_queue.len();
        let cfg = &self.config;
        // A full write queue stalls the traffic source, so the reads already
        // queued are served first and the batch grows without reads running dry.
        let drain = writes >= cfg.write_high_watermark
            && (writes < cfg.write_queue_capacity || self.read_queue.len() <= cfg.read_low_watermark);
        self.drain_mode = match self.drain_mode {
            DrainMode::ServingReads if drain || (!reads_ready && writes > 0) => DrainMode::DrainingWrites,
            DrainMode::DrainingWrites if writes == 0 || (writes <= cfg.write_low_watermark && reads_ready) => {
                DrainMode::ServingReads
            }
            m => m,
        };
    }

    fn column_kind(&self, kind: RequestKind) -> CommandKind {
        apply_page_policy(
            ServicePlan {
                kind,
                row_state: RowState::Hit,
            },
            self.policy,
        )[0]
    }

    fn command_for(&self, e: &Entry, kind: CommandKind) -> Command {
        let m = &e.mapped;
        Command::new(kind, m.bank_group, m.bank, m.row, m.column)
    }

    /// Next command `e` needs, if any can be considered right now.
    /// `row_wanted[b]` says queued work still hits bank `b`'s open row.
    fn next_command(&self, e: &Entry, device: &DeviceState, row_wanted: &[bool]) -> Option<CommandKind> {
        if e.blocked_by.is_some() {
            return None;
        }
        let bank = device.bank(e.bank);
        let row_state = match bank.open_row {
            None => RowState::Closed,
            Some(r) if r == e.mapped.row => RowState::Hit,
            Some(_) => RowState::Conflict,
        };
        match (row_state, self.policy) {
            // the row belongs to an access that will auto-precharge it; each
            // request gets its own activation under closed page
            (RowState::Hit, PagePolicy::Closed) if !e.activated => return None,
            (RowState::Conflict, PagePolicy::Closed) => return None,
            (RowState::Conflict, PagePolicy::Open) if row_wanted[e.bank] => return None,
            (RowState::Closed, _) if self.refresh.blocks_activation(e.bank) => return None,
            _ => {}
        }
        let plan = ServicePlan {
            kind: e.request.kind,
            row_state,
        };
        apply_page_policy(plan, self.policy).first().copied()
    }

    /// FR-FCFS: the oldest ready column command, else the oldest ready row
    /// command. Requests in the idle queue are only considered to finish a
    /// row that was already opened for them.
    pub fn fr_fcfs_select(&mut self, device: &DeviceState, now: u64) -> Option<Selection> {
        self.update_drain_mode();
        let (active, idle, active_kind, idle_kind) = match self.drain_mode {
            DrainMode::ServingReads => (&self.read_queue, &self.write_queue, QueueKind::Read, QueueKind::Write),
            DrainMode::DrainingWrites => (&self.write_queue, &self.read_queue, QueueKind::Write, QueueKind::Read),
        };
        // Open page keeps a row open while the active queue, or a request
        // whose ACT already went out, still hits it.
        let mut row_wanted = vec![false; self.pending_per_bank.len()];
        if self.policy == PagePolicy::Open {
            let wanting = active.iter().chain(idle.iter().filter(|e| e.activated));
            for e in wanting {
                if e.blocked_by.is_none() && device.bank(e.bank).open_row == Some(e.mapped.row) {
                    row_wanted[e.bank] = true;
                }
            }
        }
        let mut best_column: Option<(u64, Command, QueueKind)> = None;
        let mut best_row: Option<(u64, Command, QueueKind)> = None;

        for e in active {
            let id = e.request.id;
            if best_column.is_some_and(|(b, _, _)| b < id) {
                break;
            }
            let Some(kind) = self.next_command(e, device, &row_wanted) else {
                continue;
            };
            let slot = if kind.is_column() {
                &mut best_column
            } else {
                &mut best_row
            };
            if slot.is_some() {
                continue;
            }
            let cmd = self.command_for(e, kind);
            if device.can_issue(&cmd, now) {
                *slot = Some((id, cmd, active_kind));
                if kind.is_column() {
                    break;
                }
            }
        }
        for e in idle.iter().filter(|e| e.activated) {
            if device.bank(e.bank).open_row != Some(e.mapped.row) || e.blocked_by.is_some() {
                continue;
            }
            let id = e.request.id;
            if best_column.is_some_and(|(b, _, _)| b < id) {
                continue;
            }
            let cmd = self.command_for(e, self.column_kind(e.request.kind));
            if device.can_issue(&cmd, now) {
                best_column = Some((id, cmd, idle_kind));
            }
        }
        best_column.or(best_row).map(|(request_id, command, queue)| Selection {
            command,
            queue: Some(queue),
            request_id,
        })
    }

    /// Per-bank refresh bookkeeping for cycle `now`; returns the PRE or
    /// REFpb to send, if one is due and legal.
    pub fn refresh_tick(&mut self, device: &DeviceState, now: u64) -> Option<Command> {
        if !self.refresh.flushing() {
            self.refresh.accrue(now);
        }
        self.refresh.select(device, now, &self.pending_per_bank, self.policy)
    }

    /// Records that `sel` was issued at `now`. Returns the completed request
    /// when the command was its column access.
    pub fn commit(&mut self, sel: &Selection, now: u64) -> Option<Completion> {
        let queue = match sel.queue? {
            QueueKind::Read => &mut self.read_queue,
            QueueKind::Write => &mut self.write_queue,
        };
        let idx = queue
            .iter()
            .position(|e| e.request.id == sel.request_id)
            .expect("selected request is queued");
        match sel.command.kind {
            CommandKind::Act => {
                queue[idx].activated = true;
                None
            }
            CommandKind::Pre => None,
            k if k.is_column() => {
                let e = queue.remove(idx);
                self.pending_per_bank[e.bank] -= 1;
                let id = e.request.id;
                if let Some(list) = self.outstanding.get_mut(&e.request.address) {
                    list.retain(|(i, _)| *i != id);
                    if list.is_empty() {
                        self.outstanding.remove(&e.request.address);
                    }
                }
                for other in self.read_queue.iter_mut().chain(self.write_queue.iter_mut()) {
                    if other.blocked_by == Some(id) {
                        other.blocked_by = None;
                    }
                }
                Some(Completion {
                    request: e.request,
                    row_hit: !e.activated,
                    column_cycle: now,
                })
            }
            _ => None,
        }
    }

    /// Records a refresh-path command issued at `now`.
    pub fn commit_refresh(&mut self, cmd: &Command) {
        let flat = (cmd.bank_group * self.banks_per_group + cmd.bank) as usize;
        self.refresh.issued(flat, cmd.kind);
    }

    /// Wraps a refresh-path command so the engine can treat both paths alike.
    pub fn refresh_selection(cmd: Command) -> Selection {
        Selection {
            command: cmd,
            queue: None,
            request_id: u64::MAX,
        }
    }

    /// Stops accruing and forces out every owed refresh.
    pub fn flush_refresh(&mut self) {
        self.refresh.set_flushing(true);
    }

    pub fn refresh_debt_outstanding(&self) -> bool {
        self.refresh.any_debt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{BankMode, CycleTimings, DeviceConfig, Standard};
    use crate::traffic::{Pattern, TrafficConfig};

    fn sim(pattern: Pattern) -> SimConfig {
        let dev = DeviceConfig::new(Standard::Lpddr5, 6400, BankMode::Lp5BankGroup, 16);
        SimConfig::new(dev, TrafficConfig::new(pattern, 1.0, 1, 100)).unwrap()
    }

    fn device(cfg: &SimConfig) -> DeviceState {
        DeviceState::new(&cfg.device, CycleTimings::derive(&cfg.device, &cfg.timing))
    }

    fn req(id: u64, kind: RequestKind, address: u64) -> Request {
        Request {
            id,
            kind,
            address,
            arrival_cycle: 0,
        }
    }

    #[test]
    fn page_policy_templates() {
        use CommandKind::*;
        let plan = |kind, row_state| ServicePlan { kind, row_state };
        assert_eq!(
            apply_page_policy(plan(RequestKind::Read, RowState::Closed), PagePolicy::Closed),
            vec![Act, Rda]
        );
        assert_eq!(
            apply_page_policy(plan(RequestKind::Write, RowState::Closed), PagePolicy::Closed),
            vec![Act, Wra]
        );
        assert_eq!(
            apply_page_policy(plan(RequestKind::Read, RowState::Hit), PagePolicy::Open),
            vec![Rd]
        );
        assert_eq!(
            apply_page_policy(plan(RequestKind::Write, RowState::Conflict), PagePolicy::Open),
            vec![Pre, Act, Wr]
        );
    }

    #[test]
    fn admission_and_backpressure() {
        let cfg = sim(Pattern::Sequential);
        let mut c = ControllerState::new(&cfg);
        for i in 0..63 {
            assert_eq!(c.admit(req(i, RequestKind::Read, i * 32)), Admission::Accepted);
        }
        assert_eq!(c.admit(req(63, RequestKind::Read, 63 * 32)), Admission::Accepted);
        let r = req(64, RequestKind::Read, 64 * 32);
        assert_eq!(c.admit(r), Admission::Backpressure(r));
        // the write queue is separate
        assert_eq!(c.admit(req(65, RequestKind::Write, 0)), Admission::Accepted);
    }

    #[test]
    fn empty_queues_select_nothing() {
        let cfg = sim(Pattern::Random);
        let mut c = ControllerState::new(&cfg);
        let dev = device(&cfg);
        assert_eq!(c.fr_fcfs_select(&dev, 0), None);
    }

    #[test]
    fn row_hit_beats_older_miss() {
        let cfg = sim(Pattern::Sequential);
        let mut c = ControllerState::new(&cfg);
        let mut dev = device(&cfg);
        let m = c.mapper().clone();
        // open row 0 of bank (0,0)
        let target = m.map(0).unwrap();
        dev.issue(&Command::new(CommandKind::Act, 0, 0, target.row, 0), 0)
            .unwrap();
        // older request misses on another row of the same bank group/bank 1
        let miss_addr = m.unmap(&MappedAddress {
            row: 9,
            column: 0,
            bank: 1,
            bank_group: 0,
        });
        let hit_addr = m.unmap(&MappedAddress {
            row: 0,
            column: 16,
            bank: 0,
            bank_group: 0,
        });
        c.admit(req(0, RequestKind::Read, miss_addr));
        c.admit(req(1, RequestKind::Read, hit_addr));
        let now = 40;
        let sel = c.fr_fcfs_select(&dev, now).unwrap();
        assert_eq!(sel.command.kind, CommandKind::Rd);
        assert_eq!(sel.request_id, 1);
        assert!(dev.can_issue(&sel.command, now));
    }

    #[test]
    fn oldest_of_two_hits_wins() {
        let cfg = sim(Pattern::Sequential);
        let mut c = ControllerState::new(&cfg);
        let mut dev = device(&cfg);
        let m = c.mapper().clone();
        dev.issue(&Command::new(CommandKind::Act, 0, 0, 0, 0), 0).unwrap();
        let a = m.unmap(&MappedAddress {
            row: 0,
            column: 32,
            bank: 0,
            bank_group: 0,
        });
        let b = m.unmap(&MappedAddress {
            row: 0,
            column: 16,
            bank: 0,
            bank_group: 0,
        });
        c.admit(req(5, RequestKind::Read, a));
        c.admit(req(6, RequestKind::Read, b));
        let sel = c.fr_fcfs_select(&dev, 40).unwrap();
        assert_eq!(sel.request_id, 5);
        assert_eq!(sel.command.column, 32);
    }

    #[test]
    fn closed_page_serves_with_act_then_rda() {
        let cfg = sim(Pattern::Random);
        let mut c = ControllerState::new(&cfg);
        let mut dev = device(&cfg);
        c.admit(req(0, RequestKind::Read, 4096 * 32));
        let s1 = c.fr_fcfs_select(&dev, 0).unwrap();
        assert_eq!(s1.command.kind, CommandKind::Act);
        dev.issue(&s1.command, 0).unwrap();
        assert_eq!(c.commit(&s1, 0), None);
        let rcd = dev.timing().rcd;
        assert_eq!(c.fr_fcfs_select(&dev, rcd - 1), None);
        let s2 = c.fr_fcfs_select(&dev, rcd).unwrap();
        assert_eq!(s2.command.kind, CommandKind::Rda);
        dev.issue(&s2.command, rcd).unwrap();
        let done = c.commit(&s2, rcd).unwrap();
        assert!(!done.row_hit);
        assert!(c.is_empty());
    }

    #[test]
    fn read_does_not_pass_older_write_to_same_address() {
        let cfg = sim(Pattern::Random);
        let mut c = ControllerState::new(&cfg);
        let dev = device(&cfg);
        c.admit(req(0, RequestKind::Write, 64));
        c.admit(req(1, RequestKind::Read, 64));
        // the only read is blocked, so the controller turns to writes
        let sel = c.fr_fcfs_select(&dev, 0).unwrap();
        assert_eq!(sel.request_id, 0);
        assert_eq!(c.drain_mode(), DrainMode::DrainingWrites);
    }

    #[test]
    fn watermarks_drive_drain_mode() {
        let mut cfg = sim(Pattern::Random);
        cfg.controller.write_high_watermark = 48;
        cfg.controller.write_low_watermark = 16;
        let mut c = ControllerState::new(&cfg);
        let dev = device(&cfg);
        c.admit(req(0, RequestKind::Read, 0));
        for i in 1..48 {
            c.admit(req(i, RequestKind::Write, i * 4096));
        }
        c.fr_fcfs_select(&dev, 0);
        assert_eq!(c.drain_mode(), DrainMode::ServingReads);
        c.admit(req(48, RequestKind::Write, 48 * 4096));
        c.fr_fcfs_select(&dev, 0);
        assert_eq!(c.drain_mode(), DrainMode::DrainingWrites);
    }

    #[test]
    fn full_write_queue_waits_for_reads_to_run_low() {
        let cfg = sim(Pattern::Random);
        let mut c = ControllerState::new(&cfg);
        let dev = device(&cfg);
        for i in 0..20 {
            c.admit(req(i, RequestKind::Read, i * 4096 + 64));
        }
        for i in 20..84 {
            c.admit(req(i, RequestKind::Write, i * 4096));
        }
        c.fr_fcfs_select(&dev, 0);
        assert_eq!(c.drain_mode(), DrainMode::ServingReads);
        c.read_queue.truncate(16);
        c.fr_fcfs_select(&dev, 0);
        assert_eq!(c.drain_mode(), DrainMode::DrainingWrites);
    }
}

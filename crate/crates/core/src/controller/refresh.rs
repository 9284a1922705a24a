use crate::config::PagePolicy;
use crate::protocol::{Command, CommandKind, DeviceState};

/// Per-bank refresh debt.
///
/// Each bank owes one REFpb per refresh interval. Due times are staggered
/// across banks so the refreshes of a healthy run spread out evenly instead
/// of arriving as one burst. A bank is refreshed when it has debt and no
/// queued work, or unconditionally once the debt reaches the postpone limit.
#[derive(Debug, Clone)]
pub struct RefreshState {
    interval: u64,
    limit: u32,
    debt: Vec<u32>,
    next_due: Vec<u64>,
    issued: Vec<u64>,
    cursor: usize,
    flushing: bool,
    // banks closed by refresh and held closed until their REFpb goes out
    claimed: Vec<bool>,
}

impl RefreshState {
    pub fn new(banks: usize, interval: u64, limit: u32) -> Self {
        let interval = interval.max(1);
        RefreshState {
            interval,
            limit: limit.max(1),
            debt: vec![0; banks],
            next_due: (0..banks as u64).map(|b| b * interval / banks as u64).collect(),
            issued: vec![0; banks],
            cursor: 0,
            flushing: false,
            claimed: vec![false; banks],
        }
    }

    pub fn interval(&self) -> u64 {
        self.interval
    }

    pub fn debt(&self, bank: usize) -> u32 {
        self.debt[bank]
    }

    /// REFpb commands sent to each bank so far.
    pub fn issued_counts(&self) -> &[u64] {
        &self.issued
    }

    pub fn any_debt(&self) -> bool {
        self.debt.iter().any(|&d| d > 0)
    }

    /// Treat every owed refresh as forced, e.g. to settle debt at run end.
    pub fn set_flushing(&mut self, on: bool) {
        self.flushing = on;
    }

    pub fn flushing(&self) -> bool {
        self.flushing
    }

    pub fn accrue(&mut self, now: u64) {
        for (due, debt) in self.next_due.iter_mut().zip(&mut self.debt) {
            while *due <= now {
                *debt += 1;
                *due += self.interval;
            }
        }
    }

    fn forced(&self, bank: usize) -> bool {
        self.debt[bank] > 0 && (self.flushing || self.debt[bank] >= self.limit)
    }

    /// New activations wait while a bank's refresh is forced or while the
    /// bank is held closed for a refresh already under way.
    pub fn blocks_activation(&self, bank: usize) -> bool {
        self.forced(bank) || self.claimed[bank]
    }

    /// Picks the next refresh-path command, visiting banks round-robin.
    /// An open bank is closed first under open page; under closed page the
    /// pending auto-precharge closes it.
    pub fn select(
        &self,
        device: &DeviceState,
        now: u64,
        pending_per_bank: &[u32],
        policy: PagePolicy,
    ) -> Option<Command> {
        let banks = self.debt.len();
        for step in 0..banks {
            let flat = (self.cursor + step) % banks;
            let wanted = self.forced(flat) || self.claimed[flat] || pending_per_bank[flat] == 0;
            if self.debt[flat] == 0 || !wanted {
                continue;
            }
            let (bg, bank) = device.split_bank(flat);
            let state = device.bank(flat);
            let cmd = match state.open_row {
                Some(row) if policy == PagePolicy::Open => Command::new(CommandKind::Pre, bg, bank, row, 0),
                Some(_) => continue,
                None => Command::new(CommandKind::RefPb, bg, bank, 0, 0),
            };
            if device.can_issue(&cmd, now) {
                return Some(cmd);
            }
        }
        None
    }

    /// Records a refresh-path command for bank `flat`.
    pub fn issued(&mut self, flat: usize, kind: CommandKind) {
        if kind == CommandKind::Pre {
            self.claimed[flat] = true;
            return;
        }
        self.claimed[flat] = false;
        self.debt[flat] = self.debt[flat].saturating_sub(1);
        self.issued[flat] += 1;
        self.cursor = (flat + 1) % self.debt.len();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{BankMode, CycleTimings, DeviceConfig, Standard, TimingSet};

    fn device() -> DeviceState {
        let cfg = DeviceConfig::new(Standard::Lpddr5, 6400, BankMode::Lp5BankGroup, 16);
        let t = CycleTimings::derive(&cfg, &TimingSet::defaults_for(&cfg));
        DeviceState::new(&cfg, t)
    }

    #[test]
    fn accrual_is_staggered() {
        let mut r = RefreshState::new(4, 100, 8);
        r.accrue(0);
        assert_eq!((0..4).map(|b| r.debt(b)).collect::<Vec<_>>(), vec![1, 0, 0, 0]);
        r.accrue(50);
        assert_eq!((0..4).map(|b| r.debt(b)).collect::<Vec<_>>(), vec![1, 1, 1, 0]);
        r.accrue(175);
        assert_eq!((0..4).map(|b| r.debt(b)).collect::<Vec<_>>(), vec![2, 2, 2, 2]);
    }

    #[test]
    fn idle_bank_with_debt_is_refreshed() {
        let dev = device();
        let mut r = RefreshState::new(16, 1000, 8);
        r.debt[3] = 1;
        let mut pending = vec![1; 16];
        pending[3] = 0;
        let cmd = r.select(&dev, 0, &pending, PagePolicy::Closed).unwrap();
        assert_eq!(cmd.kind, CommandKind::RefPb);
        assert_eq!(dev.flat_bank(cmd.bank_group, cmd.bank), Some(3));
        r.issued(3, CommandKind::RefPb);
        assert_eq!(r.debt(3), 0);
        assert_eq!(r.issued_counts()[3], 1);
    }

    #[test]
    fn busy_bank_postpones_until_limit() {
        let dev = device();
        let mut r = RefreshState::new(16, 1000, 8);
        let pending = vec![1; 16];
        r.debt[5] = 7;
        assert_eq!(r.select(&dev, 0, &pending, PagePolicy::Open), None);
        assert!(!r.blocks_activation(5));
        r.debt[5] = 8;
        assert!(r.blocks_activation(5));
        let cmd = r.select(&dev, 0, &pending, PagePolicy::Open).unwrap();
        assert_eq!(dev.flat_bank(cmd.bank_group, cmd.bank), Some(5));
    }

    #[test]
    fn open_bank_is_precharged_first() {
        let mut dev = device();
        dev.issue(&Command::new(CommandKind::Act, 0, 1, 9, 0), 0).unwrap();
        let mut r = RefreshState::new(16, 1000, 8);
        r.debt[1] = 1;
        let pending = vec![0; 16];
        let ras = dev.timing().ras;
        assert_eq!(r.select(&dev, ras - 1, &pending, PagePolicy::Open), None);
        let cmd = r.select(&dev, ras, &pending, PagePolicy::Open).unwrap();
        assert_eq!(cmd.kind, CommandKind::Pre);
        assert_eq!(r.select(&dev, ras, &pending, PagePolicy::Closed), None);
        // once closed for refresh the bank stays closed until REFpb
        r.issued(1, CommandKind::Pre);
        assert!(r.blocks_activation(1));
        r.issued(1, CommandKind::RefPb);
        assert!(!r.blocks_activation(1));
        assert_eq!(r.debt(1), 0);
    }

    #[test]
    fn round_robin_after_issue() {
        let dev = device();
        let mut r = RefreshState::new(16, 1000, 8);
        r.debt[2] = 1;
        r.debt[7] = 1;
        let pending = vec![0; 16];
        r.issued(2, CommandKind::RefPb);
        r.debt[2] = 1;
        let cmd = r.select(&dev, 0, &pending, PagePolicy::Open).unwrap();
        assert_eq!(dev.flat_bank(cmd.bank_group, cmd.bank), Some(7));
    }
}

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BankPhase {
    Precharged,
    Activating,
    Active,
    Precharging,
    Refreshing,
}

/// Per-bank timing state. Every `earliest_*` stamp only moves forward.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct BankState {
    /// Row latched by the last ACT, cleared by PRE or an auto-precharge.
    pub open_row: Option<u32>,
    pub activated_at: u64,
    pub earliest_act: u64,
    pub earliest_rd: u64,
    pub earliest_wr: u64,
    pub earliest_pre: u64,
    pub earliest_ref: u64,
    pub refresh_until: u64,
}

impl BankState {
    pub fn phase(&self, now: u64) -> BankPhase {
        if now < self.refresh_until {
            BankPhase::Refreshing
        } else if self.open_row.is_some() {
            if now < self.earliest_rd.min(self.earliest_wr) {
                BankPhase::Activating
            } else {
                BankPhase::Active
            }
        } else if now < self.earliest_act {
            BankPhase::Precharging
        } else {
            BankPhase::Precharged
        }
    }

    pub fn is_open(&self) -> bool {
        self.open_row.is_some()
    }

    pub(crate) fn bump(stamp: &mut u64, at: u64) {
        *stamp = (*stamp).max(at);
    }
}

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Half-open cycle interval `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Interval {
    pub start: u64,
    pub end: u64,
}

impl Interval {
    pub fn new(start: u64, end: u64) -> Self {
        debug_assert!(start <= end);
        Interval { start, end }
    }

    pub fn len(&self) -> u64 {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }

    pub fn overlaps(&self, other: &Interval) -> bool {
        self.start < other.end && other.start < self.end
    }

    /// Cycles of `self` that fall inside `window`.
    pub fn overlap_len(&self, window: &Interval) -> u64 {
        let s = self.start.max(window.start);
        let e = self.end.min(window.end);
        e.saturating_sub(s)
    }
}

/// Command and data bus reservations of one channel.
///
/// Commands are issued in time order, so the command bus only needs the
/// cycle at which it frees up. Data bursts land at different latencies for
/// reads and writes and may arrive out of order, so future data-bus
/// reservations are kept as an interval list. Every reservation is also
/// appended to the history used for bandwidth measurement.
#[derive(Debug, Clone, Default)]
pub struct BusModel {
    cmd_free_at: u64,
    cmd_busy: u64,
    pending: Vec<Interval>,
    history: Vec<Interval>,
}

impl BusModel {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn command_free(&self, now: u64) -> bool {
        now >= self.cmd_free_at
    }

    pub fn command_free_at(&self) -> u64 {
        self.cmd_free_at
    }

    pub fn reserve_command(&mut self, now: u64, slots: u64) {
        assert!(self.command_free(now), "command bus double-booked at {now}");
        self.cmd_free_at = now + slots;
        self.cmd_busy += slots;
    }

    /// Total command-bus cycles reserved so far.
    pub fn command_busy(&self) -> u64 {
        self.cmd_busy
    }

    pub fn data_free(&self, slots: &[Interval]) -> bool {
        slots.iter().all(|s| self.pending.iter().all(|p| !p.overlaps(s)))
    }

    pub fn reserve_data(&mut self, slots: &[Interval]) {
        assert!(self.data_free(slots), "data bus double-booked: {slots:?}");
        for s in slots {
            self.pending.push(*s);
            self.history.push(*s);
        }
    }

    /// Forgets reservations that ended before `now`; they can no longer
    /// collide with anything issued from here on.
    pub fn retire(&mut self, now: u64) {
        self.pending.retain(|p| p.end > now);
    }

    pub fn history(&self) -> &[Interval] {
        &self.history
    }

    /// End of the last data transfer reserved so far.
    pub fn data_end(&self) -> u64 {
        self.history.iter().map(|i| i.end).max().unwrap_or(0)
    }
}

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum WindowError {
    #[error("window [{start}, {end}) is empty or extends past the run end {limit}")]
    WindowOutOfRange { start: u64, end: u64, limit: u64 },
}

/// Fraction of data-bus cycles in `window` that carry a transfer.
pub fn measure_window(bus: &BusModel, window: Interval, limit: u64) -> Result<f64, WindowError> {
    if window.is_empty() || window.end > limit {
        return Err(WindowError::WindowOutOfRange {
            start: window.start,
            end: window.end,
            limit,
        });
    }
    let busy: u64 = bus.history().iter().map(|i| i.overlap_len(&window)).sum();
    Ok(busy as f64 / window.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn idle_window_is_zero() {
        let bus = BusModel::new();
        assert_eq!(measure_window(&bus, Interval::new(0, 100), 100), Ok(0.0));
    }

    #[test]
    fn back_to_back_bursts_saturate() {
        let mut bus = BusModel::new();
        for i in 0..50 {
            bus.reserve_data(&[Interval::new(10 + 2 * i, 12 + 2 * i)]);
        }
        let u = measure_window(&bus, Interval::new(10, 110), 200).unwrap();
        assert_eq!(u, 1.0);
    }

    #[test]
    fn window_past_end_is_an_error() {
        let bus = BusModel::new();
        assert!(measure_window(&bus, Interval::new(0, 101), 100).is_err());
        assert!(measure_window(&bus, Interval::new(5, 5), 100).is_err());
    }

    #[test]
    fn overlapping_data_rejected() {
        let mut bus = BusModel::new();
        bus.reserve_data(&[Interval::new(0, 4)]);
        assert!(!bus.data_free(&[Interval::new(3, 5)]));
        assert!(bus.data_free(&[Interval::new(4, 6)]));
        // gaps can be filled
        bus.reserve_data(&[Interval::new(8, 10)]);
        assert!(bus.data_free(&[Interval::new(6, 8)]));
        bus.retire(5);
        assert!(bus.data_free(&[Interval::new(0, 4)]));
    }

    #[test]
    fn command_bus_watermark() {
        let mut bus = BusModel::new();
        bus.reserve_command(0, 2);
        assert!(!bus.command_free(1));
        assert!(bus.command_free(2));
        bus.reserve_command(2, 1);
        assert_eq!(bus.command_busy(), 3);
    }
}

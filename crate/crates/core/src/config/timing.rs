use serde::{Deserialize, Serialize};

use super::{burst_duration, ns_to_cycles, BankMode, ConfigError, DeviceConfig, Standard};

/// Timing parameters of one device.
///
/// Analog constraints are kept in nanoseconds and rounded up to command clock
/// cycles by [`CycleTimings::derive`]; latencies, command slot costs and bus
/// turnaround penalties are cycle-native. `None` on a cycle-native field
/// means "derive from the burst length".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimingSet {
    #[serde(rename = "tRCD")]
    pub t_rcd: f64,
    #[serde(rename = "tRP")]
    pub t_rp: f64,
    #[serde(rename = "tRAS")]
    pub t_ras: f64,
    #[serde(rename = "tWR")]
    pub t_wr: f64,
    #[serde(rename = "tRTP")]
    pub t_rtp: f64,
    #[serde(rename = "tRRD")]
    pub t_rrd: f64,
    #[serde(rename = "tFAW")]
    pub t_faw: f64,
    /// Write-to-read turnaround within a bank group (any bank outside BG mode).
    #[serde(rename = "tWTR")]
    pub t_wtr: f64,
    /// Write-to-read turnaround across bank groups; `None` means tWTR.
    #[serde(rename = "tWTR_S", default, skip_serializing_if = "Option::is_none")]
    pub t_wtr_s: Option<f64>,
    #[serde(rename = "tRFCpb")]
    pub t_rfc_pb: f64,
    /// Interval at which each bank owes one per-bank refresh.
    #[serde(rename = "tREFIpb")]
    pub t_refi_pb: f64,
    #[serde(rename = "tCCD_S")]
    pub t_ccd_s: Option<u32>,
    #[serde(rename = "tCCD_L")]
    pub t_ccd_l: Option<u32>,
    #[serde(rename = "RL")]
    pub rl: u32,
    #[serde(rename = "WL")]
    pub wl: u32,
    /// Extra idle cycles on the data bus when turning from read to write.
    pub rtw_penalty: u32,
    /// Extra cycles added to tWTR when turning from write to read.
    pub wtr_penalty: u32,
    /// Command bus cycles taken by an ACT.
    pub act_slots: u32,
    /// Command bus cycles taken by every other command.
    pub cmd_slots: u32,
    /// Gap between the two halves of an interleaved BG-mode BL32 burst.
    pub interleave_gap: Option<u32>,
}

// (data rate, RL, WL) in command clock cycles
const LP4_LATENCY: [(u32, u32, u32); 8] = [
    (533, 6, 4),
    (1066, 10, 6),
    (1600, 14, 8),
    (2133, 20, 10),
    (2666, 24, 12),
    (3200, 28, 14),
    (3733, 32, 16),
    (4266, 36, 18),
];

const LP5_LATENCY_2TO1: [(u32, u32, u32); 6] = [
    (533, 3, 2),
    (1067, 5, 3),
    (1600, 7, 4),
    (2133, 9, 5),
    (2750, 12, 6),
    (3200, 14, 7),
];

const LP5_LATENCY_4TO1: [(u32, u32, u32); 6] = [
    (3733, 10, 5),
    (4267, 12, 6),
    (4800, 13, 7),
    (5500, 15, 8),
    (6000, 16, 9),
    (6400, 17, 9),
];

fn latency_for(table: &[(u32, u32, u32)], data_rate: u32) -> (u32, u32) {
    match table.iter().find(|(rate, _, _)| *rate >= data_rate) {
        Some(&(_, rl, wl)) => (rl, wl),
        None => {
            // Above the top grade: keep the nanosecond latency of the top grade.
            let &(top, rl, wl) = table.last().expect("non-empty latency table");
            let scale = |c: u32| (u64::from(c) * u64::from(data_rate)).div_ceil(u64::from(top)) as u32;
            (scale(rl), scale(wl))
        }
    }
}

impl TimingSet {
    /// Stock timings for a device. These are JEDEC-typical stand-ins; every
    /// field can be overridden from the `[timings]` section of a config file.
    pub fn defaults_for(config: &DeviceConfig) -> Self {
        match config.standard {
            Standard::Lpddr4 => {
                let (rl, wl) = latency_for(&LP4_LATENCY, config.data_rate);
                TimingSet {
                    t_rcd: 18.0,
                    t_rp: 18.0,
                    t_ras: 42.0,
                    t_wr: 18.0,
                    t_rtp: 7.5,
                    t_rrd: 10.0,
                    t_faw: 40.0,
                    t_wtr: 10.0,
                    t_wtr_s: None,
                    t_rfc_pb: 140.0,
                    t_refi_pb: 3906.0,
                    t_ccd_s: None,
                    t_ccd_l: None,
                    rl,
                    wl,
                    rtw_penalty: 2,
                    wtr_penalty: 0,
                    act_slots: 4,
                    cmd_slots: 2,
                    interleave_gap: None,
                }
            }
            Standard::Lpddr5 => {
                let table: &[(u32, u32, u32)] = if config.wck_ck_ratio == 4 {
                    &LP5_LATENCY_4TO1
                } else {
                    &LP5_LATENCY_2TO1
                };
                let (rl, wl) = latency_for(table, config.data_rate);
                // 8B mode activates two merged internal banks per ACT.
                let (t_rrd, t_faw) = match config.bank_mode {
                    BankMode::Lp5EightBank => (10.0, 40.0),
                    _ => (5.0, 20.0),
                };
                TimingSet {
                    t_rcd: 18.0,
                    t_rp: 18.0,
                    t_ras: 42.0,
                    t_wr: 34.0,
                    t_rtp: 7.5,
                    t_rrd,
                    t_faw,
                    t_wtr: 12.0,
                    t_wtr_s: (config.bank_mode == BankMode::Lp5BankGroup).then_some(6.25),
                    t_rfc_pb: 140.0,
                    t_refi_pb: 3906.0,
                    t_ccd_s: None,
                    t_ccd_l: None,
                    rl,
                    wl,
                    rtw_penalty: 2,
                    wtr_penalty: 0,
                    act_slots: 2,
                    cmd_slots: 1,
                    interleave_gap: None,
                }
            }
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let named = [
            ("tRCD", self.t_rcd),
            ("tRP", self.t_rp),
            ("tRAS", self.t_ras),
            ("tWR", self.t_wr),
            ("tRTP", self.t_rtp),
            ("tRRD", self.t_rrd),
            ("tFAW", self.t_faw),
            ("tWTR", self.t_wtr),
            ("tRFCpb", self.t_rfc_pb),
            ("tREFIpb", self.t_refi_pb),
        ];
        for (name, v) in named {
            if !(v.is_finite() && v > 0.0) {
                return Err(ConfigError::InvalidTiming(format!("{name} must be > 0, got {v}")));
            }
        }
        if let Some(v) = self.t_wtr_s {
            if !(v.is_finite() && v > 0.0 && v <= self.t_wtr) {
                return Err(ConfigError::InvalidTiming(format!(
                    "tWTR_S must be in (0, tWTR], got {v}"
                )));
            }
        }
        if self.t_ras < self.t_rcd {
            return Err(ConfigError::InvalidTiming("tRAS must be >= tRCD".into()));
        }
        if self.t_faw < self.t_rrd {
            return Err(ConfigError::InvalidTiming("tFAW must be >= tRRD".into()));
        }
        if self.rl == 0 || self.wl == 0 {
            return Err(ConfigError::InvalidTiming("RL and WL must be > 0".into()));
        }
        if self.act_slots == 0 || self.cmd_slots == 0 {
            return Err(ConfigError::InvalidTiming("command slot costs must be > 0".into()));
        }
        if self.t_ccd_s == Some(0) || self.t_ccd_l == Some(0) {
            return Err(ConfigError::InvalidTiming("tCCD must be > 0".into()));
        }
        Ok(())
    }
}

/// Timing constraints in command clock cycles for one (device, timing) pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CycleTimings {
    pub rcd: u64,
    pub rp: u64,
    pub ras: u64,
    pub wr: u64,
    pub rtp: u64,
    pub rrd: u64,
    pub faw: u64,
    pub wtr: u64,
    pub wtr_s: u64,
    pub rfc_pb: u64,
    pub refi_pb: u64,
    pub ccd_s: u64,
    pub ccd_l: u64,
    pub rl: u64,
    pub wl: u64,
    pub rtw_penalty: u64,
    pub wtr_penalty: u64,
    pub act_slots: u64,
    pub cmd_slots: u64,
    /// Data-bus cycles of one burst.
    pub burst: u64,
    pub interleaved: bool,
    /// Length of each half of an interleaved burst.
    pub half_burst: u64,
    pub interleave_gap: u64,
    /// Cycles from the first to the last data beat of one burst.
    pub burst_span: u64,
}

impl CycleTimings {
    /// Rounds the nanosecond constraints to the device's command clock.
    /// Always recomputed from scratch so a changed data rate or clock
    /// ratio is picked up.
    pub fn derive(config: &DeviceConfig, timing: &TimingSet) -> Self {
        let clock = config.clock();
        let cyc = |t: f64| ns_to_cycles(t, &clock);
        let burst = burst_duration(config);
        let interleaved = config.interleaved_bursts();
        let half_burst = if interleaved { burst / 2 } else { burst };
        let interleave_gap = if interleaved {
            u64::from(timing.interleave_gap.unwrap_or(half_burst as u32))
        } else {
            0
        };
        let burst_span = if interleaved {
            2 * half_burst + interleave_gap
        } else {
            burst
        };
        let default_ccd_s = if interleaved { half_burst } else { burst };
        let ccd_s = timing.t_ccd_s.map_or(default_ccd_s, u64::from);
        let ccd_l = match (timing.t_ccd_l, config.bank_mode) {
            (Some(v), _) => u64::from(v),
            (None, BankMode::Lp5BankGroup) => burst + 2,
            (None, _) => ccd_s,
        };
        CycleTimings {
            rcd: cyc(timing.t_rcd),
            rp: cyc(timing.t_rp),
            ras: cyc(timing.t_ras),
            wr: cyc(timing.t_wr),
            rtp: cyc(timing.t_rtp),
            rrd: cyc(timing.t_rrd),
            faw: cyc(timing.t_faw),
            wtr: cyc(timing.t_wtr),
            wtr_s: cyc(timing.t_wtr_s.unwrap_or(timing.t_wtr)),
            rfc_pb: cyc(timing.t_rfc_pb),
            refi_pb: cyc(timing.t_refi_pb),
            ccd_s,
            ccd_l,
            rl: u64::from(timing.rl),
            wl: u64::from(timing.wl),
            rtw_penalty: u64::from(timing.rtw_penalty),
            wtr_penalty: u64::from(timing.wtr_penalty),
            act_slots: u64::from(timing.act_slots),
            cmd_slots: u64::from(timing.cmd_slots),
            burst,
            interleaved,
            half_burst,
            interleave_gap,
            burst_span,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{BankMode, DeviceConfig, Standard};

    #[test]
    fn defaults_validate() {
        for (std, mode, rate, bl) in [
            (Standard::Lpddr4, BankMode::Lp4EightBank, 4266, 16),
            (Standard::Lpddr5, BankMode::Lp5BankGroup, 6400, 32),
            (Standard::Lpddr5, BankMode::Lp5EightBank, 533, 32),
        ] {
            let cfg = DeviceConfig::new(std, rate, mode, bl);
            TimingSet::defaults_for(&cfg).validate().unwrap();
        }
    }

    #[test]
    fn rejects_bad_values() {
        let cfg = DeviceConfig::new(Standard::Lpddr5, 6400, BankMode::Lp5BankGroup, 16);
        let mut t = TimingSet::defaults_for(&cfg);
        t.t_rcd = 0.0;
        assert!(t.validate().is_err());
        let mut t = TimingSet::defaults_for(&cfg);
        t.t_ras = 10.0;
        assert!(t.validate().is_err());
        let mut t = TimingSet::defaults_for(&cfg);
        t.t_faw = 1.0;
        assert!(t.validate().is_err());
    }

    #[test]
    fn cycle_derivation_tracks_clock() {
        let cfg = DeviceConfig::new(Standard::Lpddr5, 6400, BankMode::Lp5BankGroup, 16);
        let t = TimingSet::defaults_for(&cfg);
        let c = CycleTimings::derive(&cfg, &t);
        // tCK = 1.25 ns
        assert_eq!(c.rcd, 15);
        assert_eq!(c.faw, 16);
        assert_eq!(c.wr, 28);
        assert_eq!(c.burst, 2);
        assert_eq!((c.ccd_s, c.ccd_l), (2, 4));

        let cfg = DeviceConfig::new(Standard::Lpddr5, 3733, BankMode::Lp5BankGroup, 16);
        let c = CycleTimings::derive(&cfg, &t);
        // tCK = 8000 / 3733 ns = 2.1431 ns; 18 / 2.1431 = 8.4
        assert_eq!(c.rcd, 9);
    }

    #[test]
    fn interleaved_bl32() {
        let cfg = DeviceConfig::new(Standard::Lpddr5, 6400, BankMode::Lp5BankGroup, 32);
        let t = TimingSet::defaults_for(&cfg);
        let c = CycleTimings::derive(&cfg, &t);
        assert!(c.interleaved);
        assert_eq!((c.burst, c.half_burst, c.interleave_gap, c.burst_span), (4, 2, 2, 6));
        assert_eq!((c.ccd_s, c.ccd_l), (2, 6));

        let cfg = DeviceConfig::new(Standard::Lpddr5, 6400, BankMode::Lp5EightBank, 32);
        let c = CycleTimings::derive(&cfg, &TimingSet::defaults_for(&cfg));
        assert!(!c.interleaved);
        assert_eq!((c.burst, c.burst_span, c.ccd_s), (4, 4, 4));
    }

    #[test]
    fn latency_above_top_grade_scales() {
        assert_eq!(latency_for(&LP4_LATENCY, 4266), (36, 18));
        assert_eq!(latency_for(&LP4_LATENCY, 1000), (10, 6));
        let (rl, wl) = latency_for(&LP4_LATENCY, 8532);
        assert_eq!((rl, wl), (72, 36));
    }
}

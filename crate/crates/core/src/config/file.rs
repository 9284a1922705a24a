//! Configuration file loading.
//!
//! The file is TOML with four sections. Only `[device]` is required:
//!
//! ```toml
//! [device]
//! standard = "lpddr5"
//! data_rate = 6400
//! bank_mode = "bg"
//! burst_length = 16
//!
//! [timings]
//! tWR = 34.0
//!
//! [controller]
//! page_policy = "closed"
//!
//! [traffic]
//! pattern = "random"
//! read_ratio = 1.0
//! seed = 7
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{validate, BankMode, ConfigError, DeviceConfig, Standard, TimingSet};
use crate::traffic::{Pattern, TrafficConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PagePolicy {
    Open,
    Closed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControllerConfig {
    /// `None` picks open page for sequential and closed page for random traffic.
    pub page_policy: Option<PagePolicy>,
    pub read_queue_capacity: usize,
    pub write_queue_capacity: usize,
    /// Start draining writes once the write queue holds this many entries.
    pub write_high_watermark: usize,
    /// Stop draining once the write queue is down to this many entries.
    pub write_low_watermark: usize,
    /// With the write queue full, keep serving reads until the read queue
    /// is down to this many entries.
    pub read_low_watermark: usize,
    /// Owed per-bank refreshes before refresh preempts data traffic.
    pub refresh_postpone_limit: u32,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        ControllerConfig {
            page_policy: None,
            read_queue_capacity: 64,
            write_queue_capacity: 64,
            write_high_watermark: 64,
            write_low_watermark: 8,
            read_low_watermark: 16,
            refresh_postpone_limit: 8,
        }
    }
}

impl ControllerConfig {
    pub fn policy_for(&self, pattern: Pattern) -> PagePolicy {
        self.page_policy.unwrap_or(match pattern {
            Pattern::Sequential => PagePolicy::Open,
            Pattern::Random => PagePolicy::Closed,
        })
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::InvalidController(m.to_string()));
        if self.read_queue_capacity == 0 || self.write_queue_capacity == 0 {
            return bad("queue capacity must be > 0");
        }
        if self.write_high_watermark > self.write_queue_capacity {
            return bad("write_high_watermark exceeds write queue capacity");
        }
        if self.write_low_watermark >= self.write_high_watermark {
            return bad("write_low_watermark must be below write_high_watermark");
        }
        if self.read_low_watermark > self.read_queue_capacity {
            return bad("read_low_watermark exceeds read queue capacity");
        }
        if self.refresh_postpone_limit == 0 {
            return bad("refresh_postpone_limit must be >= 1");
        }
        Ok(())
    }
}

/// Everything one simulation run needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub device: DeviceConfig,
    pub timing: TimingSet,
    pub controller: ControllerConfig,
    pub traffic: TrafficConfig,
    /// Explicit `[timings]` entries, reapplied when the device changes.
    #[serde(skip)]
    timing_overrides: BTreeMap<String, toml::Value>,
}

impl SimConfig {
    /// A configuration with stock timings and controller settings.
    pub fn new(device: DeviceConfig, traffic: TrafficConfig) -> Result<Self, ConfigError> {
        let device = validate(device)?;
        let timing = TimingSet::defaults_for(&device);
        let cfg = SimConfig {
            device,
            timing,
            controller: ControllerConfig::default(),
            traffic,
            timing_overrides: BTreeMap::new(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        validate(self.device.clone())?;
        self.timing.validate()?;
        self.controller.validate()?;
        self.traffic.validate()?;
        Ok(())
    }

    /// Replaces the device and re-resolves timings: stock values for the new
    /// device with any file overrides applied on top.
    pub fn set_device(&mut self, device: DeviceConfig) -> Result<(), ConfigError> {
        let device = validate(device)?;
        self.timing = resolve_timing(&device, &self.timing_overrides)?;
        self.device = device;
        Ok(())
    }

    /// Changes the data rate, picking the clock ratio that goes with it.
    pub fn set_data_rate(&mut self, data_rate: u32) -> Result<(), ConfigError> {
        let mut device = self.device.clone();
        device.data_rate = data_rate;
        device.wck_ck_ratio = super::default_ratio(device.standard, data_rate);
        self.set_device(device)
    }

    pub fn timing_overrides(&self) -> &BTreeMap<String, toml::Value> {
        &self.timing_overrides
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFile {
    device: RawDevice,
    #[serde(default)]
    timings: BTreeMap<String, toml::Value>,
    #[serde(default)]
    controller: ControllerConfig,
    #[serde(default)]
    traffic: TrafficConfig,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDevice {
    standard: String,
    data_rate: u32,
    bank_mode: Option<String>,
    #[serde(default = "default_burst_length")]
    burst_length: u32,
    channel_width: Option<u32>,
    density_gbit: Option<u32>,
    rows_per_bank: Option<u32>,
    columns_per_row: Option<u32>,
    column_width_bits: Option<u32>,
    wck_ck_ratio: Option<u32>,
}

fn default_burst_length() -> u32 {
    16
}

impl RawDevice {
    fn build(self) -> Result<DeviceConfig, ConfigError> {
        let standard = Standard::parse(&self.standard)?;
        let bank_mode = match self.bank_mode.as_deref() {
            Some(m) => BankMode::parse(m, standard)?,
            None => match standard {
                Standard::Lpddr4 => BankMode::Lp4EightBank,
                Standard::Lpddr5 if self.data_rate > 3200 => BankMode::Lp5BankGroup,
                Standard::Lpddr5 => BankMode::Lp5SixteenBank,
            },
        };
        let mut d = DeviceConfig::new(standard, self.data_rate, bank_mode, self.burst_length);
        if let Some(v) = self.channel_width {
            d.channel_width = v;
        }
        if let Some(v) = self.density_gbit {
            d.density_gbit = v;
        }
        if let Some(v) = self.rows_per_bank {
            d.rows_per_bank = v;
        }
        if let Some(v) = self.columns_per_row {
            d.columns_per_row = v;
        }
        if let Some(v) = self.column_width_bits {
            d.column_width_bits = v;
        }
        if let Some(v) = self.wck_ck_ratio {
            d.wck_ck_ratio = v;
        }
        Ok(d)
    }
}

fn resolve_timing(device: &DeviceConfig, overrides: &BTreeMap<String, toml::Value>) -> Result<TimingSet, ConfigError> {
    let defaults = TimingSet::defaults_for(device);
    if overrides.is_empty() {
        return Ok(defaults);
    }
    let mut table = toml::Table::try_from(&defaults).map_err(|e| ConfigError::Parse(e.to_string()))?;
    let known = [
        "tRCD",
        "tRP",
        "tRAS",
        "tWR",
        "tRTP",
        "tRRD",
        "tFAW",
        "tWTR",
        "tWTR_S",
        "tRFCpb",
        "tREFIpb",
        "tCCD_S",
        "tCCD_L",
        "RL",
        "WL",
        "rtw_penalty",
        "wtr_penalty",
        "act_slots",
        "cmd_slots",
        "interleave_gap",
    ];
    for (key, value) in overrides {
        if !known.contains(&key.as_str()) {
            return Err(ConfigError::Parse(format!("unknown timing key `{key}`")));
        }
        // Let integer literals stand in for nanosecond floats.
        let value = match value {
            toml::Value::Integer(i) if key.starts_with('t') && !key.starts_with("tCCD") => {
                toml::Value::Float(*i as f64)
            }
            other => other.clone(),
        };
        table.insert(key.clone(), value);
    }
    let timing: TimingSet = toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
    timing.validate()?;
    Ok(timing)
}

/// Parses a configuration document.
pub fn parse_config(text: &str) -> Result<SimConfig, ConfigError> {
    let raw: RawFile = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    let device = validate(raw.device.build()?)?;
    let timing = resolve_timing(&device, &raw.timings)?;
    let cfg = SimConfig {
        device,
        timing,
        controller: raw.controller,
        traffic: raw.traffic,
        timing_overrides: raw.timings,
    };
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<SimConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    parse_config(&text)
}

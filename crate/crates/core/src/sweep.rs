//! Parameter sweeps over data rates and configurations, and their output.

use std::cmp::Ordering;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{BankMode, ConfigError, DeviceConfig, SimConfig, Standard, LPDDR4_RATES, LPDDR5_RATES};
use crate::engine::{run, SimError, SimReport};
use crate::traffic::Pattern;

pub const CSV_HEADER: &str = "standard,data_rate_mts,bank_mode,burst_length,traffic,rw_ratio,seed,bandwidth_gbps,utilization,row_hit_rate,avg_read_latency_ns,sim_cycles";

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("no reports to emit")]
    EmptyInput,
    #[error("unknown figure preset {0:?} (expected 1a, 1b, 1c or 1d)")]
    UnknownFigure(String),
    #[error("malformed CSV line {line}: {reason}")]
    MalformedCsv { line: usize, reason: String },
    #[error("{point}: {source}")]
    Run { point: String, source: SimError },
}

/// One plotted curve: everything but the data rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveSpec {
    pub standard: Standard,
    pub bank_mode: BankMode,
    pub burst_length: u32,
    pub pattern: Pattern,
    pub read_ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    /// Each curve with the data rates it is swept over.
    pub curves: Vec<(CurveSpec, Vec<u32>)>,
    pub seeds: Vec<u64>,
}

/// Why a (curve, rate) pair was left out.
#[derive(Debug, Clone, PartialEq)]
pub struct Skipped {
    pub curve: CurveSpec,
    pub data_rate: u32,
    pub reason: String,
}

pub fn rates_for(standard: Standard) -> Vec<u32> {
    match standard {
        Standard::Lpddr4 => LPDDR4_RATES.to_vec(),
        Standard::Lpddr5 => LPDDR5_RATES.to_vec(),
    }
}

/// Curve set of one figure panel. The LP5 16B/BG curve is swept as two
/// curves; each mode only accepts its own rate range.
pub fn figure_preset(figure: &str) -> Result<SweepSpec, SweepError> {
    let (pattern, bl) = match figure.to_ascii_lowercase().as_str() {
        "1a" => (Pattern::Sequential, 16),
        "1b" => (Pattern::Sequential, 32),
        "1c" => (Pattern::Random, 16),
        "1d" => (Pattern::Random, 32),
        _ => return Err(SweepError::UnknownFigure(figure.to_string())),
    };
    let mut modes = vec![BankMode::Lp4EightBank, BankMode::Lp5SixteenBank, BankMode::Lp5BankGroup];
    if bl == 32 {
        modes.push(BankMode::Lp5EightBank);
    }
    let mut curves = Vec::new();
    for mode in modes {
        for ratio in [0.5, 1.0] {
            let curve = CurveSpec {
                standard: mode.standard(),
                bank_mode: mode,
                burst_length: bl,
                pattern,
                read_ratio: ratio,
            };
            curves.push((curve, rates_for(mode.standard())));
        }
    }
    Ok(SweepSpec { curves, seeds: vec![1] })
}

/// Expands `spec` into runnable configurations on top of `base`, which
/// supplies timing overrides, controller settings and the request budget.
pub fn expand(spec: &SweepSpec, base: &SimConfig) -> (Vec<SimConfig>, Vec<Skipped>) {
    let mut points = Vec::new();
    let mut skipped = Vec::new();
    for (curve, rates) in &spec.curves {
        for &rate in rates {
            let device = DeviceConfig::new(curve.standard, rate, curve.bank_mode, curve.burst_length);
            let mut cfg = base.clone();
            let result: Result<(), ConfigError> = cfg.set_device(device).and_then(|()| {
                cfg.traffic.pattern = curve.pattern;
                cfg.traffic.read_ratio = curve.read_ratio;
                cfg.validate()
            });
            if let Err(e) = result {
                skipped.push(Skipped {
                    curve: *curve,
                    data_rate: rate,
                    reason: e.to_string(),
                });
                continue;
            }
            for &seed in &spec.seeds {
                let mut c = cfg.clone();
                c.traffic.seed = seed;
                points.push(c);
            }
        }
    }
    (points, skipped)
}

fn describe(c: &SimConfig) -> String {
    format!(
        "{} {} BL{} {} MT/s {} r={} seed={}",
        c.device.standard,
        c.device.bank_mode.short_name(),
        c.device.burst_length,
        c.device.data_rate,
        c.traffic.pattern.short_name(),
        c.traffic.read_ratio,
        c.traffic.seed
    )
}

/// Runs every point on `jobs` threads (0 = all cores). Results come back
/// sorted, so the thread count never shows in the output.
pub fn run_sweep(points: &[SimConfig], jobs: usize) -> Result<Vec<SimReport>, SweepError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .expect("thread pool");
    let mut reports = pool.install(|| {
        points
            .par_iter()
            .map(|c| {
                run(c, false).map(|o| o.report).map_err(|source| SweepError::Run {
                    point: describe(c),
                    source,
                })
            })
            .collect::<Result<Vec<_>, _>>()
    })?;
    reports.sort_by(compare_reports);
    Ok(reports)
}

fn compare_reports(a: &SimReport, b: &SimReport) -> Ordering {
    (&a.standard, &a.bank_mode, &a.traffic)
        .cmp(&(&b.standard, &b.bank_mode, &b.traffic))
        .then(a.rw_ratio.total_cmp(&b.rw_ratio))
        .then(a.data_rate_mts.cmp(&b.data_rate_mts))
        .then(a.burst_length.cmp(&b.burst_length))
        .then(a.seed.cmp(&b.seed))
}

/// One CSV row per report, sorted by (standard, bank mode, traffic, read
/// ratio, data rate). Floats use the shortest form that parses back exactly.
pub fn emit_csv(reports: &[SimReport]) -> Result<String, SweepError> {
    if reports.is_empty() {
        return Err(SweepError::EmptyInput);
    }
    let mut sorted: Vec<&SimReport> = reports.iter().collect();
    sorted.sort_by(|a, b| compare_reports(a, b));
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in sorted {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            r.standard,
            r.data_rate_mts,
            r.bank_mode,
            r.burst_length,
            r.traffic,
            r.rw_ratio,
            r.seed,
            r.bandwidth_gbps,
            r.utilization,
            r.row_hit_rate,
            r.avg_read_latency_ns,
            r.sim_cycles
        )
        .expect("writing to a String");
    }
    Ok(out)
}

pub fn emit_json(reports: &[SimReport]) -> Result<String, SweepError> {
    if reports.is_empty() {
        return Err(SweepError::EmptyInput);
    }
    let mut sorted: Vec<&SimReport> = reports.iter().collect();
    sorted.sort_by(|a, b| compare_reports(a, b));
    Ok(serde_json::to_string_pretty(&sorted).expect("reports serialize"))
}

/// A parsed CSV row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub standard: String,
    pub data_rate_mts: u32,
    pub bank_mode: String,
    pub burst_length: u32,
    pub traffic: String,
    pub rw_ratio: f64,
    pub seed: u64,
    pub bandwidth_gbps: f64,
    pub utilization: f64,
    pub row_hit_rate: f64,
    pub avg_read_latency_ns: f64,
    pub sim_cycles: u64,
}

impl From<&SimReport> for CsvRow {
    fn from(r: &SimReport) -> Self {
        CsvRow {
            standard: r.standard.clone(),
            data_rate_mts: r.data_rate_mts,
            bank_mode: r.bank_mode.clone(),
            burst_length: r.burst_length,
            traffic: r.traffic.clone(),
            rw_ratio: r.rw_ratio,
            seed: r.seed,
            bandwidth_gbps: r.bandwidth_gbps,
            utilization: r.utilization,
            row_hit_rate: r.row_hit_rate,
            avg_read_latency_ns: r.avg_read_latency_ns,
            sim_cycles: r.sim_cycles,
        }
    }
}

pub fn parse_csv(text: &str) -> Result<Vec<CsvRow>, SweepError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == CSV_HEADER => {}
        _ => {
            return Err(SweepError::MalformedCsv {
                line: 1,
                reason: "missing header".into(),
            })
        }
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        let bad = |reason: String| SweepError::MalformedCsv { line: i + 1, reason };
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 12 {
            return Err(bad(format!("expected 12 fields, found {}", f.len())));
        }
        fn num<T: std::str::FromStr>(s: &str) -> Result<T, String> {
            s.parse().map_err(|_| format!("bad number {s:?}"))
        }
        let row = (|| {
            Ok::<_, String>(CsvRow {
                standard: f[0].to_string(),
                data_rate_mts: num(f[1])?,
                bank_mode: f[2].to_string(),
                burst_length: num(f[3])?,
                traffic: f[4].to_string(),
                rw_ratio: num(f[5])?,
                seed: num(f[6])?,
                bandwidth_gbps: num(f[7])?,
                utilization: num(f[8])?,
                row_hit_rate: num(f[9])?,
                avg_read_latency_ns: num(f[10])?,
                sim_cycles: num(f[11])?,
            })
        })()
        .map_err(bad)?;
        rows.push(row);
    }
    Ok(rows)
}

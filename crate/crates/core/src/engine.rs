//! Cycle loop tying traffic, controller and device together, plus metrics.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{theoretical_max_bandwidth, ConfigError, CycleTimings, PagePolicy, SimConfig};
use crate::controller::{ControllerState, RequestKind};
use crate::protocol::{BusModel, Command, CommandKind, DeviceState, Interval, ProtocolError, WindowError};
use crate::traffic::{inject, Generator, PRNG_NAME};

/// Requests excluded from measurement before steady state is assumed.
pub const WARMUP_REQUESTS: u64 = 128;

// No command for this long while work is queued means the scheduler is
// wedged; far above any legal stall (tRFCpb plus a full postponed refresh).
const STALL_LIMIT: u64 = 1_000_000;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("internal consistency failure: {0}")]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Window(#[from] WindowError),
    #[error("no progress since cycle {since} with {queued} requests queued")]
    Stalled { since: u64, queued: usize },
    #[error("run ended before the measurement window opened")]
    NoMeasurement,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub standard: String,
    pub data_rate_mts: u32,
    pub bank_mode: String,
    pub burst_length: u32,
    pub traffic: String,
    pub rw_ratio: f64,
    pub seed: u64,
    pub prng: String,
    pub page_policy: PagePolicy,
    pub nonstandard_rate: bool,
    pub bandwidth_gbps: f64,
    pub theoretical_max_gbps: f64,
    pub utilization: f64,
    pub row_hit_rate: f64,
    pub avg_read_latency_ns: f64,
    pub p95_read_latency_ns: f64,
    pub p99_read_latency_ns: f64,
    pub commands: BTreeMap<String, u64>,
    pub refresh_per_bank: Vec<u64>,
    pub reads_serviced: u64,
    pub writes_serviced: u64,
    pub requests_injected: u64,
    pub sim_cycles: u64,
    pub window_start: u64,
    pub window_end: u64,
    pub measured_cycles: u64,
    pub command_clock_mhz: f64,
    pub wall_clock_s: f64,
    pub config: SimConfig,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: SimReport,
    pub trace: Option<Vec<Command>>,
}

/// Busy fraction of the data bus over `window`, which must end no later
/// than `limit`.
pub fn measure_window(bus: &BusModel, window: Interval, limit: u64) -> Result<f64, WindowError> {
    crate::protocol::measure_window(bus, window, limit)
}

/// Nearest-rank percentile of sorted data.
fn percentile(sorted: &[u64], p: f64) -> u64 {
    if sorted.is_empty() {
        return 0;
    }
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

/// Simulates one configuration to completion.
///
/// The first [`WARMUP_REQUESTS`] requests and the first refresh interval are
/// warm-up. Measurement opens at the column command that satisfies both and
/// then runs for `request_budget` further requests; utilization is the
/// data-bus occupancy from that point to the end of the last transfer.
pub fn run(config: &SimConfig, record_trace: bool) -> Result<RunOutput, SimError> {
    config.validate()?;
    let started = Instant::now();
    let timing = CycleTimings::derive(&config.device, &config.timing);
    let clock = config.device.clock();
    let mut device = DeviceState::new(&config.device, timing.clone());
    let mut controller = ControllerState::new(config);
    let mut generator = Generator::new(&config.traffic, &config.device);
    let budget = config.traffic.request_budget;
    generator.set_budget(u64::MAX);

    let mut trace = record_trace.then(Vec::new);
    let mut commands: BTreeMap<String, u64> = CommandKind::ALL.iter().map(|k| (k.as_str().to_string(), 0)).collect();
    let mut serviced = 0u64;
    let mut window_start: Option<u64> = None;
    let mut reads = 0u64;
    let mut writes = 0u64;
    let mut hits = 0u64;
    let mut latencies = Vec::with_capacity(budget as usize);
    // reads measured: data end is known at column issue, the latency is
    // recorded then
    let mut now = 0u64;
    let mut last_progress = 0u64;
    let mut flushing = false;

    loop {
        inject(&mut generator, &mut controller, now);
        if generator.exhausted() && controller.is_empty() {
            if !flushing {
                controller.flush_refresh();
                flushing = true;
            }
            if !controller.refresh_debt_outstanding() {
                break;
            }
        }

        let mut issued = None;
        if let Some(cmd) = controller.refresh_tick(&device, now) {
            device.issue(&cmd, now)?;
            controller.commit_refresh(&cmd);
            issued = Some(cmd);
        } else if let Some(sel) = controller.fr_fcfs_select(&device, now) {
            let slots = device.issue(&sel.command, now)?;
            if let Some(done) = controller.commit(&sel, now) {
                serviced += 1;
                let data_end = slots.map_or(now, |s| s.end());
                if let Some(start) = window_start {
                    debug_assert!(now >= start);
                    match done.request.kind {
                        RequestKind::Read => {
                            reads += 1;
                            latencies.push(data_end - done.request.arrival_cycle);
                        }
                        RequestKind::Write => writes += 1,
                    }
                    hits += u64::from(done.row_hit);
                } else if serviced >= WARMUP_REQUESTS && now >= timing.refi_pb {
                    window_start = Some(now);
                    generator.set_budget((serviced + budget).max(generator.issued()));
                }
            }
            issued = Some(sel.command);
        }

        if let Some(cmd) = issued {
            *commands.get_mut(cmd.kind.as_str()).expect("known kind") += 1;
            if let Some(t) = trace.as_mut() {
                t.push(cmd.at(now));
            }
            last_progress = now;
        } else if now - last_progress > STALL_LIMIT {
            return Err(SimError::Stalled {
                since: last_progress,
                queued: controller.read_len() + controller.write_len(),
            });
        }
        now += 1;
    }

    let start = window_start.ok_or(SimError::NoMeasurement)?;
    let end = device.bus().data_end().max(start + 1);
    let utilization = measure_window(device.bus(), Interval::new(start, end), end)?;
    let theoretical = theoretical_max_bandwidth(&config.device);
    latencies.sort_unstable();
    let to_ns = |c: f64| c * clock.period_ns();
    let avg = if latencies.is_empty() {
        0.0
    } else {
        latencies.iter().sum::<u64>() as f64 / latencies.len() as f64
    };
    let measured = reads + writes;
    let dev = &config.device;
    let report = SimReport {
        standard: dev.standard.as_str().to_string(),
        data_rate_mts: dev.data_rate,
        bank_mode: dev.bank_mode.short_name().to_string(),
        burst_length: dev.burst_length,
        traffic: config.traffic.pattern.short_name().to_string(),
        rw_ratio: config.traffic.read_ratio,
        seed: config.traffic.seed,
        prng: PRNG_NAME.to_string(),
        page_policy: controller.policy(),
        nonstandard_rate: !dev.is_standard_rate(),
        bandwidth_gbps: utilization * theoretical,
        theoretical_max_gbps: theoretical,
        utilization,
        row_hit_rate: if measured == 0 {
            0.0
        } else {
            hits as f64 / measured as f64
        },
        avg_read_latency_ns: to_ns(avg),
        p95_read_latency_ns: to_ns(percentile(&latencies, 95.0) as f64),
        p99_read_latency_ns: to_ns(percentile(&latencies, 99.0) as f64),
        commands,
        refresh_per_bank: controller.refresh().issued_counts().to_vec(),
        reads_serviced: reads,
        writes_serviced: writes,
        requests_injected: generator.issued(),
        sim_cycles: now,
        window_start: start,
        window_end: end,
        measured_cycles: end - start,
        command_clock_mhz: clock.command_clock_hz as f64 / 1e6,
        wall_clock_s: started.elapsed().as_secs_f64(),
        config: config.clone(),
    };
    Ok(RunOutput { report, trace })
}

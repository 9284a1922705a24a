//! Synthetic request sources: sequential and uniformly random streams with a
//! configurable read fraction, injected as fast as the controller accepts.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ConfigError, DeviceConfig};
use crate::controller::{Admission, ControllerState, Request, RequestKind};

/// Name of the generator behind every random draw, echoed in reports.
pub const PRNG_NAME: &str = "ChaCha8Rng (rand_chacha 0.3, seed_from_u64)";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pattern {
    #[serde(alias = "seq")]
    Sequential,
    Random,
}

impl Pattern {
    pub fn parse(s: &str) -> Result<Self, ConfigError> {
        match s.to_ascii_lowercase().as_str() {
            "seq" | "sequential" => Ok(Pattern::Sequential),
            "random" | "rand" | "rdm" => Ok(Pattern::Random),
            _ => Err(ConfigError::UnknownValue {
                field: "traffic",
                value: s.to_string(),
            }),
        }
    }

    pub fn short_name(self) -> &'static str {
        match self {
            Pattern::Sequential => "seq",
            Pattern::Random => "random",
        }
    }
}

/// How reads and writes are interleaved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RwMix {
    /// Independent seeded draw per request.
    Bernoulli,
    /// Deterministic spreading that hits the ratio exactly.
    Alternate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrafficConfig {
    pub pattern: Pattern,
    pub read_ratio: f64,
    pub seed: u64,
    pub request_budget: u64,
    pub mix: RwMix,
}

impl Default for TrafficConfig {
    fn default() -> Self {
        TrafficConfig {
            pattern: Pattern::Sequential,
            read_ratio: 1.0,
            seed: 1,
            request_budget: 100_000,
            mix: RwMix::Bernoulli,
        }
    }
}

impl TrafficConfig {
    pub fn new(pattern: Pattern, read_ratio: f64, seed: u64, request_budget: u64) -> Self {
        TrafficConfig {
            pattern,
            read_ratio,
            seed,
            request_budget,
            mix: RwMix::Bernoulli,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(0.0..=1.0).contains(&self.read_ratio) {
            return Err(ConfigError::InvalidTraffic(format!(
                "read_ratio {} outside [0, 1]",
                self.read_ratio
            )));
        }
        if self.request_budget == 0 {
            return Err(ConfigError::InvalidTraffic("request_budget must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum TrafficError {
    #[error("request budget of {0} exhausted")]
    BudgetExhausted(u64),
}

/// Deterministic request stream for one simulation.
#[derive(Debug, Clone)]
pub struct Generator {
    pattern: Pattern,
    read_ratio: f64,
    mix: RwMix,
    budget: u64,
    issued: u64,
    burst_bytes: u64,
    bursts: u64,
    next_seq: u64,
    rng: ChaCha8Rng,
    // rejected request waiting to be retried
    pending: Option<Request>,
}

impl Generator {
    pub fn new(traffic: &TrafficConfig, device: &DeviceConfig) -> Self {
        let burst_bytes = device.burst_bytes();
        Generator {
            pattern: traffic.pattern,
            read_ratio: traffic.read_ratio,
            mix: traffic.mix,
            budget: traffic.request_budget,
            issued: 0,
            burst_bytes,
            bursts: device.capacity_bytes() / burst_bytes,
            next_seq: 0,
            rng: ChaCha8Rng::seed_from_u64(traffic.seed),
            pending: None,
        }
    }

    pub fn issued(&self) -> u64 {
        self.issued
    }

    pub fn budget(&self) -> u64 {
        self.budget
    }

    /// Moves the end of the stream. The engine uses this to add the
    /// measurement budget once warm-up is over.
    pub fn set_budget(&mut self, budget: u64) {
        self.budget = budget;
    }

    pub fn exhausted(&self) -> bool {
        self.pending.is_none() && self.issued >= self.budget
    }

    pub fn next_request(&mut self) -> Result<Request, TrafficError> {
        if self.issued >= self.budget {
            return Err(TrafficError::BudgetExhausted(self.budget));
        }
        let id = self.issued;
        let address = match self.pattern {
            Pattern::Sequential => {
                let a = self.next_seq * self.burst_bytes;
                self.next_seq = (self.next_seq + 1) % self.bursts;
                a
            }
            Pattern::Random => self.rng.gen_range(0..self.bursts) * self.burst_bytes,
        };
        let is_read = match self.mix {
            RwMix::Bernoulli => self.rng.gen_bool(self.read_ratio),
            // request i is a read when floor((i+1) r) advances
            RwMix::Alternate => {
                let r = self.read_ratio;
                ((id + 1) as f64 * r).floor() > (id as f64 * r).floor()
            }
        };
        self.issued += 1;
        Ok(Request {
            id,
            kind: if is_read { RequestKind::Read } else { RequestKind::Write },
            address,
            arrival_cycle: 0,
        })
    }
}

/// Pushes requests into the controller until it signals backpressure or
/// the budget runs out. A rejected request is kept and retried first on the
/// next call. Returns the number of requests admitted.
pub fn inject(generator: &mut Generator, controller: &mut ControllerState, now: u64) -> usize {
    let mut admitted = 0;
    loop {
        let mut request = match generator.pending.take() {
            Some(r) => r,
            None => match generator.next_request() {
                Ok(r) => r,
                Err(TrafficError::BudgetExhausted(_)) => break,
            },
        };
        request.arrival_cycle = now;
        match controller.admit(request) {
            Admission::Accepted => admitted += 1,
            Admission::Backpressure(r) => {
                generator.pending = Some(r);
                break;
            }
        }
    }
    admitted
}

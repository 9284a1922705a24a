//! Command-trace files and the independent trace checker.
//!
//! A trace has one command per line:
//!
//! ```text
//! issue_cycle,kind,bank_group,bank,row|column
//! ```
//!
//! The last field is the row for ACT, the column for RD/WR/RDA/WRA and 0
//! for PRE and REFpb. Lines starting with `#` are comments.
//!
//! [`validate_trace`] replays a trace against its own table of pairwise
//! constraints. It shares nothing with [`DeviceState`](super::DeviceState)
//! except the rounded timing values, so a scheduler bug that slips past
//! `can_issue` still shows up here.

use std::collections::VecDeque;
use std::fmt;
use std::io::{BufRead, Write};

use serde::Serialize;
use thiserror::Error;

use super::{Command, CommandKind};
use crate::config::{CycleTimings, DeviceConfig};

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("malformed trace at line {line}: {reason}")]
    MalformedTrace { line: usize, reason: String },
    #[error("trace I/O error: {0}")]
    Io(#[from] std::io::Error),
}

fn malformed(line: usize, reason: impl Into<String>) -> TraceError {
    TraceError::MalformedTrace {
        line,
        reason: reason.into(),
    }
}

pub fn write_trace<W: Write>(mut out: W, trace: &[Command]) -> std::io::Result<()> {
    writeln!(out, "# issue_cycle,kind,bank_group,bank,row|column")?;
    for c in trace {
        let addr = match c.kind {
            CommandKind::Act => c.row,
            k if k.is_column() => c.column,
            _ => 0,
        };
        writeln!(out, "{},{},{},{},{}", c.issue_cycle, c.kind, c.bank_group, c.bank, addr)?;
    }
    Ok(())
}

pub fn read_trace<R: BufRead>(input: R) -> Result<Vec<Command>, TraceError> {
    let mut trace = Vec::new();
    for (idx, line) in input.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 5 {
            return Err(malformed(lineno, format!("expected 5 fields, found {}", fields.len())));
        }
        let num = |i: usize| -> Result<u64, TraceError> {
            fields[i]
                .parse::<u64>()
                .map_err(|e| malformed(lineno, format!("field {}: {e}", i + 1)))
        };
        let issue_cycle = num(0)?;
        let kind: CommandKind = fields[1].parse().map_err(|e: String| malformed(lineno, e))?;
        let narrow = |v: u64| u32::try_from(v).map_err(|_| malformed(lineno, "value out of range"));
        let bank_group = narrow(num(2)?)?;
        let bank = narrow(num(3)?)?;
        let addr = narrow(num(4)?)?;
        let (row, column) = match kind {
            CommandKind::Act => (addr, 0),
            k if k.is_column() => (0, addr),
            _ => (0, 0),
        };
        trace.push(Command {
            kind,
            bank_group,
            bank,
            row,
            column,
            issue_cycle,
        });
    }
    Ok(trace)
}

/// One broken rule: the command that broke it and, for pairwise rules, the
/// earlier command it conflicts with.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub constraint: &'static str,
    pub earlier: Option<Command>,
    pub later: Command,
    /// Earliest legal cycle for `later`, where the rule is a minimum spacing.
    pub required: Option<u64>,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = &self.later;
        write!(
            f,
            "{}: {} bg{} b{} at cycle {}",
            self.constraint, c.kind, c.bank_group, c.bank, c.issue_cycle
        )?;
        if let Some(e) = &self.earlier {
            write!(
                f,
                " (after {} bg{} b{} at {})",
                e.kind, e.bank_group, e.bank, e.issue_cycle
            )?;
        }
        if let Some(r) = self.required {
            write!(f, ", earliest legal {r}")?;
        }
        Ok(())
    }
}

#[derive(Clone, Default)]
struct BankRecord {
    // ACT that opened the current row
    open: Option<Command>,
    // column commands since that ACT
    last_read: Option<Command>,
    last_write: Option<Command>,
    // when the bank may next be activated/refreshed, and what caused it
    reopen_at: u64,
    reopen_cause: Option<(Command, &'static str)>,
}

/// Replays `trace` and reports every timing, state-machine and bus
/// violation. An empty list means the trace is legal.
pub fn validate_trace(
    trace: &[Command],
    config: &DeviceConfig,
    t: &CycleTimings,
) -> Result<Vec<Violation>, TraceError> {
    let groups = config.bank_groups();
    let per_group = config.bank_mode.banks_per_group();
    let mut banks = vec![BankRecord::default(); config.banks() as usize];
    let mut violations = Vec::new();
    let mut prev: Option<Command> = None;
    let mut acts: VecDeque<Command> = VecDeque::new();
    let mut last_col: Option<Command> = None;
    let mut last_col_group: Vec<Option<Command>> = vec![None; groups as usize];
    let mut last_rd: Option<Command> = None;
    let mut last_wr: Option<Command> = None;
    let mut last_wr_group: Vec<Option<Command>> = vec![None; groups as usize];
    let mut bursts: Vec<(u64, u64, Command)> = Vec::new();

    let slots = |k: CommandKind| {
        if k == CommandKind::Act {
            t.act_slots
        } else {
            t.cmd_slots
        }
    };

    let spacing = |violations: &mut Vec<Violation>,
                   name: &'static str,
                   earlier: Option<Command>,
                   later: Command,
                   min_at: Option<u64>| {
        if let Some(min_at) = min_at {
            if later.issue_cycle < min_at {
                violations.push(Violation {
                    constraint: name,
                    earlier,
                    later,
                    required: Some(min_at),
                });
            }
        }
    };

    for (i, &c) in trace.iter().enumerate() {
        if c.bank_group >= groups || c.bank >= per_group {
            return Err(malformed(
                i + 1,
                format!("bank {}/{} does not exist", c.bank_group, c.bank),
            ));
        }
        if let Some(p) = prev {
            if c.issue_cycle < p.issue_cycle {
                return Err(malformed(i + 1, "trace is not sorted by issue cycle"));
            }
            spacing(
                &mut violations,
                "command bus",
                Some(p),
                c,
                Some(p.issue_cycle + slots(p.kind)),
            );
        }
        let flat = (c.bank_group * per_group + c.bank) as usize;
        let now = c.issue_cycle;

        match c.kind {
            CommandKind::Act => {
                let b = &banks[flat];
                if let Some(open) = b.open {
                    violations.push(Violation {
                        constraint: "ACT to open bank",
                        earlier: Some(open),
                        later: c,
                        required: None,
                    });
                }
                if let Some((cause, name)) = b.reopen_cause {
                    spacing(&mut violations, name, Some(cause), c, Some(b.reopen_at));
                }
                if let Some(last) = acts.back() {
                    spacing(&mut violations, "tRRD", Some(*last), c, Some(last.issue_cycle + t.rrd));
                }
                if acts.len() == 4 {
                    let first = acts[0];
                    spacing(&mut violations, "tFAW", Some(first), c, Some(first.issue_cycle + t.faw));
                    acts.pop_front();
                }
                acts.push_back(c);
                let b = &mut banks[flat];
                b.open = Some(c);
                b.last_read = None;
                b.last_write = None;
            }
            k if k.is_column() => {
                let open = banks[flat].open;
                match open {
                    None => violations.push(Violation {
                        constraint: "column command to closed bank",
                        earlier: banks[flat].reopen_cause.map(|(c, _)| c),
                        later: c,
                        required: None,
                    }),
                    Some(a) => spacing(&mut violations, "tRCD", Some(a), c, Some(a.issue_cycle + t.rcd)),
                }
                if let Some(p) = last_col {
                    spacing(&mut violations, "tCCD_S", Some(p), c, Some(p.issue_cycle + t.ccd_s));
                }
                if groups > 1 {
                    if let Some(p) = last_col_group[c.bank_group as usize] {
                        spacing(&mut violations, "tCCD_L", Some(p), c, Some(p.issue_cycle + t.ccd_l));
                    }
                }
                if k.is_read() {
                    let after_write = |w: &Command, wtr: u64| w.issue_cycle + t.wl + t.burst_span + t.wtr_penalty + wtr;
                    if let Some(w) = last_wr {
                        spacing(&mut violations, "tWTR_S", Some(w), c, Some(after_write(&w, t.wtr_s)));
                    }
                    if let Some(w) = last_wr_group[c.bank_group as usize] {
                        spacing(&mut violations, "tWTR", Some(w), c, Some(after_write(&w, t.wtr)));
                    }
                } else if let Some(r) = last_rd {
                    let at = (r.issue_cycle + t.rl + t.burst_span + t.rtw_penalty).saturating_sub(t.wl);
                    spacing(&mut violations, "read-to-write", Some(r), c, Some(at));
                }

                let lat = if k.is_read() { t.rl } else { t.wl };
                let start = now + lat;
                if t.interleaved {
                    let second = start + t.half_burst + t.interleave_gap;
                    bursts.push((start, start + t.half_burst, c));
                    bursts.push((second, second + t.half_burst, c));
                } else {
                    bursts.push((start, start + t.burst, c));
                }

                last_col = Some(c);
                last_col_group[c.bank_group as usize] = Some(c);
                let b = &mut banks[flat];
                if k.is_read() {
                    last_rd = Some(c);
                    b.last_read = Some(c);
                } else {
                    last_wr = Some(c);
                    last_wr_group[c.bank_group as usize] = Some(c);
                    b.last_write = Some(c);
                }
                if k.auto_precharge() {
                    if let Some(a) = b.open {
                        let done = if k.is_read() {
                            now + t.burst + t.rtp
                        } else {
                            now + t.wl + t.burst_span + t.wr
                        };
                        let pre_at = done.max(a.issue_cycle + t.ras);
                        b.reopen_at = pre_at + t.rp;
                        b.reopen_cause = Some((c, "tRP after auto-precharge"));
                    }
                    b.open = None;
                }
            }
            CommandKind::Pre => {
                let b = &banks[flat];
                match b.open {
                    None => violations.push(Violation {
                        constraint: "PRE to closed bank",
                        earlier: b.reopen_cause.map(|(c, _)| c),
                        later: c,
                        required: None,
                    }),
                    Some(a) => {
                        spacing(&mut violations, "tRAS", Some(a), c, Some(a.issue_cycle + t.ras));
                        if let Some(r) = b.last_read {
                            spacing(
                                &mut violations,
                                "tRTP",
                                Some(r),
                                c,
                                Some(r.issue_cycle + t.burst + t.rtp),
                            );
                        }
                        if let Some(w) = b.last_write {
                            let at = w.issue_cycle + t.wl + t.burst_span + t.wr;
                            spacing(&mut violations, "tWR", Some(w), c, Some(at));
                        }
                    }
                }
                let b = &mut banks[flat];
                b.open = None;
                b.reopen_at = now + t.rp;
                b.reopen_cause = Some((c, "tRP"));
            }
            CommandKind::RefPb => {
                let b = &banks[flat];
                if let Some(open) = b.open {
                    violations.push(Violation {
                        constraint: "REFpb to open bank",
                        earlier: Some(open),
                        later: c,
                        required: None,
                    });
                }
                if let Some((cause, name)) = b.reopen_cause {
                    spacing(&mut violations, name, Some(cause), c, Some(b.reopen_at));
                }
                let b = &mut banks[flat];
                b.reopen_at = now + t.rfc_pb;
                b.reopen_cause = Some((c, "tRFCpb"));
            }
            _ => unreachable!(),
        }
        prev = Some(c);
    }

    // data bus: sweep bursts in start order
    bursts.sort_by_key(|&(s, e, c)| (s, e, c.issue_cycle));
    let mut reach: Option<(u64, Command)> = None;
    for &(s, e, c) in &bursts {
        if let Some((end, owner)) = reach {
            if s < end {
                violations.push(Violation {
                    constraint: "data bus overlap",
                    earlier: Some(owner),
                    later: c,
                    required: Some(end),
                });
            }
            if e > end {
                reach = Some((e, c));
            }
        } else {
            reach = Some((e, c));
        }
    }

    Ok(violations)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{BankMode, Standard, TimingSet};

    fn setup() -> (DeviceConfig, CycleTimings) {
        let cfg = DeviceConfig::new(Standard::Lpddr5, 6400, BankMode::Lp5BankGroup, 16);
        let t = CycleTimings::derive(&cfg, &TimingSet::defaults_for(&cfg));
        (cfg, t)
    }

    fn cmd(kind: CommandKind, bg: u32, bank: u32, at: u64) -> Command {
        Command::new(kind, bg, bank, 1, 0).at(at)
    }

    #[test]
    fn legal_sequence_is_clean() {
        let (cfg, t) = setup();
        let trace = vec![
            cmd(CommandKind::Act, 0, 0, 0),
            cmd(CommandKind::Act, 1, 0, t.rrd),
            cmd(CommandKind::Rda, 0, 0, t.rcd),
            cmd(CommandKind::Rda, 1, 0, t.rrd + t.rcd),
        ];
        assert_eq!(validate_trace(&trace, &cfg, &t).unwrap(), vec![]);
    }

    #[test]
    fn read_one_cycle_after_act_breaks_trcd() {
        let (cfg, t) = setup();
        assert_eq!(t.rcd, 15);
        let trace = vec![cmd(CommandKind::Act, 0, 0, 0), cmd(CommandKind::Rd, 0, 0, 2)];
        let v = validate_trace(&trace, &cfg, &t).unwrap();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].constraint, "tRCD");
        assert_eq!(v[0].required, Some(15));
    }

    #[test]
    fn overlapping_bursts_are_caught() {
        let (cfg, t) = setup();
        // a read and a write whose data windows collide on the bus
        let rd_at = 40;
        let wr_at = rd_at + t.rl - t.wl;
        let mut timing = t.clone();
        timing.rtw_penalty = 0;
        timing.rl = t.rl;
        let trace = vec![
            cmd(CommandKind::Act, 0, 0, 0),
            cmd(CommandKind::Act, 1, 0, 8),
            cmd(CommandKind::Rd, 0, 0, rd_at),
            cmd(CommandKind::Wr, 1, 0, wr_at),
        ];
        let v = validate_trace(&trace, &cfg, &timing).unwrap();
        assert!(v.iter().any(|v| v.constraint == "data bus overlap"), "{v:?}");
    }

    #[test]
    fn fifth_act_in_window_breaks_tfaw() {
        let (cfg, mut t) = setup();
        t.faw = 4 * t.rrd + 4;
        let step = t.rrd.max(t.act_slots);
        let trace: Vec<Command> = (0..5)
            .map(|i| cmd(CommandKind::Act, i % 4, i / 4, i as u64 * step))
            .collect();
        assert!(4 * step < t.faw);
        let v = validate_trace(&trace, &cfg, &t).unwrap();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].constraint, "tFAW");
    }

    #[test]
    fn fsm_violations() {
        let (cfg, t) = setup();
        let trace = vec![
            cmd(CommandKind::Rd, 0, 0, 0),
            cmd(CommandKind::Pre, 0, 1, 10),
            cmd(CommandKind::Act, 1, 0, 20),
            cmd(CommandKind::Act, 1, 0, 100),
        ];
        let names: Vec<_> = validate_trace(&trace, &cfg, &t)
            .unwrap()
            .into_iter()
            .map(|v| v.constraint)
            .collect();
        assert!(names.contains(&"column command to closed bank"));
        assert!(names.contains(&"PRE to closed bank"));
        assert!(names.contains(&"ACT to open bank"));
    }

    #[test]
    fn unsorted_trace_is_malformed() {
        let (cfg, t) = setup();
        let trace = vec![cmd(CommandKind::Act, 0, 0, 10), cmd(CommandKind::Act, 1, 0, 5)];
        assert!(matches!(
            validate_trace(&trace, &cfg, &t),
            Err(TraceError::MalformedTrace { line: 2, .. })
        ));
        let trace = vec![cmd(CommandKind::Act, 4, 0, 10)];
        assert!(validate_trace(&trace, &cfg, &t).is_err());
    }

    #[test]
    fn file_round_trip() {
        let trace = vec![
            Command::new(CommandKind::Act, 1, 2, 777, 0).at(3),
            Command::new(CommandKind::Rda, 1, 2, 0, 12).at(20),
            Command::new(CommandKind::RefPb, 0, 1, 0, 0).at(40),
        ];
        let mut buf = Vec::new();
        write_trace(&mut buf, &trace).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.contains("3,ACT,1,2,777"));
        assert!(text.contains("20,RDA,1,2,12"));
        assert_eq!(read_trace(&buf[..]).unwrap(), trace);
    }

    #[test]
    fn incomplete_records_rejected() {
        assert!(read_trace("1,ACT,0,0\n".as_bytes()).is_err());
        assert!(read_trace("1,NOP,0,0,0\n".as_bytes()).is_err());
        assert!(read_trace("x,ACT,0,0,0\n".as_bytes()).is_err());
    }
}

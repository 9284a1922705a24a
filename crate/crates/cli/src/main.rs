//! `lpsim`: single runs, figure sweeps and trace checking.

use std::fs;
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use lpsim_core::config::{load_config, BankMode, ConfigError, CycleTimings, DeviceConfig, SimConfig, Standard};
use lpsim_core::engine::run;
use lpsim_core::protocol::{read_trace, validate_trace, write_trace};
use lpsim_core::sweep::{emit_csv, emit_json, expand, figure_preset, rates_for, run_sweep, CurveSpec, SweepSpec};
use lpsim_core::traffic::{Pattern, TrafficConfig};

/// Directory searched for relative `--config` names; overridden by the
/// `LPSIM_CONFIG_DIR` environment variable.
const DEFAULT_CONFIG_DIR: &str = "configs";
const CONFIG_DIR_ENV: &str = "LPSIM_CONFIG_DIR";

const EXIT_VIOLATIONS: u8 = 1;
const EXIT_CONFIG: u8 = 3;
const EXIT_IO: u8 = 4;
const EXIT_SIM: u8 = 5;

#[derive(Parser)]
#[command(name = "lpsim", version, about = "Cycle-accurate LPDDR4/LPDDR5 channel simulator")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate one configuration and print a CSV row and a JSON report.
    Run(RunArgs),
    /// Sweep data rates and configurations, e.g. one figure panel.
    Sweep(SweepArgs),
    /// Check a command trace against the timing rules.
    ValidateTrace(TraceArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum StandardArg {
    Lpddr4,
    Lpddr5,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    #[value(name = "8b")]
    EightBank,
    #[value(name = "16b")]
    SixteenBank,
    Bg,
}

#[derive(Clone, Copy, ValueEnum)]
enum TrafficArg {
    Seq,
    Random,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Args)]
struct DeviceArgs {
    /// TOML configuration; relative names are also looked up in the config directory.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    standard: Option<StandardArg>,
    #[arg(long)]
    data_rate: Option<u32>,
    #[arg(long, value_enum)]
    bank_mode: Option<ModeArg>,
    #[arg(long, value_parser = clap::value_parser!(u32).range(16..=32))]
    burst_length: Option<u32>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    device: DeviceArgs,
    #[arg(long, value_enum)]
    traffic: Option<TrafficArg>,
    /// Fraction of reads, 0.0..=1.0.
    #[arg(long)]
    rw_ratio: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Measured requests after warm-up.
    #[arg(long)]
    requests: Option<u64>,
    /// Write the command trace here.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Output only this format (default: CSV row, then JSON report).
    #[arg(long, value_enum)]
    format: Option<Format>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// Built-in curve set of one figure panel.
    #[arg(long, value_parser = ["1a", "1b", "1c", "1d"])]
    figure: Option<String>,
    #[command(flatten)]
    device: DeviceArgs,
    #[arg(long, value_enum)]
    traffic: Option<TrafficArg>,
    #[arg(long)]
    rw_ratio: Option<f64>,
    /// Seeds; repeat the flag for several.
    #[arg(long)]
    seed: Vec<u64>,
    #[arg(long)]
    requests: Option<u64>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Parallel runs; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
}

#[derive(Args)]
struct TraceArgs {
    #[command(flatten)]
    device: DeviceArgs,
    #[arg(long)]
    trace: PathBuf,
}

enum Failure {
    Config(String),
    Io(String),
    Sim(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => EXIT_CONFIG,
            Failure::Io(_) => EXIT_IO,
            Failure::Sim(_) => EXIT_SIM,
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Io { .. } => Failure::Io(e.to_string()),
            e => Failure::Config(e.to_string()),
        }
    }
}

fn io_err(path: &Path, e: io::Error) -> Failure {
    Failure::Io(format!("{}: {e}", path.display()))
}

fn resolve_config_path(path: &Path) -> PathBuf {
    if path.is_absolute() || path.exists() {
        return path.to_path_buf();
    }
    let dir = std::env::var_os(CONFIG_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(DEFAULT_CONFIG_DIR));
    dir.join(path)
}

fn default_mode(standard: Standard, data_rate: u32) -> BankMode {
    match standard {
        Standard::Lpddr4 => BankMode::Lp4EightBank,
        Standard::Lpddr5 if data_rate > 3200 => BankMode::Lp5BankGroup,
        Standard::Lpddr5 => BankMode::Lp5SixteenBank,
    }
}

fn mode_for(arg: ModeArg, standard: Standard) -> Result<BankMode, Failure> {
    let name = match arg {
        ModeArg::EightBank => "8b",
        ModeArg::SixteenBank => "16b",
        ModeArg::Bg => "bg",
    };
    Ok(BankMode::parse(name, standard)?)
}

fn standard_of(arg: StandardArg) -> Standard {
    match arg {
        StandardArg::Lpddr4 => Standard::Lpddr4,
        StandardArg::Lpddr5 => Standard::Lpddr5,
    }
}

fn pattern_of(arg: TrafficArg) -> Pattern {
    match arg {
        TrafficArg::Seq => Pattern::Sequential,
        TrafficArg::Random => Pattern::Random,
    }
}

/// The config file (or stock defaults) with device flags applied on top.
fn base_config(args: &DeviceArgs) -> Result<SimConfig, Failure> {
    let mut cfg = match &args.config {
        Some(p) => load_config(&resolve_config_path(p))?,
        None => {
            let standard = args.standard.map_or(Standard::Lpddr5, standard_of);
            let rate = args.data_rate.unwrap_or(match standard {
                Standard::Lpddr4 => 4266,
                Standard::Lpddr5 => 6400,
            });
            let dev = DeviceConfig::new(standard, rate, default_mode(standard, rate), 16);
            SimConfig::new(dev, TrafficConfig::default())?
        }
    };
    let old = cfg.device.clone();
    let standard = args.standard.map_or(old.standard, standard_of);
    let rate = args.data_rate.unwrap_or(old.data_rate);
    let mode = match args.bank_mode {
        Some(m) => mode_for(m, standard)?,
        None if standard == old.standard => old.bank_mode,
        None => default_mode(standard, rate),
    };
    let bl = args.burst_length.unwrap_or(match mode {
        BankMode::Lp5EightBank => 32,
        _ => old.burst_length,
    });
    if (standard, rate, mode, bl) != (old.standard, old.data_rate, old.bank_mode, old.burst_length) {
        cfg.set_device(DeviceConfig::new(standard, rate, mode, bl))?;
    }
    Ok(cfg)
}

fn write_output(out: Option<&Path>, text: &str) -> Result<(), Failure> {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| io_err(p, e)),
        None => io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| Failure::Io(format!("stdout: {e}"))),
    }
}

fn cmd_run(args: RunArgs) -> Result<u8, Failure> {
    let mut cfg = base_config(&args.device)?;
    if let Some(t) = args.traffic {
        cfg.traffic.pattern = pattern_of(t);
    }
    if let Some(r) = args.rw_ratio {
        cfg.traffic.read_ratio = r;
    }
    if let Some(s) = args.seed {
        cfg.traffic.seed = s;
    }
    if let Some(n) = args.requests {
        cfg.traffic.request_budget = n;
    }
    cfg.validate()?;
    let output = run(&cfg, args.trace.is_some()).map_err(|e| Failure::Sim(e.to_string()))?;
    if let (Some(path), Some(trace)) = (&args.trace, &output.trace) {
        let file = fs::File::create(path).map_err(|e| io_err(path, e))?;
        write_trace(io::BufWriter::new(file), trace).map_err(|e| io_err(path, e))?;
    }
    let reports = [output.report];
    let csv = emit_csv(&reports).map_err(|e| Failure::Sim(e.to_string()))?;
    let json = serde_json::to_string_pretty(&reports[0]).expect("report serializes") + "\n";
    let text = match args.format {
        Some(Format::Csv) => csv,
        Some(Format::Json) => json,
        None => csv + &json,
    };
    write_output(args.out.as_deref(), &text)?;
    Ok(0)
}

fn cmd_sweep(args: SweepArgs) -> Result<u8, Failure> {
    let mut base = base_config(&args.device)?;
    if let Some(n) = args.requests {
        base.traffic.request_budget = n;
    }
    let mut spec = match &args.figure {
        Some(f) => figure_preset(f).map_err(|e| Failure::Config(e.to_string()))?,
        None => {
            let d = &base.device;
            let curve = CurveSpec {
                standard: d.standard,
                bank_mode: d.bank_mode,
                burst_length: d.burst_length,
                pattern: args.traffic.map_or(base.traffic.pattern, pattern_of),
                read_ratio: args.rw_ratio.unwrap_or(base.traffic.read_ratio),
            };
            let rates = match args.device.data_rate {
                Some(r) => vec![r],
                None => rates_for(d.standard),
            };
            SweepSpec {
                curves: vec![(curve, rates)],
                seeds: vec![base.traffic.seed],
            }
        }
    };
    if !args.seed.is_empty() {
        spec.seeds = args.seed.clone();
    }
    let (points, skipped) = expand(&spec, &base);
    for s in &skipped {
        eprintln!(
            "note: skipping {} {} BL{} at {} MT/s: {}",
            s.curve.standard,
            s.curve.bank_mode.short_name(),
            s.curve.burst_length,
            s.data_rate,
            s.reason
        );
    }
    if points.is_empty() {
        return Err(Failure::Config("sweep has no valid points".into()));
    }
    let reports = run_sweep(&points, args.jobs).map_err(|e| Failure::Sim(e.to_string()))?;
    let text = match args.format {
        Format::Csv => emit_csv(&reports),
        Format::Json => emit_json(&reports).map(|j| j + "\n"),
    }
    .map_err(|e| Failure::Sim(e.to_string()))?;
    write_output(args.out.as_deref(), &text)?;
    Ok(0)
}

fn cmd_validate(args: TraceArgs) -> Result<u8, Failure> {
    let cfg = base_config(&args.device)?;
    let file = fs::File::open(&args.trace).map_err(|e| io_err(&args.trace, e))?;
    let trace = read_trace(BufReader::new(file)).map_err(|e| Failure::Io(e.to_string()))?;
    let timing = CycleTimings::derive(&cfg.device, &cfg.timing);
    let violations = validate_trace(&trace, &cfg.device, &timing).map_err(|e| Failure::Io(e.to_string()))?;
    for v in &violations {
        println!("{v}");
    }
    println!("{} commands, {} violations", trace.len(), violations.len());
    Ok(if violations.is_empty() { 0 } else { EXIT_VIOLATIONS })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Cmd::Run(a) => cmd_run(a),
        Cmd::Sweep(a) => cmd_sweep(a),
        Cmd::ValidateTrace(a) => cmd_validate(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            let (Failure::Config(m) | Failure::Io(m) | Failure::Sim(m)) = &f;
            eprintln!("error: {m}");
            ExitCode::from(f.code())
        }
    }
}

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn lpsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lpsim"))
        .args(args)
        .env(
            "LPSIM_CONFIG_DIR",
            Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs"),
        )
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn run_prints_csv_then_json() {
    let o = lpsim(&["run", "--traffic", "random", "--rw-ratio", "0.5", "--requests", "500"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("standard,data_rate_mts,bank_mode"));
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(&row[..6], ["lpddr5", "6400", "bg", "16", "random", "0.5"]);
    let json_start = text.find('{').unwrap();
    let report: serde_json::Value = serde_json::from_str(&text[json_start..]).unwrap();
    assert_eq!(
        report["reads_serviced"].as_u64().unwrap() + report["writes_serviced"].as_u64().unwrap(),
        500
    );
    let u = report["utilization"].as_f64().unwrap();
    assert!(u > 0.0 && u <= 2.0 / 3.0);
}

#[test]
fn json_only_output_to_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.json");
    let o = lpsim(&[
        "run",
        "--config",
        "lp4.toml",
        "--requests",
        "300",
        "--format",
        "json",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(o.stdout.is_empty());
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out).unwrap()).unwrap();
    assert_eq!(report["standard"], "lpddr4");
    assert_eq!(report["data_rate_mts"], 4266);
    assert_eq!(report["page_policy"], "closed");
}

#[test]
fn emitted_trace_validates_and_a_broken_one_does_not() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("t.csv");
    let t = trace.to_str().unwrap();
    let dev = ["--data-rate", "4800", "--bank-mode", "bg", "--burst-length", "32"];
    let mut args = vec![
        "run",
        "--traffic",
        "seq",
        "--requests",
        "400",
        "--format",
        "csv",
        "--trace",
        t,
    ];
    args.extend(dev);
    assert_eq!(lpsim(&args).status.code(), Some(0));

    let mut check = vec!["validate-trace", "--trace", t];
    check.extend(dev);
    let o = lpsim(&check);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).trim_end().ends_with(", 0 violations"));

    // pull the first read right behind its ACT
    let text = fs::read_to_string(&trace).unwrap();
    let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
    let act = lines.iter().position(|l| l.contains(",ACT,")).unwrap();
    let act_cycle: u64 = lines[act].split(',').next().unwrap().parse().unwrap();
    let rd = lines.iter().position(|l| l.contains(",RD,")).unwrap();
    let fields: Vec<&str> = lines[rd].split(',').collect();
    let moved = format!("{},{}", act_cycle + 2, fields[1..].join(","));
    lines.remove(rd);
    lines.insert(act + 1, moved);
    fs::write(&trace, lines.join("\n") + "\n").unwrap();
    let o = lpsim(&check);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("tRCD"), "{}", stdout(&o));
}

#[test]
fn sweep_covers_every_rate_in_order() {
    let o = lpsim(&[
        "sweep",
        "--standard",
        "lpddr4",
        "--traffic",
        "random",
        "--rw-ratio",
        "1.0",
        "--requests",
        "300",
        "--jobs",
        "2",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let rates: Vec<u32> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(rates, [533, 1066, 1600, 2133, 2666, 3200, 3733, 4266]);
}

#[test]
fn figure_preset_reports_skipped_points() {
    let o = lpsim(&["sweep", "--figure", "1a", "--requests", "200", "--format", "json"]);
    assert_eq!(o.status.code(), Some(0));
    let reports: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    // LP4 8 rates plus LP5 12 rates split over 16B and BG, for two mixes
    assert_eq!(reports.as_array().unwrap().len(), 40);
    assert!(String::from_utf8_lossy(&o.stderr).contains("skipping"));
}

#[test]
fn exit_codes() {
    // usage error from the argument parser
    assert_eq!(lpsim(&["run", "--bank-mode", "12b"]).status.code(), Some(2));
    // 16B mode is not offered above 3200 MT/s
    assert_eq!(
        lpsim(&["run", "--bank-mode", "16b", "--data-rate", "6400"])
            .status
            .code(),
        Some(3)
    );
    assert_eq!(
        lpsim(&["run", "--rw-ratio", "1.5", "--requests", "10"]).status.code(),
        Some(3)
    );
    assert_eq!(
        lpsim(&["run", "--config", "/nonexistent/x.toml"]).status.code(),
        Some(4)
    );
    assert_eq!(
        lpsim(&["validate-trace", "--trace", "/nonexistent/t.csv"])
            .status
            .code(),
        Some(4)
    );
}

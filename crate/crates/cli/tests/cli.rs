use std::fs;
use std::process::{Command, Output};

fn platonet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_platonet"))
        .args(args)
        .env("PLATONET_THREADS", "2")
        .output()
        .expect("run platonet")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn records(text: &str) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let headers = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| rec.unwrap().iter().map(String::from).collect())
        .collect();
    (headers, rows)
}

#[test]
fn geometry_lists_each_pair_once() {
    let o = platonet(&["geometry", "--solid", "octahedron", "--coupling-mode", "nn"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let (headers, rows) = records(&stdout(&o));
    assert_eq!(headers, ["i", "j", "r_ij", "J_ij"]);
    assert_eq!(rows.len(), 15);
    let nonzero = rows.iter().filter(|r| r[3].parse::<f64>().unwrap() != 0.0).count();
    assert_eq!(nonzero, 12);
}

#[test]
fn geometry_json_carries_structure() {
    let o = platonet(&["geometry", "--solid", "icosahedron", "--format", "json"]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["N_c"], 6);
    assert_eq!(v["edge_length"].as_f64().unwrap().round(), 2.0);
    assert_eq!(v["vertices"].as_array().unwrap().len(), 12);
    assert!(v["adjacency"][0]
        .as_array()
        .unwrap()
        .iter()
        .all(|k| k.as_u64().unwrap() >= 1));
}

#[test]
fn simulate_csv_round_trips() {
    let o = platonet(&[
        "simulate", "--solid", "cube", "--gamma", "0.5", "--t-end", "2", "--stride", "0.5",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let (headers, rows) = records(&stdout(&o));
    assert_eq!(headers.len(), 2 + 8 + 3);
    assert_eq!(&headers[..3], ["t", "Gamma_t", "rho_11"]);
    assert_eq!(headers.last().unwrap(), "trace_error");
    assert_eq!(rows.len(), 5);
    for row in &rows {
        let v: Vec<f64> = row.iter().map(|c| c.parse().unwrap()).collect();
        let total: f64 = v[2..headers.len() - 1].iter().sum();
        assert!((total - 1.0).abs() < 1e-9, "{total}");
        for (cell, x) in row.iter().zip(&v) {
            assert_eq!(&format_like(*x, cell), cell);
        }
    }
}

/// Re-parsing then re-printing must reproduce the cell exactly.
fn format_like(x: f64, cell: &str) -> String {
    if cell.contains('e') {
        format!("{x:e}")
    } else {
        format!("{x}")
    }
}

#[test]
fn simulate_is_deterministic() {
    let args = [
        "simulate",
        "--solid",
        "icosahedron",
        "--gamma",
        "1",
        "--gamma-diss",
        "0.1",
        "--t-end",
        "3",
    ];
    assert_eq!(platonet(&args).stdout, platonet(&args).stdout);
}

#[test]
fn output_file_matches_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.csv");
    let args = ["reduced", "--J", "1", "--Nc", "4", "--gamma", "1", "--t-end", "1"];
    let printed = platonet(&args).stdout;
    let mut with_file = args.to_vec();
    with_file.extend(["--output", path.to_str().unwrap()]);
    let o = platonet(&with_file);
    assert!(o.status.success());
    assert!(o.stdout.is_empty());
    assert_eq!(fs::read(&path).unwrap(), printed);
}

#[test]
fn quotient_reports_one_based_blocks() {
    let o = platonet(&["quotient", "--solid", "cube", "--coupling-mode", "nn"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let (_, rows) = records(&stdout(&o));
    assert_eq!(rows.len(), 4);
    let sink_row = rows.iter().find(|r| r[3] == "true").unwrap();
    assert!(sink_row[1].split(' ').any(|s| s == "8"));
}

#[test]
fn quotient_failure_is_a_runtime_error() {
    let o = platonet(&["quotient", "--solid", "octahedron"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("no FCN quotient"));
}

#[test]
fn steady_agrees_with_its_own_sweep() {
    let single = platonet(&["steady", "--J", "1", "--Nc", "4", "--gamma", "1", "--gamma-diss", "0.1"]);
    let (h, rows) = records(&stdout(&single));
    let col = h.iter().position(|c| c == "final_value").unwrap();
    let value: f64 = rows[0][col].parse().unwrap();
    assert!((value - 0.4786).abs() < 1e-3);
    let sweep = platonet(&[
        "steady",
        "--J",
        "1",
        "--Nc",
        "4",
        "--gamma-diss",
        "0.1",
        "--sweep",
        "--from",
        "0.1",
        "--to",
        "10",
        "--points",
        "3",
        "--log",
    ]);
    let (h, rows) = records(&stdout(&sweep));
    assert_eq!(h, ["gamma", "final_value"]);
    assert_eq!(rows[1][0], "1");
    assert_eq!(rows[1][1].parse::<f64>().unwrap(), value);
}

#[test]
fn steady_ordered_limits() {
    for (order, want) in [("gamma-first", 1.0 / 3.0), ("diss-first", 1.0)] {
        let o = platonet(&["steady", "--J", "1", "--Nc", "4", "--limit", order]);
        assert!(o.status.success(), "{}", stderr(&o));
        let (_, rows) = records(&stdout(&o));
        let v: f64 = rows[0].last().unwrap().parse().unwrap();
        assert!((v - want).abs() < 1e-4, "{order}: {v}");
    }
}

#[test]
fn design_sweep_rises_with_dephasing() {
    let o = platonet(&[
        "design",
        "--sweep",
        "gamma",
        "--from",
        "0.1",
        "--to",
        "100",
        "--points",
        "4",
        "--log",
        "--gamma-diss",
        "0.1",
        "--Nc",
        "4",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let (h, rows) = records(&stdout(&o));
    assert_eq!(&h[..2], ["swept_value", "J_star"]);
    let js: Vec<f64> = rows.iter().map(|r| r[1].parse().unwrap()).collect();
    assert!(js.windows(2).all(|w| w[1] >= w[0]), "{js:?}");
}

#[test]
fn design_fixed_target_reproduces_final_value() {
    let o = platonet(&[
        "design",
        "--gamma",
        "1",
        "--gamma-diss",
        "0.1",
        "--target",
        "0.4",
        "--format",
        "json",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let j = v["j_solution"].as_f64().unwrap();
    let o = platonet(&[
        "steady",
        "--J",
        &j.to_string(),
        "--Nc",
        "4",
        "--gamma",
        "1",
        "--gamma-diss",
        "0.1",
    ]);
    let (h, rows) = records(&stdout(&o));
    let col = h.iter().position(|c| c == "final_value").unwrap();
    assert!((rows[0][col].parse::<f64>().unwrap() - 0.4).abs() < 1e-8);
}

#[test]
fn usage_errors_exit_with_two() {
    let cases: [(&[&str], &str); 7] = [
        (&["geometry", "--solid", "pyramid"], "--solid"),
        (&["simulate", "--solid", "cube", "--init", "1:0.5,2:0.4"], "sum to 0.9"),
        (&["simulate", "--solid", "cube", "--gamma", "-1"], "--gamma"),
        (&["simulate", "--solid", "cube", "--gamma-sink", "0"], "--gamma-sink"),
        (&["simulate", "--solid", "cube", "--sink-site", "9"], "--sink-site"),
        (&["steady", "--J", "1", "--Nc", "4"], "--limit"),
        (&["design", "--sweep", "gamma"], "--from"),
    ];
    for (args, needle) in cases {
        let o = platonet(args);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
        assert!(stderr(&o).contains(needle), "{args:?}: {}", stderr(&o));
    }
}

#[test]
fn config_file_supplies_flags_and_command_line_wins() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.conf");
    fs::write(&path, "# steady run\nJ = 1\nNc = 4\ngamma = 5\ngamma-diss = 0.1\n").unwrap();
    let p = path.to_str().unwrap();
    let from_file = platonet(&["steady", "--config", p]);
    assert!(from_file.status.success(), "{}", stderr(&from_file));
    let explicit = platonet(&["steady", "--J", "1", "--Nc", "4", "--gamma", "5", "--gamma-diss", "0.1"]);
    assert_eq!(from_file.stdout, explicit.stdout);
    let overridden = platonet(&["steady", "--config", p, "--gamma", "1"]);
    let (_, rows) = records(&stdout(&overridden));
    assert_eq!(rows[0][2], "1");

    fs::write(&path, "J = 1\nNc = 4\ngamma = 1\nbogus = 3\n").unwrap();
    let o = platonet(&["steady", "--config", p]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--bogus"));
}

#[test]
fn verify_output_is_byte_identical_across_runs() {
    let a = platonet(&["verify"]);
    let b = platonet(&["verify"]);
    assert_eq!(a.stdout, b.stdout);
    let text = stdout(&a);
    assert_eq!(text.lines().count(), 11);
    assert!(text.ends_with("checks passed\n"));
    let failing: Vec<&str> = text.lines().filter(|l| l.contains(" FAIL ")).collect();
    assert_eq!(a.status.code(), Some(if failing.is_empty() { 0 } else { 1 }));
    for line in failing {
        let name = line.split_whitespace().nth(1).unwrap();
        assert!(stderr(&a).contains(name));
    }
}

#[test]
fn perturbed_convention_fails_the_analytic_firewall() {
    let ok = platonet(&["verify", "--filter", "analytic-firewall"]);
    assert_eq!(ok.status.code(), Some(0), "{}", stdout(&ok));
    let bad = platonet(&["verify", "--filter", "analytic-firewall", "--perturb", "gamma-c"]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(stdout(&bad).contains("FAIL"));
}

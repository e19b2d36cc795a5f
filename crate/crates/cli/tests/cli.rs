use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_offload-opt"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("UTF-8 output")
}

fn write(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let p = dir.path().join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Two devices at 250 m and 350 m on a server that can hold only part of
/// their work within 5 ms.
const OVERLOAD_PAIR: &str = "\
n_users = 2
total_bandwidth = 800 kHz
downlink_bandwidth = 800 kHz
server_capacity = 350 kHz
t_max = 5 ms

[distances]
0 = 250
1 = 350
";

fn summary(csv: &str, key: &str) -> String {
    csv.lines()
        .find_map(|l| l.strip_prefix(&format!("{key},")))
        .unwrap_or_else(|| panic!("no `{key}` in\n{csv}"))
        .to_owned()
}

#[test]
fn gen_defaults_and_determinism() {
    let a = run(&["gen"]);
    assert!(a.status.success());
    let text = stdout(&a);
    for line in [
        "n_users = 50",
        "server_capacity = 200000000",
        "total_bandwidth = 20000000",
        "t_max = 0.005",
    ] {
        assert!(text.lines().any(|l| l == line), "missing {line}");
    }
    assert_eq!(text.lines().skip_while(|l| *l != "[distances]").count(), 51);
    assert_eq!(run(&["gen"]).stdout, a.stdout);

    let seeded = run(&["gen", "--seed", "7"]);
    assert_eq!(seeded.stdout, run(&["gen", "--seed", "7"]).stdout);
    assert_ne!(seeded.stdout, a.stdout);
}

#[test]
fn gen_writes_to_file() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("scenario.txt");
    assert!(run(&["gen", "--out", s(&out)]).status.success());
    assert_eq!(std::fs::read(&out).unwrap(), run(&["gen"]).stdout);
}

#[test]
fn gen_rejects_bad_config() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "bad.cfg", "n_users = 4\nbogus = 1\n");
    let out = run(&["gen", "--config", s(&cfg)]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("bad.cfg") && err.contains("line 2"), "{err}");
    assert_eq!(
        run(&["gen", "--config", "/nonexistent/offload.cfg"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn solve_defaults_is_underloaded() {
    let dir = TempDir::new().unwrap();
    let scen = write(&dir, "s.txt", &stdout(&run(&["gen"])));
    let out = run(&["solve", s(&scen)]);
    assert!(out.status.success());
    let csv = stdout(&out);
    assert!(csv.starts_with("user_id,distance_m,alpha,rho,psi\n"));
    assert_eq!(summary(&csv, "status"), "underloaded");
    assert_eq!(summary(&csv, "nu").parse::<f64>().unwrap(), 0.0);
    let load: f64 = summary(&csv, "server_load").parse().unwrap();
    let lambda: f64 = summary(&csv, "lambda").parse().unwrap();
    // every offloading device runs at share 1 with gamma = 3.5 us and k = 2.3667 ms
    let expected = lambda * 50.0 * 3.5e-6 / (5e-3 - 5600.0 / 2.4e6 - 80.0 / 2.4e6);
    assert!(
        (load - expected).abs() < 1e-12 * expected,
        "{load} vs {expected}"
    );
}

#[test]
fn solve_far_devices_keep_everything_local() {
    let dir = TempDir::new().unwrap();
    let scen = write(
        &dir,
        "far.txt",
        "n_users = 3\n[distances]\n0 = 700\n1 = 750\n2 = 790\n",
    );
    let csv = stdout(&run(&["solve", s(&scen)]));
    assert_eq!(summary(&csv, "lambda").parse::<f64>().unwrap(), 0.0);
    assert_eq!(
        summary(&csv, "e_sum_opt_j"),
        summary(&csv, "e_sum_baseline_j")
    );
}

#[test]
fn solve_rejects_malformed_file() {
    let dir = TempDir::new().unwrap();
    let scen = write(&dir, "broken.txt", "n_users = 2\n[distances]\n0 = 10\n");
    assert_eq!(run(&["solve", s(&scen)]).status.code(), Some(2));
}

#[test]
fn sweep_grid_shape_and_order() {
    let out = run(&[
        "sweep",
        "--tmax",
        "1ms:20ms:1ms",
        "--bw",
        "0.2,0.4,0.6,0.8,1.0",
    ]);
    assert!(out.status.success());
    let csv = stdout(&out);
    let mut lines = csv.lines();
    assert_eq!(
        lines.next(),
        Some("t_max_s,bandwidth_fraction,n_users,seed,lambda,e_sum_opt_j,e_sum_baseline_j,nu,status,n_dropped")
    );
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 100);
    assert_eq!(rows[0][0], "1.00000000000e-3");
    assert_eq!(rows[0][1], "2.00000000000e-1");
    assert_eq!(rows[19][0], "2.00000000000e-2");
    assert_eq!(rows[20][1], "4.00000000000e-1");
    assert!(rows.iter().all(|r| r.len() == 10));

    let single = stdout(&run(&["sweep", "--tmax", "5ms:5ms:1ms"]));
    assert_eq!(single.lines().count(), 2);
}

#[test]
fn sweep_rejects_empty_range() {
    assert_eq!(
        run(&["sweep", "--tmax", "5ms:1ms:1ms"]).status.code(),
        Some(2)
    );
    assert_eq!(run(&["sweep", "--tmax", "1ms:5ms"]).status.code(), Some(2));
    assert_eq!(
        run(&["sweep", "--tmax", "1ms:5ms:1ms", "--bw", "1.5"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn sweep_is_independent_of_thread_count() {
    let args = ["sweep", "--tmax", "0.5ms:12ms:0.5ms", "--bw", "0.2,1.0"];
    let one = bin()
        .args(args)
        .env("OFFLOAD_OPT_THREADS", "1")
        .output()
        .unwrap();
    let many = bin()
        .args(args)
        .env("OFFLOAD_OPT_THREADS", "8")
        .output()
        .unwrap();
    assert!(one.status.success());
    assert_eq!(one.stdout, many.stdout);
    let bad = bin()
        .args(args)
        .env("OFFLOAD_OPT_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn cutoff_grid_decreases_with_bandwidth() {
    let out = run(&[
        "cutoff",
        "--bw",
        "0.2,0.4,0.6,0.8,1.0",
        "--n",
        "20,40,60,80,100",
    ]);
    assert!(out.status.success());
    let csv = stdout(&out);
    let mut lines = csv.lines();
    assert_eq!(
        lines.next(),
        Some("bandwidth_fraction,n_users,t_c_s,saturated")
    );
    let rows: Vec<(f64, usize, f64)> = lines
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            assert_eq!(f[3], "true");
            (
                f[0].parse().unwrap(),
                f[1].parse().unwrap(),
                f[2].parse().unwrap(),
            )
        })
        .collect();
    assert_eq!(rows.len(), 25);
    for n in [20, 40, 60, 80, 100] {
        let t: Vec<f64> = rows.iter().filter(|r| r.1 == n).map(|r| r.2).collect();
        assert!(t.windows(2).all(|w| w[1] < w[0]), "N = {n}: {t:?}");
    }
    let single = stdout(&run(&[
        "cutoff", "--bw", "0.5", "--n", "30", "--t-end", "20ms",
    ]));
    assert_eq!(single.lines().count(), 2);
}

#[test]
fn verify_overload_pair_against_oracle() {
    let dir = TempDir::new().unwrap();
    let scen = write(&dir, "pair.txt", OVERLOAD_PAIR);
    let solved = stdout(&run(&["solve", s(&scen)]));
    assert_eq!(summary(&solved, "status"), "fully_loaded");

    let out = run(&["verify", s(&scen)]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report = stdout(&out);
    let gap: f64 = summary(&report, "energy_gap_j").parse().unwrap();
    let bound: f64 = summary(&report, "gap_bound_j").parse().unwrap();
    assert!(gap <= bound);
    assert_eq!(summary(&report, "verdict"), "pass");

    let sol = write(&dir, "pair.sol", &solved);
    let path = dir.path().join("report.csv");
    let out = run(&[
        "verify",
        s(&scen),
        "--solution",
        s(&sol),
        "--report",
        s(&path),
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert!(std::fs::read_to_string(&path)
        .unwrap()
        .contains("verdict,pass"));
}

#[test]
fn verify_flags_corrupted_solution() {
    let dir = TempDir::new().unwrap();
    let scen = write(&dir, "pair.txt", OVERLOAD_PAIR);
    let solved = stdout(&run(&["solve", s(&scen)]));
    let mut lines: Vec<String> = solved.lines().map(str::to_owned).collect();
    // push user 0 back to a smaller share but keep everything else
    let fields: Vec<String> = lines[1].split(',').map(str::to_owned).collect();
    let alpha: f64 = fields[2].parse().unwrap();
    lines[1] = format!(
        "{},{},{:e},{},{}",
        fields[0],
        fields[1],
        alpha * 0.9,
        fields[3],
        fields[4]
    );
    let sol = write(&dir, "bad.sol", &(lines.join("\n") + "\n"));
    let out = run(&["verify", s(&scen), "--solution", s(&sol)]);
    assert_eq!(out.status.code(), Some(4));
    assert!(stdout(&out).contains("verdict,fail"));

    let garbage = write(&dir, "garbage.sol", "not a solution\n");
    assert_eq!(
        run(&["verify", s(&scen), "--solution", s(&garbage)])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn verify_large_scenario_is_kkt_only() {
    let dir = TempDir::new().unwrap();
    let scen = write(&dir, "s.txt", &stdout(&run(&["gen"])));
    let out = run(&["verify", s(&scen)]);
    assert_eq!(out.status.code(), Some(0));
    assert!(summary(&stdout(&out), "grid").starts_with("skipped"));
}

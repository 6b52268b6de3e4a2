use std::path::Path;
use std::process::Command;

use ripple_ageing::{ageing_sweep, fit_ap_model, log_frequency_grid, CellParams, SweepOptions};
use ripple_ageing_cli::config::RunConfig;
use ripple_ageing_cli::output::Columns;
use ripple_ageing_cli::{csv_meta, run};

struct Outcome {
    code: i32,
    stdout: String,
    stderr: String,
}

fn cli(args: &[&str]) -> Outcome {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv: Vec<&str> = std::iter::once("ripple-ageing")
        .chain(args.iter().copied())
        .collect();
    let code = run(argv, &mut out, &mut err);
    Outcome {
        code,
        stdout: String::from_utf8(out).unwrap(),
        stderr: String::from_utf8(err).unwrap(),
    }
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn summary_value(text: &str, key: &str) -> f64 {
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key} = ")))
        .unwrap_or_else(|| panic!("no {key} in {text}"))
        .parse()
        .unwrap()
}

fn series_resistance() -> f64 {
    let p = CellParams::default();
    let rct = 8.314462 * 298.15 / (96485.33 * 0.44);
    p.r0 + p.r_sei + rct + p.rw1 + p.rw2
}

#[test]
fn dc_impedance_is_the_series_sum() {
    let o = cli(&["impedance", "--freqs", "0,1000"]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    let cols = Columns::parse(&o.stdout, "stdout").unwrap();
    assert_eq!(cols.get("f_hz").unwrap(), &[0.0, 1000.0]);
    assert!((cols.get("mag_ohm").unwrap()[0] - series_resistance()).abs() < 1e-9);
    assert_eq!(cols.get("highpass").unwrap()[0], 1.0);
    assert_eq!(cols.get("im_ohm").unwrap()[0], 0.0);
}

#[test]
fn empty_grid_gives_a_header_only() {
    let o = cli(&["impedance", "--freqs", ""]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    let data: Vec<&str> = o.stdout.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(data, vec!["f_hz,re_ohm,im_ohm,mag_ohm,phase_deg,highpass"]);
}

#[test]
fn malformed_config_leaves_no_output() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.toml");
    std::fs::write(&config, "[cell]\nr0 = \"fast\"\n").unwrap();
    let out = dir.path().join("z.csv");
    let o = cli(&[
        "impedance",
        "--config",
        path_str(&config),
        "--out",
        path_str(&out),
    ]);
    assert_eq!(o.code, 2);
    assert!(
        o.stderr.contains("bad.toml") && o.stderr.contains("r0"),
        "{}",
        o.stderr
    );
    assert!(!out.exists());
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
}

#[test]
fn failed_run_keeps_the_previous_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("trace.csv");
    std::fs::write(&out, "previous").unwrap();
    let o = cli(&[
        "simulate",
        "--duration",
        "1e-4",
        "--dt",
        "1e-3",
        "--out",
        path_str(&out),
    ]);
    assert_eq!(o.code, 2);
    assert!(o.stderr.contains("--dt"), "{}", o.stderr);
    assert_eq!(std::fs::read_to_string(&out).unwrap(), "previous");
}

#[test]
fn dc_simulation_summary_matches_the_steady_state() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("dc.csv");
    let o = cli(&[
        "simulate",
        "--profile",
        "dc",
        "--i-dc",
        "5",
        "--duration",
        "1",
        "--stride",
        "100000",
        "--out",
        path_str(&out),
    ]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    let vt = 8.314462 * 298.15 / 96485.33;
    let closed = 2.0 * vt * (5.0f64 / 0.88).asinh();
    let eta = summary_value(&o.stdout, "eta_ct_mean_v");
    assert!((eta - closed).abs() < 1e-5, "{eta}");
    assert!((eta - 0.125282).abs() < 1e-5);
    assert_eq!(summary_value(&o.stdout, "samples"), 51.0);
}

#[test]
fn zero_duration_is_a_usage_error() {
    let o = cli(&["simulate", "--duration", "0"]);
    assert_eq!(o.code, 2);
    assert!(o.stderr.contains("--duration"), "{}", o.stderr);
    let o = cli(&["simulate", "--profile", "sine"]);
    assert_eq!(o.code, 2);
    assert!(o.stderr.contains("--frequency"), "{}", o.stderr);
}

#[test]
fn row_count_follows_duration_step_and_stride() {
    let o = cli(&[
        "simulate",
        "--profile",
        "sine",
        "--frequency",
        "1000",
        "--duration",
        "0.02",
        "--stride",
        "10",
    ]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    let dt: f64 = csv_meta(&o.stdout, "dt_s").unwrap().parse().unwrap();
    let rows = o.stdout.lines().filter(|l| !l.starts_with('#')).count() - 1;
    assert_eq!(rows, (0.02 / dt / 10.0).round() as usize + 1);
    assert_eq!(rows, 10_001);
}

#[test]
fn sweep_output_refits_bit_for_bit() {
    let dir = tempfile::tempdir().unwrap();
    let p = CellParams::default();
    let grid = log_frequency_grid(100.0, 1e5, 3).unwrap();
    let curve = ageing_sweep(&grid, 5.0, 5.0, &p, &SweepOptions::default()).unwrap();
    let direct = fit_ap_model(&curve).unwrap();

    for format in ["csv", "json"] {
        let sweep = dir.path().join(format!("sweep.{format}"));
        let o = cli(&[
            "sweep",
            "--f-min",
            "100",
            "--points-per-decade",
            "3",
            "--format",
            format,
            "--out",
            path_str(&sweep),
        ]);
        assert_eq!(o.code, 0, "{}", o.stderr);
        let cols = Columns::parse(&std::fs::read_to_string(&sweep).unwrap(), "sweep").unwrap();
        assert_eq!(cols.get("ap").unwrap(), curve.values().as_slice());

        let o = cli(&["fit-ap", path_str(&sweep), "--format", format]);
        assert_eq!(o.code, 0, "{}", o.stderr);
        let fit = Columns::parse(&o.stdout, "fit").unwrap();
        assert_eq!(fit.get("a").unwrap()[0].to_bits(), direct.model.a.to_bits());
        assert_eq!(
            fit.get("b_hz").unwrap()[0].to_bits(),
            direct.model.b.to_bits()
        );
        assert_eq!(
            fit.get("c_hz2").unwrap()[0].to_bits(),
            direct.model.c.to_bits()
        );
        assert_eq!(
            fit.get("r_squared").unwrap()[0].to_bits(),
            direct.r_squared.to_bits()
        );
    }
}

#[test]
fn outputs_do_not_depend_on_worker_count() {
    let dir = tempfile::tempdir().unwrap();
    let mut files = Vec::new();
    for jobs in ["1", "3"] {
        let out = dir.path().join(format!("sweep-{jobs}.csv"));
        let o = cli(&[
            "sweep",
            "--f-min",
            "1000",
            "--points-per-decade",
            "4",
            "--jobs",
            jobs,
            "--out",
            path_str(&out),
        ]);
        assert_eq!(o.code, 0, "{}", o.stderr);
        files.push(std::fs::read(&out).unwrap());
    }
    assert_eq!(files[0], files[1]);
}

#[test]
fn fit_ap_of_a_flat_curve_is_degenerate() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("flat.csv");
    std::fs::write(&input, "# flat\nf_hz,ap\n1,3\n10,3\n100,3\n1000,3\n").unwrap();
    let o = cli(&["fit-ap", path_str(&input)]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    let fit = Columns::parse(&o.stdout, "fit").unwrap();
    assert_eq!(fit.get("degenerate").unwrap(), &[1.0]);
    let row = o.stdout.lines().last().unwrap();
    assert!(
        row.starts_with("3.0000000000000000e0,0.0000000000000000e0,"),
        "{row}"
    );
    assert!(row.ends_with(",true,true"), "{row}");
}

#[test]
fn identified_parameters_round_trip_into_a_config() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.csv");
    let o = cli(&[
        "simulate",
        "--profile",
        "sine",
        "--frequency",
        "10000",
        "--i-dc",
        "5",
        "--i-ac",
        "5",
        "--duration",
        "2e-3",
        "--out",
        path_str(&trace),
    ]);
    assert_eq!(o.code, 0, "{}", o.stderr);

    let start = dir.path().join("start.toml");
    std::fs::write(&start, "[cell]\nr0 = 0.09\nr_sei = 0.06\n").unwrap();
    let identified = dir.path().join("identified.toml");
    let o = cli(&[
        "fit-circuit",
        path_str(&trace),
        "--config",
        path_str(&start),
        "--free",
        "r0,r_sei",
        "--out",
        path_str(&identified),
    ]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    let text = std::fs::read_to_string(&identified).unwrap();
    assert_eq!(csv_meta(&text, "converged"), Some("true"));
    let config = RunConfig::parse(&text).unwrap();
    let truth = CellParams::default();
    assert!(
        (config.cell.r0 / truth.r0 - 1.0).abs() < 1e-6,
        "{}",
        config.cell.r0
    );
    assert!(
        (config.cell.r_sei / truth.r_sei - 1.0).abs() < 1e-6,
        "{}",
        config.cell.r_sei
    );
    assert_eq!(config.cell.c_dl, truth.c_dl);
}

#[test]
fn unknown_parameter_names_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("t.csv");
    std::fs::write(&trace, "t_s,i_a,v_v\n0,1,2\n1,1,2\n2,1,2\n3,1,2\n4,1,2\n").unwrap();
    let o = cli(&["fit-circuit", path_str(&trace), "--free", "r0,v_ocv"]);
    assert_eq!(o.code, 2);
    assert!(o.stderr.contains("v_ocv"), "{}", o.stderr);
}

#[test]
fn bad_flags_exit_with_usage_code() {
    assert_eq!(cli(&["sweep", "--bogus"]).code, 2);
    assert_eq!(cli(&["teleport"]).code, 2);
    assert_eq!(cli(&["--help"]).code, 0);
}

#[test]
fn binary_reports_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("c.toml");
    std::fs::write(&config, "[sweep]\nf_min = 10.0\nf_max = 1.0\n").unwrap();
    let status = Command::new(env!("CARGO_BIN_EXE_ripple-ageing"))
        .args(["impedance", "--config", path_str(&config)])
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(2));
    let status = Command::new(env!("CARGO_BIN_EXE_ripple-ageing"))
        .args(["impedance", "--freqs", "0"])
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(0));
    assert!(String::from_utf8(status.stdout)
        .unwrap()
        .contains("f_hz,re_ohm"));
}

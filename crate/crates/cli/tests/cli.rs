//! End-to-end tests of the `gio` binary: exit codes, file outputs, the
//! staged quantize/select/explode pipeline, and byte-level determinism.

use std::collections::HashSet;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn gio() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gio"))
}

fn run(args: &[&str]) -> Output {
    gio().args(args).output().expect("binary runs")
}

fn assert_success(out: &Output) {
    assert!(
        out.status.success(),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

/// Deterministic synthetic rows around a handful of cluster centers.
fn synth_rows(n: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut state = seed.wrapping_add(0x9e3779b97f4a7c15);
    let mut next = move || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 53) as f64
    };
    let centers: Vec<Vec<f64>> = (0..6)
        .map(|_| (0..dim).map(|_| next() * 10.0 - 5.0).collect())
        .collect();
    (0..n)
        .map(|i| {
            let c = &centers[i % centers.len()];
            c.iter().map(|&v| v + next() - 0.5).collect()
        })
        .collect()
}

fn write_csv(path: &Path, rows: &[Vec<f64>]) {
    let text: String = rows
        .iter()
        .map(|r| {
            r.iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join(",")
                + "\n"
        })
        .collect();
    fs::write(path, text).unwrap();
}

fn write_tsv(path: &Path, rows: &[Vec<f64>]) {
    let text: String = rows
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let vec_text = r
                .iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join(" ");
            format!("row{i}\tsome payload {i}\t{vec_text}\n")
        })
        .collect();
    fs::write(path, text).unwrap();
}

#[test]
fn help_exits_zero() {
    let out = run(&["select", "--help"]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("--candidates"));
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let out = run(&["select", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn missing_file_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "kl",
        "--target",
        "/nonexistent/x.csv",
        "--reference",
        dir.path().join("d.csv").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn kl_prints_the_hand_value() {
    let dir = tempfile::tempdir().unwrap();
    let x = dir.path().join("x.csv");
    let d = dir.path().join("d.csv");
    fs::write(&x, "0\n1\n").unwrap();
    fs::write(&d, "0.5\n").unwrap();
    let out = run(&[
        "kl",
        "--target",
        x.to_str().unwrap(),
        "--reference",
        d.to_str().unwrap(),
        "--l",
        "1",
    ]);
    assert_success(&out);
    let value: f64 = String::from_utf8_lossy(&out.stdout).trim().parse().unwrap();
    assert!((value - (-std::f64::consts::LN_2)).abs() < 1e-9);

    let out = run(&[
        "kl",
        "--target",
        x.to_str().unwrap(),
        "--reference",
        d.to_str().unwrap(),
        "--l",
        "1",
        "--single-k",
        "1",
    ]);
    assert_success(&out);
    let single: f64 = String::from_utf8_lossy(&out.stdout).trim().parse().unwrap();
    assert!((single - value).abs() < 1e-12);
}

#[test]
fn quantize_writes_all_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("data.csv");
    write_csv(&input, &synth_rows(300, 4, 7));
    let out_dir = dir.path().join("quant");
    let out = run(&[
        "quantize",
        "--input",
        input.to_str().unwrap(),
        "--k",
        "12",
        "--seed",
        "3",
        "--out-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert_success(&out);
    let centroids = fs::read_to_string(out_dir.join("centroids.csv")).unwrap();
    assert_eq!(centroids.lines().count(), 12);
    let assignment = fs::read_to_string(out_dir.join("assignment.txt")).unwrap();
    assert_eq!(assignment.lines().count(), 300);
    assert!(assignment.lines().all(|l| l.parse::<usize>().unwrap() < 12));
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("quantize.json")).unwrap()).unwrap();
    assert_eq!(summary["k"], 12);
    assert_eq!(summary["seed"], 3);
    assert!(summary["inertia"].as_f64().unwrap() >= 0.0);
    assert!(summary["iterations"].as_u64().unwrap() >= 1);
}

/// Full pipeline on 10k synthetic tabular rows: quantize both sides, select
/// under a data-size cap, explode back to verbatim rows.
#[test]
fn select_end_to_end_preserves_rows_verbatim() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("target.tsv");
    let candidates = dir.path().join("candidates.tsv");
    write_tsv(&target, &synth_rows(2000, 8, 1));
    write_tsv(&candidates, &synth_rows(10_000, 8, 2));
    let out_dir = dir.path().join("sel");
    let out = run(&[
        "select",
        "--target",
        target.to_str().unwrap(),
        "--candidates",
        candidates.to_str().unwrap(),
        "--format",
        "tabular-tsv",
        "--out-dir",
        out_dir.to_str().unwrap(),
        "--k",
        "100",
        "--stop",
        "data_size",
        "--max-data-fraction",
        "0.2",
        "--v-init",
        "mean",
        "--uniform-normalize",
        "false",
        "--uniform-low",
        "-6",
        "--uniform-high",
        "6",
        "--seed",
        "11",
    ]);
    assert_success(&out);

    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["termination"], "data_size");
    assert_eq!(report["selected"].as_array().unwrap().len(), 20);

    let input_lines: HashSet<String> = fs::read_to_string(&candidates)
        .unwrap()
        .lines()
        .map(str::to_string)
        .collect();
    let rows = fs::read_to_string(out_dir.join("selected_rows.tsv")).unwrap();
    let emitted: Vec<&str> = rows.lines().collect();
    assert_eq!(
        emitted.len() as u64,
        report["selected_rows"].as_u64().unwrap()
    );
    assert!(!emitted.is_empty());
    for line in &emitted {
        assert!(input_lines.contains(*line), "row not verbatim: {line}");
    }

    let curve = fs::read_to_string(out_dir.join("kl_curve.csv")).unwrap();
    assert!(curve.starts_with("iteration,kl\n"));
    assert_eq!(curve.lines().count() - 1, 20);
}

/// The staged pipeline (quantize + quantize + select over centroids +
/// explode) recovers rows for the same clusters the report names.
#[test]
fn staged_pipeline_matches_report() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("target.csv");
    let candidates = dir.path().join("candidates.csv");
    write_csv(&target, &synth_rows(1500, 6, 3));
    write_csv(&candidates, &synth_rows(6000, 6, 4));

    let qx = dir.path().join("qx");
    let qg = dir.path().join("qg");
    for (input, out_dir, seed) in [(&target, &qx, "5"), (&candidates, &qg, "6")] {
        let out = run(&[
            "quantize",
            "--input",
            input.to_str().unwrap(),
            "--k",
            "60",
            "--seed",
            seed,
            "--out-dir",
            out_dir.to_str().unwrap(),
        ]);
        assert_success(&out);
    }

    let sel = dir.path().join("sel");
    let out = run(&[
        "select",
        "--target-centroids",
        qx.join("centroids.csv").to_str().unwrap(),
        "--candidates-centroids",
        qg.join("centroids.csv").to_str().unwrap(),
        "--out-dir",
        sel.to_str().unwrap(),
        "--stop",
        "data_size",
        "--max-data-fraction",
        "0.25",
        "--v-init",
        "mean",
        "--uniform-normalize",
        "false",
        "--uniform-low",
        "-6",
        "--uniform-high",
        "6",
        "--seed",
        "12",
    ]);
    assert_success(&out);
    let indices_text = fs::read_to_string(sel.join("selected_indices.txt")).unwrap();
    let picked: Vec<usize> = indices_text
        .lines()
        .map(|l| l.parse().unwrap())
        .collect();
    assert_eq!(picked.len(), 15);

    let exploded = dir.path().join("rows.csv");
    let out = run(&[
        "explode",
        "--report",
        sel.join("report.json").to_str().unwrap(),
        "--assignment",
        qg.join("assignment.txt").to_str().unwrap(),
        "--source",
        candidates.to_str().unwrap(),
        "--out",
        exploded.to_str().unwrap(),
    ]);
    assert_success(&out);

    let assignment: Vec<usize> = fs::read_to_string(qg.join("assignment.txt"))
        .unwrap()
        .lines()
        .map(|l| l.parse().unwrap())
        .collect();
    let chosen: HashSet<usize> = picked.iter().copied().collect();
    let expected = assignment.iter().filter(|a| chosen.contains(a)).count();
    let emitted = fs::read_to_string(&exploded).unwrap().lines().count();
    assert_eq!(emitted, expected);
}

#[test]
fn select_is_byte_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("target.csv");
    let candidates = dir.path().join("candidates.csv");
    write_csv(&target, &synth_rows(800, 4, 9));
    write_csv(&candidates, &synth_rows(1600, 4, 10));

    let run_once = |out_dir: &Path| {
        let out = run(&[
            "select",
            "--target",
            target.to_str().unwrap(),
            "--candidates",
            candidates.to_str().unwrap(),
            "--out-dir",
            out_dir.to_str().unwrap(),
            "--k",
            "40",
            "--v-init",
            "mean",
            "--uniform-normalize",
            "false",
            "--uniform-low",
            "-6",
            "--uniform-high",
            "6",
            "--seed",
            "21",
            "--threads",
            "2",
        ]);
        assert_success(&out);
    };
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    run_once(&a);
    run_once(&b);

    let rows_a = fs::read(a.join("selected_rows.csv")).unwrap();
    let rows_b = fs::read(b.join("selected_rows.csv")).unwrap();
    assert_eq!(rows_a, rows_b, "selected rows files must be byte-identical");

    let strip = |p: &Path| {
        let mut v: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap();
        v.as_object_mut().unwrap().remove("timings");
        serde_json::to_string(&v).unwrap()
    };
    assert_eq!(
        strip(&a.join("report.json")),
        strip(&b.join("report.json")),
        "reports must match modulo timings"
    );
}

#[test]
fn single_thread_matches_parallel() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("target.csv");
    let candidates = dir.path().join("candidates.csv");
    write_csv(&target, &synth_rows(400, 4, 13));
    write_csv(&candidates, &synth_rows(800, 4, 14));
    let run_with = |out_dir: &Path, threads: &str| {
        let out = run(&[
            "select",
            "--target",
            target.to_str().unwrap(),
            "--candidates",
            candidates.to_str().unwrap(),
            "--out-dir",
            out_dir.to_str().unwrap(),
            "--k",
            "30",
            "--v-init",
            "mean",
            "--uniform-normalize",
            "false",
            "--uniform-low",
            "-6",
            "--uniform-high",
            "6",
            "--seed",
            "4",
            "--threads",
            threads,
        ]);
        assert_success(&out);
    };
    let one = dir.path().join("one");
    let many = dir.path().join("many");
    run_with(&one, "1");
    run_with(&many, "2");
    assert_eq!(
        fs::read(one.join("selected_rows.csv")).unwrap(),
        fs::read(many.join("selected_rows.csv")).unwrap()
    );
}

#[test]
fn config_file_applies_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("target.csv");
    let candidates = dir.path().join("candidates.csv");
    write_csv(&target, &synth_rows(400, 4, 15));
    write_csv(&candidates, &synth_rows(800, 4, 16));
    let config = dir.path().join("run.toml");
    fs::write(
        &config,
        "k = 25\nstop = \"data_size\"\nmax_data_fraction = 0.2\nv_init = \"mean\"\nuniform_normalize = false\nuniform_low = -6.0\nuniform_high = 6.0\nseed = 33\n",
    )
    .unwrap();

    let out_dir = dir.path().join("out");
    let out = run(&[
        "select",
        "--target",
        target.to_str().unwrap(),
        "--candidates",
        candidates.to_str().unwrap(),
        "--out-dir",
        out_dir.to_str().unwrap(),
        "--config",
        config.to_str().unwrap(),
        "--max-data-fraction",
        "0.4",
    ]);
    assert_success(&out);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("report.json")).unwrap()).unwrap();
    // k and seed from the file; the fraction overridden by the flag.
    assert_eq!(report["config"]["k"], 25);
    assert_eq!(report["config"]["seed"], 33);
    assert_eq!(report["config"]["stop"]["max_data_fraction"], 0.4);
    assert_eq!(report["selected"].as_array().unwrap().len(), 10);
}

#[test]
fn subset_and_file_inits_run_the_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("target.csv");
    let candidates = dir.path().join("candidates.csv");
    let existing = dir.path().join("existing.csv");
    write_csv(&target, &synth_rows(600, 4, 23));
    write_csv(&candidates, &synth_rows(1200, 4, 24));
    write_csv(&existing, &synth_rows(80, 4, 25));

    let base = |out_dir: &Path, init: &str| {
        run(&[
            "select",
            "--target",
            target.to_str().unwrap(),
            "--candidates",
            candidates.to_str().unwrap(),
            "--out-dir",
            out_dir.to_str().unwrap(),
            "--k",
            "40",
            "--stop",
            "data_size",
            "--max-data-fraction",
            "0.5",
            "--v-init",
            "mean",
            "--init",
            init,
            "--seed",
            "2",
        ])
    };

    let sub = dir.path().join("sub");
    let out = base(&sub, "subset=0.25");
    assert_success(&out);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(sub.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["config"]["init"]["kind"], "subset");
    // 10 pre-selected clusters plus 10 acquisitions reach the 0.5 cap.
    assert_eq!(report["selected"].as_array().unwrap().len(), 20);
    assert_eq!(report["acquired"].as_array().unwrap().len(), 10);

    let fil = dir.path().join("fil");
    let out = base(&fil, &format!("file={}", existing.display()));
    assert_success(&out);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(fil.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["config"]["init"]["kind"], "file");
    // The existing set only participates in estimation; every reported
    // selection is an acquired candidate cluster.
    assert_eq!(
        report["selected"].as_array().unwrap().len(),
        report["acquired"].as_array().unwrap().len()
    );
    assert_eq!(report["selected"].as_array().unwrap().len(), 20);
}

#[test]
fn min_kl_criterion_requires_the_flag() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("target.csv");
    let candidates = dir.path().join("candidates.csv");
    write_csv(&target, &synth_rows(100, 4, 17));
    write_csv(&candidates, &synth_rows(100, 4, 18));
    let out = run(&[
        "select",
        "--target",
        target.to_str().unwrap(),
        "--candidates",
        candidates.to_str().unwrap(),
        "--out-dir",
        dir.path().join("out").to_str().unwrap(),
        "--k",
        "10",
        "--stop",
        "min_kl",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("min-kl"));
}

#[test]
fn baseline_random_and_similarity_emit_rows() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("target.csv");
    let candidates = dir.path().join("candidates.csv");
    write_csv(&target, &synth_rows(50, 4, 19));
    write_csv(&candidates, &synth_rows(200, 4, 20));

    let rnd = dir.path().join("rnd");
    let out = run(&[
        "baseline",
        "--method",
        "random",
        "--candidates",
        candidates.to_str().unwrap(),
        "--out-dir",
        rnd.to_str().unwrap(),
        "--target-size",
        "30",
        "--seed",
        "1",
    ]);
    assert_success(&out);
    assert_eq!(
        fs::read_to_string(rnd.join("selected_rows.csv")).unwrap().lines().count(),
        30
    );

    let sim = dir.path().join("sim");
    let out = run(&[
        "baseline",
        "--method",
        "similarity",
        "--target",
        target.to_str().unwrap(),
        "--candidates",
        candidates.to_str().unwrap(),
        "--out-dir",
        sim.to_str().unwrap(),
        "--target-size",
        "30",
    ]);
    assert_success(&out);
    assert_eq!(
        fs::read_to_string(sim.join("selected_rows.csv")).unwrap().lines().count(),
        30
    );

    let naive = dir.path().join("naive");
    let out = run(&[
        "baseline",
        "--method",
        "naive",
        "--target",
        target.to_str().unwrap(),
        "--candidates",
        candidates.to_str().unwrap(),
        "--out-dir",
        naive.to_str().unwrap(),
        "--iterations",
        "5",
    ]);
    assert_success(&out);
    assert_eq!(
        fs::read_to_string(naive.join("kl_curve.csv")).unwrap().lines().count(),
        6
    );
}

#[test]
fn check_subcommand_reports_and_exits_zero_on_pass() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "check",
        "--name",
        "quantization_consistency",
        "--seed",
        "2",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_success(&out);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("quantization_consistency: PASS"));
    assert!(dir
        .path()
        .join("quantization_consistency")
        .join("result.json")
        .exists());

    let out = run(&["check", "--name", "no_such_check"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn bench_writes_a_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out_file = dir.path().join("bench.csv");
    let out = run(&[
        "bench",
        "--sizes",
        "200,400",
        "--iterations",
        "5",
        "--out",
        out_file.to_str().unwrap(),
    ]);
    assert_success(&out);
    let text = fs::read_to_string(&out_file).unwrap();
    assert!(text.starts_with("method,g_size,iterations,seconds\n"));
    assert_eq!(text.lines().count(), 5);
}

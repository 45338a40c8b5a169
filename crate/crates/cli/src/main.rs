//! `gio` — divergence-minimizing data selection over vector datasets.
//!
//! Subcommands: `quantize` (k-means a dataset), `select` (the full
//! quantize-select-explode pipeline), `explode` (recover rows for chosen
//! clusters), `kl` (divergence between two files), `baseline` (reference
//! selection methods), `check` (analytic sanity checks), `bench` (timing
//! table).
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 failed check.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;
use std::time::Instant;

use clap::{ArgAction, Args, Parser, Subcommand};

use gio_core::baselines::{naive_hill_climb, random_select, similarity_search_select};
use gio_core::checks::{run_check, CheckName};
use gio_core::config::{GioConfig, InitSpec};
use gio_core::dataset::{load_dataset, save_dataset, DataFormat, VectorDataset};
use gio_core::error::{GioError, Result};
use gio_core::optimizer::{ScaleMode, VInitMode};
use gio_core::pipeline::{run_select, selected_rows_with_multiplicity};
use gio_core::quantizer::kmeans;
use gio_core::report::SelectionReport;
use gio_core::rng::SeededRng;
use gio_core::selector::{run_gio, SelectionInit, StopKind, StopReason};

#[derive(Parser)]
#[command(name = "gio", version, about = "Select the subset of a candidate vector set that minimizes kNN-estimated KL divergence from a target set")]
struct Cli {
    /// Cap worker parallelism; results are identical for any thread count.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// K-means a dataset and write centroids, assignment and a summary.
    Quantize(QuantizeArgs),
    /// Quantize target and candidates, run the selection loop, explode.
    Select(SelectArgs),
    /// Recover source rows for selected clusters.
    Explode(ExplodeArgs),
    /// Print the kNN-estimated KL divergence between two datasets.
    Kl(KlArgs),
    /// Reference selection methods over raw (unquantized) datasets.
    Baseline(BaselineArgs),
    /// Run an analytic sanity check; exits 3 if its predicate fails.
    Check(CheckArgs),
    /// Time the exhaustive baseline against the descent shortcut.
    Bench(BenchArgs),
}

#[derive(Args)]
struct QuantizeArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value = "vectors-csv")]
    format: String,
    #[arg(long)]
    k: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = gio_core::quantizer::KMEANS_MAX_ITERS)]
    max_iters: usize,
    #[arg(long, default_value_t = gio_core::quantizer::KMEANS_TOL)]
    tol: f64,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct SelectArgs {
    /// Target dataset (raw rows; quantized internally).
    #[arg(long, required_unless_present = "target_centroids")]
    target: Option<PathBuf>,
    /// Candidate dataset (raw rows; quantized internally).
    #[arg(long, required_unless_present = "candidates_centroids")]
    candidates: Option<PathBuf>,
    /// Pre-quantized target centroids (vectors-csv); skips quantization.
    #[arg(long, conflicts_with = "target")]
    target_centroids: Option<PathBuf>,
    /// Pre-quantized candidate centroids (vectors-csv); skips quantization.
    #[arg(long, conflicts_with = "candidates", requires = "target_centroids")]
    candidates_centroids: Option<PathBuf>,
    #[arg(long, default_value = "vectors-csv")]
    format: String,
    #[arg(long)]
    out_dir: PathBuf,
    /// TOML key=value file of the knobs below; explicit flags win.
    #[arg(long)]
    config: Option<PathBuf>,

    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    k_target: Option<usize>,
    #[arg(long)]
    k_candidates: Option<usize>,
    #[arg(long)]
    l: Option<usize>,
    #[arg(long)]
    max_iter: Option<usize>,
    /// increase | min_difference | min_kl | data_size | seq_increase | max_resets
    #[arg(long)]
    stop: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    min_difference: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    min_kl: Option<f64>,
    #[arg(long)]
    max_data_fraction: Option<f64>,
    #[arg(long)]
    max_seq_increases: Option<usize>,
    #[arg(long, action = ArgAction::SetTrue)]
    resets_allowed: bool,
    #[arg(long)]
    max_resets: Option<usize>,
    /// none | uniform | subset=F | file=PATH
    #[arg(long)]
    init: Option<String>,
    #[arg(long)]
    uniform_size: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    uniform_low: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    uniform_high: Option<f64>,
    /// true | false (defaults to true, for normalized embedding spaces)
    #[arg(long)]
    uniform_normalize: Option<bool>,
    /// mean | prev_opt | jump
    #[arg(long)]
    v_init: Option<String>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    grad_desc_iter: Option<usize>,
    /// auto | none
    #[arg(long)]
    scale: Option<String>,
    #[arg(long)]
    restart_prob: Option<f64>,
    #[arg(long, action = ArgAction::SetTrue)]
    discard_nearest: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    kmeans_max_iters: Option<usize>,
    #[arg(long)]
    kmeans_tol: Option<f64>,
}

#[derive(Args)]
struct ExplodeArgs {
    /// report.json from `select` (its `selected` array drives explosion).
    #[arg(long, conflicts_with = "indices")]
    report: Option<PathBuf>,
    /// Plain file of selected cluster indices, one per line.
    #[arg(long)]
    indices: Option<PathBuf>,
    /// assignment.txt from `quantize`: one cluster index per source row.
    #[arg(long)]
    assignment: PathBuf,
    /// The dataset that was quantized; rows are reproduced verbatim.
    #[arg(long)]
    source: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct KlArgs {
    #[arg(long)]
    target: PathBuf,
    #[arg(long)]
    reference: PathBuf,
    #[arg(long, default_value = "vectors-csv")]
    format: String,
    #[arg(long, default_value_t = 5)]
    l: usize,
    /// Evaluate the single-order estimator at this k instead of the
    /// rank-averaged one.
    #[arg(long)]
    single_k: Option<usize>,
    #[arg(long, action = ArgAction::SetTrue)]
    discard_nearest: bool,
}

#[derive(Args)]
struct BaselineArgs {
    /// naive | similarity | random
    #[arg(long)]
    method: String,
    /// Required for naive and similarity.
    #[arg(long)]
    target: Option<PathBuf>,
    #[arg(long)]
    candidates: PathBuf,
    #[arg(long, default_value = "vectors-csv")]
    format: String,
    #[arg(long)]
    out_dir: PathBuf,
    /// Selection size for similarity and random.
    #[arg(long)]
    target_size: Option<usize>,
    /// Iteration count for naive.
    #[arg(long, default_value_t = 100)]
    iterations: usize,
    #[arg(long, default_value_t = 5)]
    l: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct CheckArgs {
    /// self_consistency | negative_consistency | quantization_consistency |
    /// derivative_speedup | circle_vs_similarity | uniform_smoothing
    #[arg(long)]
    name: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, action = ArgAction::SetTrue)]
    fast: bool,
    #[arg(long, default_value = "./check_out")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    /// Candidate-set sizes to time.
    #[arg(long, value_delimiter = ',', default_values_t = vec![2000usize, 8000])]
    sizes: Vec<usize>,
    #[arg(long, default_value_t = 100)]
    iterations: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "bench.csv")]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            use clap::error::ErrorKind;
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    if let Some(n) = cli.threads {
        if rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .is_err()
        {
            eprintln!("error: thread pool already initialized");
            return ExitCode::from(1);
        }
    }
    let outcome = match cli.command {
        Command::Quantize(args) => cmd_quantize(args),
        Command::Select(args) => cmd_select(args),
        Command::Explode(args) => cmd_explode(args),
        Command::Kl(args) => cmd_kl(args),
        Command::Baseline(args) => cmd_baseline(args),
        Command::Check(args) => cmd_check(args),
        Command::Bench(args) => cmd_bench(args),
    };
    match outcome {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            let code = match err {
                GioError::InvalidConfig(_) => 1,
                _ => 2,
            };
            ExitCode::from(code)
        }
    }
}

fn parse_format(s: &str) -> Result<DataFormat> {
    DataFormat::from_str(s)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|source| GioError::Io {
                path: parent.to_path_buf(),
                source,
            })?;
        }
    }
    fs::write(path, text).map_err(|source| GioError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| GioError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Copy the source rows named by `rows` (with repetition) verbatim.
/// Row indices count non-blank lines, matching the dataset loader.
fn emit_rows_verbatim(source: &Path, rows: &[usize], out: &Path) -> Result<()> {
    let text = read_text(source)?;
    let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
    let mut buf = String::new();
    for &r in rows {
        let line = lines.get(r).ok_or(GioError::ClusterIndexOutOfRange {
            index: r,
            k: lines.len(),
        })?;
        buf.push_str(line);
        buf.push('\n');
    }
    write_text(out, &buf)
}

fn kl_curve_csv(report: &SelectionReport) -> String {
    let mut s = String::from("iteration,kl\n");
    for (i, kl) in report.kl_history.iter().enumerate() {
        s.push_str(&format!("{},{kl}\n", i + 1));
    }
    s
}

fn cmd_quantize(args: QuantizeArgs) -> Result<ExitCode> {
    let format = parse_format(&args.format)?;
    let ds = load_dataset(&args.input, format)?;
    let mut rng = SeededRng::new(args.seed).child("kmeans");
    let model = kmeans(&ds, args.k, &mut rng, args.max_iters, args.tol)?;

    fs::create_dir_all(&args.out_dir).map_err(|source| GioError::Io {
        path: args.out_dir.clone(),
        source,
    })?;
    save_dataset(
        &model.centroids,
        &args.out_dir.join("centroids.csv"),
        DataFormat::VectorsCsv,
    )?;
    let assignment: String = model
        .assignment
        .iter()
        .map(|a| format!("{a}\n"))
        .collect();
    write_text(&args.out_dir.join("assignment.txt"), &assignment)?;
    let summary = serde_json::json!({
        "k": model.k(),
        "inertia": model.inertia,
        "iterations": model.iterations,
        "seed": args.seed,
    });
    write_text(
        &args.out_dir.join("quantize.json"),
        &serde_json::to_string_pretty(&summary).unwrap(),
    )?;
    println!(
        "quantized {} rows into {} clusters (inertia {:.6}, {} iterations)",
        model.source_count,
        model.k(),
        model.inertia,
        model.iterations
    );
    Ok(ExitCode::SUCCESS)
}

/// Fold the TOML config file and the command-line flags into a `GioConfig`,
/// flags taking precedence.
fn build_config(args: &SelectArgs) -> Result<GioConfig> {
    let mut cfg = GioConfig::default();
    let mut min_kl_given = args.min_kl.is_some();

    if let Some(path) = &args.config {
        let table: toml::Table = read_text(path)?
            .parse()
            .map_err(|e| GioError::InvalidConfig(format!("{}: {e}", path.display())))?;
        min_kl_given |= table.contains_key("min_kl");
        apply_toml(&mut cfg, &table)?;
    }

    if let Some(v) = args.k {
        cfg.k = v;
    }
    if args.k_target.is_some() {
        cfg.k_target = args.k_target;
    }
    if args.k_candidates.is_some() {
        cfg.k_candidates = args.k_candidates;
    }
    if let Some(v) = args.l {
        cfg.l = v;
    }
    if let Some(v) = args.max_iter {
        cfg.max_iter = v;
    }
    if let Some(s) = &args.stop {
        cfg.stop.kind = parse_stop_kind(s)?;
    }
    if let Some(v) = args.min_difference {
        cfg.stop.min_difference = v;
    }
    if let Some(v) = args.min_kl {
        cfg.stop.min_kl = v;
    }
    if let Some(v) = args.max_data_fraction {
        cfg.stop.max_data_fraction = v;
    }
    if let Some(v) = args.max_seq_increases {
        cfg.stop.max_sequential_increases = v;
    }
    if args.resets_allowed {
        cfg.stop.resets_allowed = true;
    }
    if let Some(v) = args.max_resets {
        cfg.stop.max_resets = v;
    }
    if let Some(s) = &args.init {
        let parsed = InitSpec::from_str(s)?;
        cfg.init.kind = parsed.kind;
        if parsed.file.is_some() {
            cfg.init.file = parsed.file;
        }
        cfg.init.subset_fraction = parsed.subset_fraction;
    }
    if let Some(v) = args.uniform_size {
        cfg.init.uniform.size = v;
    }
    if let Some(v) = args.uniform_low {
        cfg.init.uniform.low = v;
    }
    if let Some(v) = args.uniform_high {
        cfg.init.uniform.high = v;
    }
    if let Some(v) = args.uniform_normalize {
        cfg.init.uniform.normalize = v;
    }
    if let Some(s) = &args.v_init {
        cfg.v_init = VInitMode::from_str(s)?;
    }
    if let Some(v) = args.lr {
        cfg.lr = v;
    }
    if let Some(v) = args.grad_desc_iter {
        cfg.grad_desc_iter = v;
    }
    if let Some(s) = &args.scale {
        cfg.scale = ScaleMode::from_str(s)?;
    }
    if let Some(v) = args.restart_prob {
        cfg.restart_prob = v;
    }
    if args.discard_nearest {
        cfg.discard_nearest = true;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = args.kmeans_max_iters {
        cfg.kmeans_max_iters = v;
    }
    if let Some(v) = args.kmeans_tol {
        cfg.kmeans_tol = v;
    }

    // The min_kl criterion has no sensible implicit floor.
    if cfg.stop.kind == StopKind::MinKl && !min_kl_given {
        return Err(GioError::InvalidConfig(
            "stop criterion min_kl requires --min-kl".into(),
        ));
    }
    cfg.validate()?;
    Ok(cfg)
}

fn parse_stop_kind(s: &str) -> Result<StopKind> {
    Ok(match s {
        "increase" => StopKind::Increase,
        "min_difference" => StopKind::MinDifference,
        "min_kl" => StopKind::MinKl,
        "data_size" => StopKind::DataSize,
        "seq_increase" => StopKind::SequentialIncreaseTolerance,
        "max_resets" => StopKind::MaxResets,
        other => {
            return Err(GioError::InvalidConfig(format!(
                "unknown stop criterion {other:?}"
            )))
        }
    })
}

fn apply_toml(cfg: &mut GioConfig, table: &toml::Table) -> Result<()> {
    let bad = |key: &str| GioError::InvalidConfig(format!("config key {key:?} has a bad value"));
    for (key, value) in table {
        match key.as_str() {
            "seed" => cfg.seed = value.as_integer().ok_or_else(|| bad(key))? as u64,
            "k" => cfg.k = value.as_integer().ok_or_else(|| bad(key))? as usize,
            "k_target" => cfg.k_target = Some(value.as_integer().ok_or_else(|| bad(key))? as usize),
            "k_candidates" => {
                cfg.k_candidates = Some(value.as_integer().ok_or_else(|| bad(key))? as usize)
            }
            "l" => cfg.l = value.as_integer().ok_or_else(|| bad(key))? as usize,
            "max_iter" => cfg.max_iter = value.as_integer().ok_or_else(|| bad(key))? as usize,
            "stop" => cfg.stop.kind = parse_stop_kind(value.as_str().ok_or_else(|| bad(key))?)?,
            "min_difference" => {
                cfg.stop.min_difference = toml_f64(value).ok_or_else(|| bad(key))?
            }
            "min_kl" => cfg.stop.min_kl = toml_f64(value).ok_or_else(|| bad(key))?,
            "max_data_fraction" => {
                cfg.stop.max_data_fraction = toml_f64(value).ok_or_else(|| bad(key))?
            }
            "max_seq_increases" => {
                cfg.stop.max_sequential_increases =
                    value.as_integer().ok_or_else(|| bad(key))? as usize
            }
            "resets_allowed" => {
                cfg.stop.resets_allowed = value.as_bool().ok_or_else(|| bad(key))?
            }
            "max_resets" => {
                cfg.stop.max_resets = value.as_integer().ok_or_else(|| bad(key))? as usize
            }
            "init" => {
                let parsed = InitSpec::from_str(value.as_str().ok_or_else(|| bad(key))?)?;
                cfg.init.kind = parsed.kind;
                if parsed.file.is_some() {
                    cfg.init.file = parsed.file;
                }
                cfg.init.subset_fraction = parsed.subset_fraction;
            }
            "uniform_size" => {
                cfg.init.uniform.size = value.as_integer().ok_or_else(|| bad(key))? as usize
            }
            "uniform_low" => cfg.init.uniform.low = toml_f64(value).ok_or_else(|| bad(key))?,
            "uniform_high" => cfg.init.uniform.high = toml_f64(value).ok_or_else(|| bad(key))?,
            "uniform_normalize" => {
                cfg.init.uniform.normalize = value.as_bool().ok_or_else(|| bad(key))?
            }
            "v_init" => cfg.v_init = VInitMode::from_str(value.as_str().ok_or_else(|| bad(key))?)?,
            "lr" => cfg.lr = toml_f64(value).ok_or_else(|| bad(key))?,
            "grad_desc_iter" => {
                cfg.grad_desc_iter = value.as_integer().ok_or_else(|| bad(key))? as usize
            }
            "scale" => cfg.scale = ScaleMode::from_str(value.as_str().ok_or_else(|| bad(key))?)?,
            "restart_prob" => cfg.restart_prob = toml_f64(value).ok_or_else(|| bad(key))?,
            "discard_nearest" => {
                cfg.discard_nearest = value.as_bool().ok_or_else(|| bad(key))?
            }
            "kmeans_max_iters" => {
                cfg.kmeans_max_iters = value.as_integer().ok_or_else(|| bad(key))? as usize
            }
            "kmeans_tol" => cfg.kmeans_tol = toml_f64(value).ok_or_else(|| bad(key))?,
            other => {
                return Err(GioError::InvalidConfig(format!(
                    "unknown config key {other:?}"
                )))
            }
        }
    }
    Ok(())
}

fn toml_f64(value: &toml::Value) -> Option<f64> {
    value.as_float().or_else(|| value.as_integer().map(|i| i as f64))
}

fn cmd_select(args: SelectArgs) -> Result<ExitCode> {
    let cfg = build_config(&args)?;
    let format = parse_format(&args.format)?;
    fs::create_dir_all(&args.out_dir).map_err(|source| GioError::Io {
        path: args.out_dir.clone(),
        source,
    })?;

    if let (Some(tc), Some(gc)) = (&args.target_centroids, &args.candidates_centroids) {
        // Centroid mode: selection over pre-quantized sets; rows are
        // recovered separately with `explode`.
        let x_c = load_dataset(tc, DataFormat::VectorsCsv)?;
        let g_c = load_dataset(gc, DataFormat::VectorsCsv)?;
        let root = SeededRng::new(cfg.seed);
        let init = gio_core::pipeline::resolve_init(&cfg, &root)?;
        let report = run_gio(&x_c, &g_c, init, &cfg)?;
        let indices: String = report.selected.iter().map(|i| format!("{i}\n")).collect();
        write_text(&args.out_dir.join("selected_indices.txt"), &indices)?;
        write_text(&args.out_dir.join("kl_curve.csv"), &kl_curve_csv(&report))?;
        write_text(&args.out_dir.join("report.json"), &report.to_json())?;
        println!(
            "selected {} centroids in {} iterations ({:?})",
            report.selected.len(),
            report.iterations,
            report.termination
        );
        return Ok(ExitCode::SUCCESS);
    }

    let target_path = args.target.as_ref().expect("clap enforces target");
    let candidates_path = args.candidates.as_ref().expect("clap enforces candidates");
    let target = load_dataset(target_path, format)?;
    let candidates = load_dataset(candidates_path, format)?;
    let outcome = run_select(&target, &candidates, &cfg)?;

    let rows_name = match format {
        DataFormat::VectorsCsv => "selected_rows.csv",
        DataFormat::TabularTsv => "selected_rows.tsv",
    };
    emit_rows_verbatim(
        candidates_path,
        &outcome.selected_rows,
        &args.out_dir.join(rows_name),
    )?;
    write_text(
        &args.out_dir.join("kl_curve.csv"),
        &kl_curve_csv(&outcome.report),
    )?;
    write_text(&args.out_dir.join("report.json"), &outcome.report.to_json())?;
    println!(
        "selected {} of {} clusters -> {} rows in {} iterations ({:?})",
        outcome.report.selected.len(),
        outcome.candidate_model.k(),
        outcome.selected_rows.len(),
        outcome.report.iterations,
        outcome.report.termination
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_explode(args: ExplodeArgs) -> Result<ExitCode> {
    let selected: Vec<usize> = if let Some(report_path) = &args.report {
        let report = SelectionReport::from_json(&read_text(report_path)?)
            .map_err(|e| GioError::InvalidConfig(format!("{}: {e}", report_path.display())))?;
        report.selected
    } else if let Some(indices_path) = &args.indices {
        read_text(indices_path)?
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                l.trim().parse().map_err(|_| GioError::InvalidConfig(
                    format!("bad cluster index {l:?} in {}", indices_path.display()),
                ))
            })
            .collect::<Result<_>>()?
    } else {
        return Err(GioError::InvalidConfig(
            "explode needs --report or --indices".into(),
        ));
    };

    let assignment: Vec<usize> = read_text(&args.assignment)?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            l.trim().parse().map_err(|_| {
                GioError::InvalidConfig(format!("bad assignment entry {l:?}"))
            })
        })
        .collect::<Result<_>>()?;
    let k = assignment.iter().copied().max().map_or(0, |m| m + 1);
    let rows = selected_rows_with_multiplicity(&selected, &assignment, k)?;
    emit_rows_verbatim(&args.source, &rows, &args.out)?;
    println!("exploded {} selections into {} rows", selected.len(), rows.len());
    Ok(ExitCode::SUCCESS)
}

fn cmd_kl(args: KlArgs) -> Result<ExitCode> {
    let format = parse_format(&args.format)?;
    let target = load_dataset(&args.target, format)?;
    let reference = load_dataset(&args.reference, format)?;
    let value = match args.single_k {
        Some(k) => gio_core::kl::kl_single_k(&target, &reference, k, args.discard_nearest)?,
        None => gio_core::kl::kl_averaged(&target, &reference, args.l, args.discard_nearest)?,
    };
    println!("{value}");
    Ok(ExitCode::SUCCESS)
}

fn cmd_baseline(args: BaselineArgs) -> Result<ExitCode> {
    let format = parse_format(&args.format)?;
    let candidates = load_dataset(&args.candidates, format)?;
    fs::create_dir_all(&args.out_dir).map_err(|source| GioError::Io {
        path: args.out_dir.clone(),
        source,
    })?;
    let rows_name = match format {
        DataFormat::VectorsCsv => "selected_rows.csv",
        DataFormat::TabularTsv => "selected_rows.tsv",
    };

    let (selected, report) = match args.method.as_str() {
        "naive" => {
            let target_path = args.target.as_ref().ok_or_else(|| {
                GioError::InvalidConfig("naive baseline requires --target".into())
            })?;
            let target = load_dataset(target_path, format)?;
            let report = naive_hill_climb(
                &target,
                &candidates,
                &VectorDataset::empty(candidates.dim()),
                args.iterations,
                args.l,
            )?;
            write_text(&args.out_dir.join("kl_curve.csv"), &kl_curve_csv(&report))?;
            (report.selected.clone(), Some(report))
        }
        "similarity" => {
            let target_path = args.target.as_ref().ok_or_else(|| {
                GioError::InvalidConfig("similarity baseline requires --target".into())
            })?;
            let target = load_dataset(target_path, format)?;
            let size = args.target_size.ok_or_else(|| {
                GioError::InvalidConfig("similarity baseline requires --target-size".into())
            })?;
            (similarity_search_select(&target, &candidates, size)?, None)
        }
        "random" => {
            let size = args.target_size.ok_or_else(|| {
                GioError::InvalidConfig("random baseline requires --target-size".into())
            })?;
            let mut rng = SeededRng::new(args.seed).child("subset");
            (random_select(&candidates, size, &mut rng)?, None)
        }
        other => {
            return Err(GioError::InvalidConfig(format!(
                "unknown baseline method {other:?}; expected naive, similarity or random"
            )))
        }
    };

    emit_rows_verbatim(&args.candidates, &selected, &args.out_dir.join(rows_name))?;
    let report = report.unwrap_or_else(|| {
        let mut r = SelectionReport::new(GioConfig::default());
        r.selected = selected.clone();
        r.termination = StopReason::DataSize;
        r
    });
    write_text(&args.out_dir.join("report.json"), &report.to_json())?;
    println!("{} selected {} rows", args.method, selected.len());
    Ok(ExitCode::SUCCESS)
}

fn cmd_check(args: CheckArgs) -> Result<ExitCode> {
    let name = CheckName::from_str(&args.name)?;
    let out_dir = args.out_dir.join(name.as_str());
    let result = run_check(name, args.seed, &out_dir, args.fast)?;
    write_text(
        &out_dir.join("result.json"),
        &serde_json::to_string_pretty(&result).unwrap(),
    )?;
    for (key, value) in &result.metrics {
        println!("{key} = {value}");
    }
    println!("{}: {}", result.name, if result.pass { "PASS" } else { "FAIL" });
    Ok(if result.pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(3)
    })
}

fn cmd_bench(args: BenchArgs) -> Result<ExitCode> {
    let root = SeededRng::new(args.seed);
    let mut x_rng = root.child("x");
    let x = VectorDataset::from_rows(
        (0..100)
            .map(|_| vec![x_rng.normal(3.0, 0.707), x_rng.normal(4.0, 0.707)])
            .collect(),
    )?;
    let mut d_rng = root.child("uniform");
    let d0 = VectorDataset::from_rows(
        (0..20)
            .map(|_| vec![d_rng.uniform(0.0, 8.0), d_rng.uniform(0.0, 8.0)])
            .collect(),
    )?;

    let mut cfg = GioConfig::default();
    cfg.seed = args.seed;
    cfg.v_init = VInitMode::Mean;
    cfg.max_iter = args.iterations;
    cfg.stop.kind = StopKind::MinKl;
    cfg.stop.min_kl = -1e18;

    let mut csv = String::from("method,g_size,iterations,seconds\n");
    for &size in &args.sizes {
        let mut g_rng = root.child("g");
        let g = VectorDataset::from_rows(
            (0..size)
                .map(|_| vec![g_rng.uniform(0.0, 8.0), g_rng.uniform(0.0, 8.0)])
                .collect(),
        )?;
        let t0 = Instant::now();
        naive_hill_climb(&x, &g, &d0, args.iterations, cfg.l)?;
        let naive_secs = t0.elapsed().as_secs_f64();
        let t1 = Instant::now();
        run_gio(&x, &g, SelectionInit::Explicit(d0.clone()), &cfg)?;
        let gio_secs = t1.elapsed().as_secs_f64();
        csv.push_str(&format!("naive,{size},{},{naive_secs}\n", args.iterations));
        csv.push_str(&format!("gio,{size},{},{gio_secs}\n", args.iterations));
        println!("|G|={size}: naive {naive_secs:.2}s, descent {gio_secs:.2}s");
    }
    write_text(&args.out, &csv)?;
    Ok(ExitCode::SUCCESS)
}

//! Command-line entry point. [`run`] parses arguments, applies the config
//! file and returns the process exit code: 0 on success, 1 when some items
//! were skipped, 2 on fatal errors.

mod config;

pub use config::{AdapterSettings, BackendKind, EvalSettings, IngestSettings, PipelineConfig};

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use chrono::{DateTime, Utc};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use crate::detect::{self, DetectorBackend, SubprocessBackend, SyntheticBackend};
use crate::eval::{self, MatchPolicy, Scheme};
use crate::ingest::{self, CorpusManifest, ScanConfig};
use crate::report::{build_report, report_csv, ReportInputs, DEFAULT_RUNTIME_BIN_S};
use crate::rx::{self, PValueMode};
use crate::trainprep::{self, NoExtraEffects};
use crate::triage::{self, TriageStore};

pub const EXIT_OK: i32 = 0;
pub const EXIT_SKIPPED: i32 = 1;
pub const EXIT_FATAL: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "sartriage", version, about = "Drone imagery triage for search and rescue")]
pub struct Cli {
    /// Worker threads for every parallel stage (default: one per core).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// TOML config file; flags take precedence over it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// error, warn, info, debug or trace.
    #[arg(long, global = true)]
    log_level: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Scan a photo/video tree into a manifest.
    Ingest(IngestArgs),
    /// Flag anomalous images with RX + DBSCAN.
    Rx(RxArgs),
    /// Run a tiled detector over the manifest.
    Detect(DetectArgs),
    /// Score detections against ground truth.
    Eval(EvalArgs),
    /// Write augmented training crops.
    PrepTrain(PrepArgs),
    /// Load rx and detect results into a review store.
    TriageIngest(TriageIngestArgs),
    /// Serve the review API.
    Serve(ServeArgs),
    /// Corpus and pipeline report.
    Report(ReportArgs),
    /// Speak the detector adapter protocol on stdio using the synthetic detector.
    #[command(hide = true)]
    Adapter(AdapterArgs),
}

#[derive(Debug, Args)]
struct IngestArgs {
    #[arg(long)]
    root: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    sample_rate: Option<f64>,
    /// CSV with path,lat,lon,captured_at.
    #[arg(long)]
    sidecar: Option<PathBuf>,
    /// Frame extraction template with {input} {rate} {outdir}.
    #[arg(long)]
    frame_cmd: Option<String>,
    #[arg(long)]
    work_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RxArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    resize_to: Option<u32>,
    #[arg(long)]
    p_threshold: Option<f64>,
    #[arg(long)]
    dbscan_eps: Option<f64>,
    #[arg(long)]
    min_cluster_pixels: Option<usize>,
    #[arg(long)]
    min_clusters: Option<usize>,
    #[arg(long)]
    max_clusters: Option<usize>,
    #[arg(long)]
    covariance_ridge: Option<f64>,
    #[arg(long, value_parser = parse_p_mode)]
    p_value_mode: Option<PValueMode>,
}

fn parse_p_mode(s: &str) -> Result<PValueMode, String> {
    match s {
        "z_score" | "zscore" => Ok(PValueMode::ZScore),
        "chi_square" | "chisquare" => Ok(PValueMode::ChiSquare),
        _ => Err(format!("expected z_score or chi_square, got {s}")),
    }
}

#[derive(Debug, Args)]
struct DetectArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum)]
    backend: Option<BackendKind>,
    /// Adapter command line, split on whitespace.
    #[arg(long)]
    adapter_cmd: Option<String>,
    #[arg(long)]
    adapter_timeout_s: Option<f64>,
    /// Where tile PNGs for the adapter are written.
    #[arg(long)]
    work_dir: Option<PathBuf>,
    #[arg(long)]
    tile_size: Option<u32>,
    #[arg(long)]
    tile_overlap: Option<u32>,
    #[arg(long)]
    wbf_iou: Option<f64>,
    #[arg(long)]
    confidence_threshold: Option<f64>,
    #[arg(long)]
    max_detections: Option<usize>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    gt: PathBuf,
    #[arg(long)]
    detections: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_parser = parse_scheme)]
    scheme: Option<Scheme>,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    iou_threshold: Option<f64>,
    #[arg(long)]
    gt_coverage_threshold: Option<f64>,
    /// Write the PR curve as score,precision,recall.
    #[arg(long)]
    pr_csv: Option<PathBuf>,
    /// Second detections file; bootstraps AP(detections) - AP(compare).
    #[arg(long)]
    compare: Option<PathBuf>,
    #[arg(long)]
    resamples: Option<usize>,
    #[arg(long)]
    level: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

fn parse_scheme(s: &str) -> Result<Scheme, String> {
    match s {
        "voc2012" | "voc" => Ok(Scheme::Voc2012),
        "sar_apd" | "sar-apd" => Ok(Scheme::SarApd),
        _ => Err(format!("expected voc2012 or sar_apd, got {s}")),
    }
}

#[derive(Debug, Args)]
struct PrepArgs {
    #[arg(long)]
    gt: PathBuf,
    #[arg(long)]
    images: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    samples_per_image: Option<usize>,
    #[arg(long)]
    val_fraction: Option<f64>,
    #[arg(long)]
    crop_size: Option<u32>,
}

#[derive(Debug, Args)]
struct TriageIngestArgs {
    #[arg(long)]
    store: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    rx: Option<PathBuf>,
    #[arg(long)]
    detections: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[arg(long)]
    store: PathBuf,
    /// Corpus root the candidates' source paths are relative to.
    #[arg(long)]
    images: PathBuf,
    #[arg(long, default_value = "127.0.0.1:8080")]
    bind: std::net::SocketAddr,
}

#[derive(Debug, Args)]
struct ReportArgs {
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    rx: Option<PathBuf>,
    #[arg(long)]
    detections: Option<PathBuf>,
    #[arg(long)]
    store: Option<PathBuf>,
    /// JSON report path; the CSV goes next to it.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_RUNTIME_BIN_S)]
    runtime_bin_s: f64,
}

#[derive(Debug, Args)]
struct AdapterArgs {
    #[arg(long, default_value_t = 1)]
    capacity: usize,
}

struct Fatal(String);

impl<E: std::fmt::Display> From<E> for Fatal {
    fn from(e: E) -> Self {
        Fatal(e.to_string())
    }
}

#[derive(Serialize)]
struct RunSummary {
    command: &'static str,
    version: &'static str,
    started_at: DateTime<Utc>,
    elapsed_s: f64,
    workers: usize,
    seed: Option<u64>,
    parameters: Value,
    inputs: Value,
    outputs: Vec<String>,
    processed: usize,
    skipped: usize,
    skip_reasons: Vec<Value>,
    exit_code: i32,
}

struct Outcome {
    command: &'static str,
    summary_path: Option<PathBuf>,
    seed: Option<u64>,
    parameters: Value,
    inputs: Value,
    outputs: Vec<PathBuf>,
    processed: usize,
    skip_reasons: Vec<Value>,
}

impl Outcome {
    fn new(command: &'static str, summary_path: Option<PathBuf>) -> Self {
        Self {
            command,
            summary_path,
            seed: None,
            parameters: Value::Null,
            inputs: Value::Null,
            outputs: Vec::new(),
            processed: 0,
            skip_reasons: Vec::new(),
        }
    }
}

/// Wall-clock "now", or `SOURCE_DATE_EPOCH` when set.
pub fn timestamp_now() -> DateTime<Utc> {
    std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|s| s.trim().parse::<i64>().ok())
        .and_then(|s| DateTime::from_timestamp(s, 0))
        .unwrap_or_else(Utc::now)
}

pub fn summary_path_for(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".summary.json");
    PathBuf::from(s)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), Fatal> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Fatal(format!("{}: {e}", parent.display())))?;
    }
    std::fs::write(path, bytes).map_err(|e| Fatal(format!("{}: {e}", path.display())))
}

fn jsonl<T: Serialize>(items: &[T]) -> Vec<u8> {
    let mut out = Vec::new();
    for item in items {
        serde_json::to_writer(&mut out, item).expect("serializable");
        out.push(b'\n');
    }
    out
}

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, Fatal> {
    let text = std::fs::read_to_string(path).map_err(|e| Fatal(format!("{}: {e}", path.display())))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| Fatal(format!("{}:{}: {e}", path.display(), i + 1))))
        .collect()
}

fn load_manifest(path: &Path) -> Result<CorpusManifest, Fatal> {
    Ok(CorpusManifest::load(path)?)
}

fn init_logging(level: &str) {
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
}

/// Parses `argv` (including the program name) and runs the subcommand.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_FATAL } else { EXIT_OK };
        }
    };
    let file_cfg = match &cli.config {
        Some(p) => match PipelineConfig::load(p) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("error: config: {e}");
                return EXIT_FATAL;
            }
        },
        None => PipelineConfig::default(),
    };
    init_logging(cli.log_level.as_deref().or(file_cfg.log_level.as_deref()).unwrap_or("warn"));

    let workers = cli.workers.or(file_cfg.workers).unwrap_or_else(rayon::current_num_threads);
    if workers == 0 {
        eprintln!("error: --workers must be at least 1");
        return EXIT_FATAL;
    }
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: thread pool: {e}");
            return EXIT_FATAL;
        }
    };

    let started_at = Utc::now();
    let clock = Instant::now();
    let result = pool.install(|| dispatch(cli.command, file_cfg));
    match result {
        Ok(outcome) => {
            let exit_code = if outcome.skip_reasons.is_empty() { EXIT_OK } else { EXIT_SKIPPED };
            if let Some(path) = &outcome.summary_path {
                let summary = RunSummary {
                    command: outcome.command,
                    version: env!("CARGO_PKG_VERSION"),
                    started_at,
                    elapsed_s: clock.elapsed().as_secs_f64(),
                    workers,
                    seed: outcome.seed,
                    parameters: outcome.parameters,
                    inputs: outcome.inputs,
                    outputs: outcome.outputs.iter().map(|p| p.display().to_string()).collect(),
                    processed: outcome.processed,
                    skipped: outcome.skip_reasons.len(),
                    skip_reasons: outcome.skip_reasons,
                    exit_code,
                };
                let bytes = serde_json::to_vec_pretty(&summary).expect("summary serializes");
                if let Err(Fatal(e)) = write_file(path, &bytes) {
                    eprintln!("error: {e}");
                    return EXIT_FATAL;
                }
            }
            exit_code
        }
        Err(Fatal(e)) => {
            eprintln!("error: {e}");
            EXIT_FATAL
        }
    }
}

fn dispatch(command: Command, cfg: PipelineConfig) -> Result<Outcome, Fatal> {
    match command {
        Command::Ingest(a) => cmd_ingest(a, cfg),
        Command::Rx(a) => cmd_rx(a, cfg),
        Command::Detect(a) => cmd_detect(a, cfg),
        Command::Eval(a) => cmd_eval(a, cfg),
        Command::PrepTrain(a) => cmd_prep(a, cfg),
        Command::TriageIngest(a) => cmd_triage_ingest(a),
        Command::Serve(a) => cmd_serve(a),
        Command::Report(a) => cmd_report(a),
        Command::Adapter(a) => cmd_adapter(a),
    }
}

fn cmd_ingest(a: IngestArgs, cfg: PipelineConfig) -> Result<Outcome, Fatal> {
    let s = cfg.ingest;
    let scan = ScanConfig {
        sample_rate_hz: a.sample_rate.unwrap_or(s.sample_rate_hz),
        frame_cmd: a.frame_cmd.or(s.frame_cmd),
        work_dir: a.work_dir.or(s.work_dir),
        sidecar_csv: a.sidecar.or(s.sidecar),
        created_at: Some(timestamp_now()),
        ..ScanConfig::default()
    };
    let outcome = ingest::scan_corpus(&a.root, &scan)?;
    write_file(&a.out, outcome.manifest.to_json().as_bytes())?;
    let mut o = Outcome::new("ingest", Some(summary_path_for(&a.out)));
    o.parameters = json!({
        "sample_rate_hz": scan.sample_rate_hz,
        "frame_cmd": scan.frame_cmd,
        "sidecar": scan.sidecar_csv,
    });
    o.inputs = json!({"root": a.root});
    o.outputs = vec![a.out];
    o.processed = outcome.manifest.records.len();
    o.skip_reasons = outcome.skipped.iter().map(|s| json!({"path": s.path, "reason": s.reason})).collect();
    Ok(o)
}

fn cmd_rx(a: RxArgs, cfg: PipelineConfig) -> Result<Outcome, Fatal> {
    let mut rc = cfg.rx;
    rc.resize_to = a.resize_to.unwrap_or(rc.resize_to);
    rc.p_threshold = a.p_threshold.unwrap_or(rc.p_threshold);
    rc.dbscan_eps = a.dbscan_eps.unwrap_or(rc.dbscan_eps);
    rc.min_cluster_pixels = a.min_cluster_pixels.unwrap_or(rc.min_cluster_pixels);
    rc.min_clusters = a.min_clusters.unwrap_or(rc.min_clusters);
    rc.max_clusters = a.max_clusters.unwrap_or(rc.max_clusters);
    rc.covariance_ridge = a.covariance_ridge.unwrap_or(rc.covariance_ridge);
    rc.p_value_mode = a.p_value_mode.unwrap_or(rc.p_value_mode);
    rc.validate()?;

    let manifest = load_manifest(&a.manifest)?;
    let lines = rx::run_rx(&manifest, &rc);
    write_file(&a.out, &jsonl(&lines))?;
    let mut o = Outcome::new("rx", Some(summary_path_for(&a.out)));
    o.parameters = serde_json::to_value(&rc)?;
    o.inputs = json!({"manifest": a.manifest});
    o.outputs = vec![a.out];
    o.processed = lines.iter().filter(|l| l.error.is_none()).count();
    o.skip_reasons = lines
        .iter()
        .filter_map(|l| l.error.as_ref().map(|e| json!({"image_id": l.image_id, "reason": e})))
        .collect();
    Ok(o)
}

fn cmd_detect(a: DetectArgs, cfg: PipelineConfig) -> Result<Outcome, Fatal> {
    let mut dc = cfg.detect;
    dc.tile_size = a.tile_size.unwrap_or(dc.tile_size);
    dc.tile_overlap = a.tile_overlap.unwrap_or(dc.tile_overlap);
    dc.wbf_iou = a.wbf_iou.unwrap_or(dc.wbf_iou);
    dc.confidence_threshold = a.confidence_threshold.unwrap_or(dc.confidence_threshold);
    dc.max_detections_per_image = a.max_detections.unwrap_or(dc.max_detections_per_image);
    dc.validate()?;

    let ad = cfg.adapter;
    let kind = a.backend.unwrap_or(if a.adapter_cmd.is_some() { BackendKind::Command } else { ad.backend });
    let command = a.adapter_cmd.or(ad.command);
    let timeout_s = a.adapter_timeout_s.unwrap_or(ad.timeout_s);
    let manifest = load_manifest(&a.manifest)?;
    let backend: Box<dyn DetectorBackend> = match kind {
        BackendKind::Synthetic => Box::new(SyntheticBackend),
        BackendKind::Command => {
            let cmd = command.clone().ok_or_else(|| {
                Fatal("no detector configured: pass --backend synthetic or --adapter-cmd".into())
            })?;
            if !(timeout_s.is_finite() && timeout_s > 0.0) {
                return Err(Fatal(format!("adapter timeout must be positive, got {timeout_s}")));
            }
            let work = a.work_dir.or(ad.work_dir).unwrap_or_else(|| {
                let mut p = a.out.as_os_str().to_owned();
                p.push(".tiles");
                PathBuf::from(p)
            });
            Box::new(SubprocessBackend::new(
                cmd.split_whitespace().map(String::from).collect(),
                work,
                Duration::from_secs_f64(timeout_s),
            )?)
        }
    };
    let lines = detect::run_detect(&manifest, &dc, backend.as_ref());
    write_file(&a.out, &jsonl(&lines))?;
    let mut o = Outcome::new("detect", Some(summary_path_for(&a.out)));
    o.parameters = json!({
        "detect": dc,
        "backend": kind,
        "adapter_cmd": command,
        "adapter_timeout_s": timeout_s,
    });
    o.inputs = json!({"manifest": a.manifest});
    o.outputs = vec![a.out];
    o.processed = lines.iter().filter(|l| l.error.is_none()).count();
    o.skip_reasons = lines
        .iter()
        .filter_map(|l| l.error.as_ref().map(|e| json!({"image_id": l.image_id, "reason": e})))
        .collect();
    Ok(o)
}

fn cmd_eval(a: EvalArgs, cfg: PipelineConfig) -> Result<Outcome, Fatal> {
    let s = cfg.eval;
    let scheme = a.scheme.unwrap_or(s.scheme);
    let mut policy = MatchPolicy::for_scheme(scheme);
    policy.iou_threshold = a.iou_threshold.unwrap_or(s.iou_threshold);
    policy.gt_coverage_threshold = a.gt_coverage_threshold.unwrap_or(s.gt_coverage_threshold);
    let threshold = a.threshold.unwrap_or(s.threshold);
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Fatal(format!("threshold must be in [0, 1], got {threshold}")));
    }
    let gt = eval::load_ground_truth(&a.gt)?;
    let dump = eval::load_detections(&a.detections)?;
    let report = eval::evaluate(&dump, &gt, &policy, threshold);
    let mut doc = serde_json::to_value(&report)?;

    let mut o = Outcome::new("eval", Some(summary_path_for(&a.out)));
    if let Some(cmp) = &a.compare {
        let other = eval::load_detections(cmp)?;
        let seed = a.seed.unwrap_or_else(rand::random);
        let resamples = a.resamples.unwrap_or(s.resamples);
        let level = a.level.unwrap_or(s.level);
        let boot = eval::bootstrap_ap_difference(&dump, &other, &gt, &policy, resamples, level, seed)?;
        doc["compare"] = json!({
            "detections": cmp,
            "report": eval::evaluate(&other, &gt, &policy, threshold),
            "bootstrap": boot,
        });
        o.seed = Some(seed);
    }
    write_file(&a.out, &serde_json::to_vec_pretty(&doc)?)?;
    o.outputs.push(a.out.clone());
    if let Some(p) = &a.pr_csv {
        write_file(p, eval::pr_curve_csv(&dump, &gt, &policy).as_bytes())?;
        o.outputs.push(p.clone());
    }
    o.parameters = json!({"policy": policy, "threshold": threshold});
    o.inputs = json!({"gt": a.gt, "detections": a.detections, "compare": a.compare});
    o.processed = report.per_image.len();
    Ok(o)
}

fn cmd_prep(a: PrepArgs, cfg: PipelineConfig) -> Result<Outcome, Fatal> {
    let mut pc = cfg.prep;
    // an explicit seed in the file counts as chosen; otherwise draw one and record it
    pc.seed = a.seed.unwrap_or(if pc.seed != 0 { pc.seed } else { rand::random() });
    pc.samples_per_image = a.samples_per_image.unwrap_or(pc.samples_per_image);
    pc.val_fraction = a.val_fraction.unwrap_or(pc.val_fraction);
    pc.crop_size = a.crop_size.unwrap_or(pc.crop_size);
    if pc.crop_size == 0 {
        return Err(Fatal("crop size must be positive".into()));
    }
    let gt = eval::load_ground_truth(&a.gt)?;
    let summary = trainprep::prepare_training_set(&gt, &a.images, &a.out, &pc, &NoExtraEffects)?;
    let mut o = Outcome::new("prep-train", Some(a.out.join("prep-train.summary.json")));
    o.seed = Some(pc.seed);
    o.parameters = serde_json::to_value(&pc)?;
    o.inputs = json!({"gt": a.gt, "images": a.images});
    o.outputs = vec![a.out.join("crops")];
    o.processed = summary.written;
    // crops that merely could not be placed are reported, not counted as failures
    o.skip_reasons = summary
        .skipped
        .iter()
        .filter(|s| s.sample.is_none())
        .map(|s| json!({"image_id": s.image_id, "reason": s.reason}))
        .collect();
    o.parameters["crop_skips"] = json!(summary.skipped.len());
    o.parameters["train_images"] = json!(summary.train_images);
    o.parameters["val_images"] = json!(summary.val_images);
    Ok(o)
}

fn cmd_triage_ingest(a: TriageIngestArgs) -> Result<Outcome, Fatal> {
    let manifest = load_manifest(&a.manifest)?;
    let rx_lines: Vec<rx::RxImageOutput> = a.rx.as_deref().map(read_jsonl).transpose()?.unwrap_or_default();
    let det_lines: Vec<detect::DetectionsLine> =
        a.detections.as_deref().map(read_jsonl).transpose()?.unwrap_or_default();
    let (candidates, skipped) = triage::build_candidates(&rx_lines, &det_lines, &manifest, timestamp_now());
    let root = PathBuf::from(&manifest.root);
    let store = TriageStore::open(&a.store, &root)?;
    let added = store.ingest(candidates)?;
    println!("{added} candidates added, {} in store", store.len());
    let mut o = Outcome::new("triage-ingest", Some(a.store.join("triage-ingest.summary.json")));
    o.inputs = json!({"manifest": a.manifest, "rx": a.rx, "detections": a.detections});
    o.outputs = vec![a.store.clone()];
    o.processed = added;
    o.parameters = json!({"added": added, "total": store.len()});
    o.skip_reasons = skipped.iter().map(|s| json!({"image_id": s.image_id, "reason": s.reason})).collect();
    Ok(o)
}

fn cmd_serve(a: ServeArgs) -> Result<Outcome, Fatal> {
    let store = Arc::new(TriageStore::open(&a.store, &a.images)?);
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(triage::serve(store, a.bind, None))?;
    Ok(Outcome::new("serve", None))
}

fn stage_timing(stage: &str, output: &Path) -> Option<(String, usize, f64)> {
    let text = std::fs::read_to_string(summary_path_for(output)).ok()?;
    let v: Value = serde_json::from_str(&text).ok()?;
    Some((stage.to_string(), v["processed"].as_u64()? as usize, v["elapsed_s"].as_f64()?))
}

fn cmd_report(a: ReportArgs) -> Result<Outcome, Fatal> {
    let manifest = a.manifest.as_deref().map(load_manifest).transpose()?;
    let rx_lines: Option<Vec<rx::RxImageOutput>> = a.rx.as_deref().map(read_jsonl).transpose()?;
    let det_lines: Option<Vec<detect::DetectionsLine>> = a.detections.as_deref().map(read_jsonl).transpose()?;
    let triage_stats = match &a.store {
        Some(dir) => Some(TriageStore::open(dir, Path::new("."))?.stats()),
        None => None,
    };
    let mut timings = Vec::new();
    timings.extend(a.rx.as_deref().and_then(|p| stage_timing("rx", p)));
    timings.extend(a.detections.as_deref().and_then(|p| stage_timing("detect", p)));
    if !(a.runtime_bin_s > 0.0) {
        return Err(Fatal(format!("runtime bin width must be positive, got {}", a.runtime_bin_s)));
    }
    let report = build_report(ReportInputs {
        manifest: manifest.as_ref(),
        rx: rx_lines.as_deref(),
        detections: det_lines.as_deref(),
        triage: triage_stats,
        timings,
        runtime_bin_width_s: a.runtime_bin_s,
    });
    let csv_path = a.out.with_extension("csv");
    write_file(&a.out, &serde_json::to_vec_pretty(&report)?)?;
    write_file(&csv_path, report_csv(&report).as_bytes())?;
    let mut o = Outcome::new("report", Some(summary_path_for(&a.out)));
    o.inputs = json!({"manifest": a.manifest, "rx": a.rx, "detections": a.detections, "store": a.store});
    o.parameters = json!({"runtime_bin_s": a.runtime_bin_s});
    o.outputs = vec![a.out, csv_path];
    o.processed = report.images;
    Ok(o)
}

fn cmd_adapter(a: AdapterArgs) -> Result<Outcome, Fatal> {
    let stdin = std::io::stdin();
    let mut stdout = std::io::stdout();
    detect::protocol::serve_adapter(stdin.lock(), stdout.lock(), a.capacity.max(1), SyntheticBackend::detect_tile)?;
    stdout.flush()?;
    Ok(Outcome::new("adapter", None))
}

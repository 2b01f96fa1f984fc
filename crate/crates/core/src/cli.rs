//! Command-line front end. Each sub-command prints one JSON summary line on
//! standard output; diagnostics go to standard error. Exit status is 0 on
//! success, 2 for usage errors and 1 for runtime failures.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::classifier::{Classifier, TrainConfig};
use crate::config::RunConfig;
use crate::dataio::{self, csv_io, geojson, ParseReport};
use crate::evaluation::{self, PositKey, ScoreOptions};
use crate::kinematics::RawRecord;
use crate::workflow::{self, Method, Stream};

#[derive(Debug, Parser)]
#[command(name = "ais-relabel", version, about = "Relabel anonymized AIS position reports with vessel identities")]
pub struct Cli {
    /// TOML run configuration; flags override it
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Worker threads (0 = all cores)
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Seed for every random step of the command
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate labeled synthetic traffic
    Synth(SynthArgs),
    /// Downsample, add noise and drop most stopped reports
    Preprocess(PreprocessArgs),
    /// Train the link classifier on labeled streams
    Train(TrainArgs),
    /// Relabel a stream with the screening + classifier pipeline
    Relabel(RelabelArgs),
    /// Relabel a stream with a comparison method
    Baseline(BaselineArgs),
    /// Posit accuracy of predicted labels against ground truth
    Score(ScoreArgs),
    /// Write a GeoJSON map of tracks or per-posit scores
    Map(MapArgs),
    /// Posit accuracy of a simulated classifier of given accuracy
    SimulateCurve(CurveArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output CSV
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub vessels: Option<usize>,
    /// Duration in days
    #[arg(long)]
    pub days: Option<f64>,
    /// Seconds between raw reports
    #[arg(long)]
    pub interval: Option<f64>,
    #[arg(long, value_enum)]
    pub scenario: Option<ScenarioArg>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ScenarioArg {
    Mixed,
    Open,
    Channel,
    Port,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    WaypointGraph,
    RandomMotion,
}

#[derive(Debug, Args)]
pub struct InputArgs {
    /// Input CSV files, one per day in order
    #[arg(long = "input", short = 'i', required = true, num_args = 1..)]
    pub input: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long)]
    pub out: PathBuf,
    /// Downsampling bucket, seconds
    #[arg(long)]
    pub interval: Option<f64>,
    /// Position noise std, metres
    #[arg(long)]
    pub noise: Option<f64>,
    /// Time jitter std, seconds
    #[arg(long)]
    pub jitter: Option<f64>,
    /// Stopped-vessel threshold, knots
    #[arg(long)]
    pub stop_speed: Option<f64>,
    /// Fraction of stopped reports kept
    #[arg(long)]
    pub keep_fraction: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Labeled validation files (default: a held-out fraction of the input)
    #[arg(long, num_args = 1..)]
    pub validation: Vec<PathBuf>,
    /// Output model file; the feature schema is also written next to it
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Hidden layer widths, comma separated
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
    /// Use the full-size hidden widths 2000,2000,1000
    #[arg(long, conflicts_with = "hidden")]
    pub full_size: bool,
    #[arg(long)]
    pub lr: Option<f32>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Write the validation classification report here
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Write the training examples as JSON lines
    #[arg(long)]
    pub dump_examples: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum DeciderArg {
    Classifier,
    Oracle,
    Greedy,
}

#[derive(Debug, Args)]
pub struct RelabelArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long)]
    pub out: PathBuf,
    /// Trained model (required for the classifier decider)
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "classifier")]
    pub decider: DeciderArg,
    /// Write one JSON decision record per posit
    #[arg(long)]
    pub audit: Option<PathBuf>,
    /// Screen size
    #[arg(long)]
    pub k: Option<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MethodArg {
    Cbtr,
    Atd,
    KfCv,
    KfCtrv,
    Greedy,
    Oracle,
}

#[derive(Debug, Args)]
pub struct BaselineArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum)]
    pub method: MethodArg,
    /// Write finite CBTR distances as `i j d` lines
    #[arg(long)]
    pub export_distances: Option<PathBuf>,
    /// Chi-square gate of the Kalman trackers
    #[arg(long)]
    pub kf_gate: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    /// CSV with predicted_track_id (or track_id) per point
    #[arg(long)]
    pub pred: PathBuf,
    /// CSV with ground-truth track_id per point
    #[arg(long)]
    pub truth: PathBuf,
    /// Also report accuracy per open/coastal/port stratum
    #[arg(long)]
    pub strata: bool,
    /// Drop the "none" points at track ends
    #[arg(long)]
    pub exclude_endpoints: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ColorArg {
    Identity,
    Score,
}

#[derive(Debug, Args)]
pub struct MapArgs {
    /// CSV to draw (predicted_track_id is used when present)
    #[arg(long, short = 'i')]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "identity")]
    pub color: ColorArg,
    /// Ground truth, required for score coloring
    #[arg(long)]
    pub truth: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CurveArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Simulated classifier accuracies
    #[arg(long, value_delimiter = ',', default_value = "0,0.25,0.5,0.75,1")]
    pub accuracies: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
    pub seeds: Vec<u64>,
    /// Write the curve as JSON
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(&cli) {
        Ok(summary) => {
            println!("{summary}");
            0
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

fn load_config(cli: &Cli) -> anyhow::Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(t) = cli.threads {
        cfg.threads = t;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
        cfg.synth.seed = s;
        cfg.train.seed = s;
    }
    Ok(cfg)
}

fn check_inputs<'a>(paths: impl IntoIterator<Item = &'a PathBuf>) -> anyhow::Result<()> {
    for p in paths {
        if !p.is_file() {
            bail!("input file {} does not exist", p.display());
        }
    }
    Ok(())
}

fn check_outputs<'a>(paths: impl IntoIterator<Item = &'a PathBuf>) -> anyhow::Result<()> {
    for p in paths {
        if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
            if !dir.is_dir() {
                bail!("output directory {} does not exist", dir.display());
            }
        }
    }
    Ok(())
}

fn read_inputs(paths: &[PathBuf]) -> anyhow::Result<ParseReport> {
    let report = dataio::parse_files(paths)?;
    for e in &report.errors {
        eprintln!("warning: skipped line {}: {}", e.line, e.message);
    }
    Ok(report)
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("cannot create {}", path.display()))?))
}

fn execute(cli: &Cli) -> anyhow::Result<serde_json::Value> {
    let mut cfg = load_config(cli)?;
    // the global pool can only be configured once per process
    let _ = rayon::ThreadPoolBuilder::new().num_threads(cfg.threads).build_global();
    match &cli.command {
        Command::Synth(a) => synth(&mut cfg, a),
        Command::Preprocess(a) => preprocess(&mut cfg, a),
        Command::Train(a) => train(&mut cfg, a),
        Command::Relabel(a) => relabel(&mut cfg, a),
        Command::Baseline(a) => baseline(&mut cfg, a),
        Command::Score(a) => score(&cfg, a),
        Command::Map(a) => map(a),
        Command::SimulateCurve(a) => curve(&cfg, a),
    }
}

fn synth(cfg: &mut RunConfig, a: &SynthArgs) -> anyhow::Result<serde_json::Value> {
    check_outputs([&a.out])?;
    let s = &mut cfg.synth;
    if let Some(v) = a.vessels {
        s.vessels = v;
    }
    if let Some(d) = a.days {
        s.duration = d * csv_io::DAY;
    }
    if let Some(i) = a.interval {
        s.report_interval = i;
    }
    if let Some(sc) = a.scenario {
        s.scenario = match sc {
            ScenarioArg::Mixed => dataio::synth::Scenario::Mixed,
            ScenarioArg::Open => dataio::synth::Scenario::Open,
            ScenarioArg::Channel => dataio::synth::Scenario::Channel,
            ScenarioArg::Port => dataio::synth::Scenario::Port,
        };
    }
    if let Some(m) = a.mode {
        s.mode = match m {
            ModeArg::WaypointGraph => dataio::synth::MotionMode::WaypointGraph,
            ModeArg::RandomMotion => dataio::synth::MotionMode::RandomMotion,
        };
    }
    let records = dataio::generate_synthetic(s)?;
    csv_io::write_csv(create(&a.out)?, &records, None)?;
    Ok(json!({"command": "synth", "records": records.len(), "vessels": s.vessels, "seed": s.seed, "out": a.out}))
}

fn preprocess(cfg: &mut RunConfig, a: &PreprocessArgs) -> anyhow::Result<serde_json::Value> {
    check_inputs(&a.input.input)?;
    check_outputs([&a.out])?;
    let p = &mut cfg.preprocess;
    for (flag, field) in [
        (a.interval, &mut p.interval),
        (a.noise, &mut p.position_noise),
        (a.jitter, &mut p.time_jitter),
        (a.stop_speed, &mut p.stop_speed_kn),
        (a.keep_fraction, &mut p.stop_keep_fraction),
    ] {
        if let Some(v) = flag {
            *field = v;
        }
    }
    let input = read_inputs(&a.input.input)?;
    let out = dataio::preprocess(&input.records, p, cfg.seed)?;
    csv_io::write_csv(create(&a.out)?, &out, None)?;
    Ok(json!({
        "command": "preprocess",
        "input_records": input.records.len(),
        "skipped_rows": input.errors.len(),
        "records": out.len(),
        "out": a.out,
    }))
}

fn load_stream(paths: &[PathBuf]) -> anyhow::Result<(Vec<RawRecord>, Stream, usize)> {
    let input = read_inputs(paths)?;
    let stream = Stream::from_records(&input.records, None)?;
    Ok((input.records, stream, input.errors.len()))
}

fn schema_path(model: &Path) -> PathBuf {
    let mut p = model.as_os_str().to_owned();
    p.push(".schema");
    PathBuf::from(p)
}

fn train(cfg: &mut RunConfig, a: &TrainArgs) -> anyhow::Result<serde_json::Value> {
    check_inputs(a.input.input.iter().chain(&a.validation))?;
    let mut outputs = vec![&a.model];
    outputs.extend(a.report.iter().chain(&a.dump_examples));
    check_outputs(outputs)?;
    let t = &mut cfg.train;
    if let Some(e) = a.epochs {
        t.epochs = e;
    }
    if let Some(h) = &a.hidden {
        t.hidden = h.clone();
    }
    if a.full_size {
        t.hidden = TrainConfig::full_size_hidden();
    }
    if let Some(lr) = a.lr {
        t.learning_rate = lr;
    }
    if let Some(b) = a.batch_size {
        t.batch_size = b;
    }
    t.validate()?;
    let (_, train_stream, _) = load_stream(&a.input.input)?;
    let validation = if a.validation.is_empty() { None } else { Some(load_stream(&a.validation)?.1) };
    let pipeline = cfg.pipeline();
    let outcome = workflow::fit_classifier(&[&train_stream], validation.as_ref().as_slice(), &pipeline, &cfg.train)?;
    outcome.classifier.save(&a.model)?;
    outcome.classifier.schema.save(&schema_path(&a.model))?;
    let table = outcome.validation.to_table();
    eprintln!("{table}");
    if let Some(p) = &a.report {
        std::fs::write(p, &table)?;
    }
    if let Some(p) = &a.dump_examples {
        let queries = crate::tracker::teacher_forced(&train_stream.posits, train_stream.require_truth()?, &pipeline)?;
        let mut w = create(p)?;
        for (q, ex) in queries.iter().zip(workflow::examples(&queries, &outcome.classifier.schema)) {
            let line = json!({"point_id": q.point_id, "label": ex.label, "mask": ex.mask, "input": ex.input});
            writeln!(w, "{line}")?;
        }
        w.flush()?;
    }
    let best = &outcome.report.epochs[outcome.report.best_epoch];
    Ok(json!({
        "command": "train",
        "train_examples": outcome.n_train,
        "validation_examples": outcome.n_validation,
        "best_epoch": outcome.report.best_epoch,
        "validation_loss": best.valid_loss,
        "validation_accuracy": outcome.validation.accuracy,
        "temperature": outcome.classifier.model.temperature,
        "fingerprint": format!("{:016x}", outcome.classifier.schema.fingerprint()),
        "model": a.model,
    }))
}

fn write_labeled(path: &Path, records: &[RawRecord], stream: &Stream, labels: &[u32]) -> anyhow::Result<()> {
    let predicted = stream.labels_in_record_order(labels);
    csv_io::write_csv(create(path)?, records, Some(&predicted))?;
    Ok(())
}

fn summary_with_score(mut v: serde_json::Value, stream: &Stream, labels: &[u32]) -> anyhow::Result<serde_json::Value> {
    if stream.truth.is_some() {
        let s = workflow::score(stream, labels, ScoreOptions::default())?;
        v["posit_accuracy"] = json!(s.accuracy);
    }
    Ok(v)
}

fn relabel(cfg: &mut RunConfig, a: &RelabelArgs) -> anyhow::Result<serde_json::Value> {
    check_inputs(a.input.input.iter().chain(&a.model))?;
    check_outputs([&a.out].into_iter().chain(&a.audit))?;
    if let Some(k) = a.k {
        cfg.screen.k = k;
    }
    let (records, stream, skipped) = load_stream(&a.input.input)?;
    let classifier = match &a.model {
        Some(p) => Some(Classifier::load(p)?),
        None => None,
    };
    let method = match a.decider {
        DeciderArg::Classifier => {
            if classifier.is_none() {
                bail!("--model is required with the classifier decider");
            }
            Method::Hybrid
        }
        DeciderArg::Oracle => Method::Oracle,
        DeciderArg::Greedy => Method::Greedy,
    };
    let mut pipeline = cfg.pipeline();
    if let (Some(c), None) = (&classifier, a.k) {
        pipeline.screen.k = c.k();
    }
    let out = workflow::relabel(&stream, method, classifier.as_ref(), &pipeline, &cfg.baselines())?;
    write_labeled(&a.out, &records, &stream, &out.labels)?;
    if let Some(p) = &a.audit {
        let mut w = create(p)?;
        for r in &out.audit {
            writeln!(w, "{}", serde_json::to_string(r)?)?;
        }
        w.flush()?;
    }
    let v = json!({
        "command": "relabel",
        "decider": method.name(),
        "posits": stream.posits.len(),
        "skipped_rows": skipped,
        "tracks": out.n_tracks,
        "out": a.out,
    });
    summary_with_score(v, &stream, &out.labels)
}

fn baseline(cfg: &mut RunConfig, a: &BaselineArgs) -> anyhow::Result<serde_json::Value> {
    check_inputs(&a.input.input)?;
    check_outputs([&a.out].into_iter().chain(&a.export_distances))?;
    if let Some(g) = a.kf_gate {
        cfg.kf.gate = g;
    }
    let method = match a.method {
        MethodArg::Cbtr => Method::Cbtr,
        MethodArg::Atd => Method::Atd,
        MethodArg::KfCv => Method::KfCv,
        MethodArg::KfCtrv => Method::KfCtrv,
        MethodArg::Greedy => Method::Greedy,
        MethodArg::Oracle => Method::Oracle,
    };
    if a.export_distances.is_some() && method != Method::Cbtr {
        bail!("--export-distances is only available with --method cbtr");
    }
    cfg.validate()?;
    let (records, stream, skipped) = load_stream(&a.input.input)?;
    if let Some(p) = &a.export_distances {
        let d = crate::baselines::cbtr_distances(&stream.posits, &cfg.cbtr)?;
        let mut w = create(p)?;
        d.write_triplets(&mut w)?;
        w.flush()?;
    }
    let out = workflow::relabel(&stream, method, None, &cfg.pipeline(), &cfg.baselines())?;
    write_labeled(&a.out, &records, &stream, &out.labels)?;
    let v = json!({
        "command": "baseline",
        "method": method.name(),
        "posits": stream.posits.len(),
        "skipped_rows": skipped,
        "tracks": out.n_tracks,
        "out": a.out,
    });
    summary_with_score(v, &stream, &out.labels)
}

/// Predicted labels keyed by point id: `predicted_track_id` when the file
/// has it, otherwise `track_id`.
fn predicted_by_point(report: &ParseReport) -> anyhow::Result<std::collections::HashMap<u64, u64>> {
    report
        .records
        .iter()
        .zip(&report.predicted)
        .map(|(r, p)| {
            p.or(r.track_id)
                .map(|l| (r.point_id, l))
                .ok_or_else(|| anyhow::anyhow!("point {} has no predicted or track id", r.point_id))
        })
        .collect()
}

fn score(cfg: &RunConfig, a: &ScoreArgs) -> anyhow::Result<serde_json::Value> {
    check_inputs([&a.pred, &a.truth])?;
    let pred = read_inputs(std::slice::from_ref(&a.pred))?;
    let truth = read_inputs(std::slice::from_ref(&a.truth))?;
    let predicted = predicted_by_point(&pred)?;
    let stream = Stream::from_records(&truth.records, None)?;
    let truth_labels = stream.require_truth()?;
    if predicted.len() != stream.posits.len() {
        bail!("prediction has {} points, truth has {}", predicted.len(), stream.posits.len());
    }
    let labels: Vec<u64> = stream
        .posits
        .iter()
        .map(|p| predicted.get(&p.source_id).copied().ok_or_else(|| anyhow::anyhow!("point {} missing from prediction", p.source_id)))
        .collect::<anyhow::Result<_>>()?;
    let keys: Vec<PositKey> = stream.keys();
    let opts = ScoreOptions { exclude_endpoints: a.exclude_endpoints };
    let s = evaluation::posit_accuracy(&keys, &labels, truth_labels, opts)?;
    let mut v = json!({
        "command": "score",
        "posits": keys.len(),
        "earned": s.earned,
        "available": s.available,
        "posit_accuracy": s.accuracy,
    });
    if a.strata {
        let strata = evaluation::assign_strata(&keys, &cfg.region);
        v["strata"] = serde_json::to_value(evaluation::stratify(&s, &strata))?;
    }
    Ok(v)
}

fn map(a: &MapArgs) -> anyhow::Result<serde_json::Value> {
    check_inputs([&a.input].into_iter().chain(&a.truth))?;
    check_outputs([&a.out])?;
    let input = read_inputs(std::slice::from_ref(&a.input))?;
    let predicted = predicted_by_point(&input)?;
    let doc = match a.color {
        ColorArg::Identity => {
            let stream = Stream::from_records(&input.records, None)?;
            let labels: Vec<u64> = stream.posits.iter().map(|p| predicted[&p.source_id]).collect();
            geojson::tracks_geojson(&stream.posits, &labels)
        }
        ColorArg::Score => {
            let truth_path = a.truth.as_ref().context("--truth is required for score coloring")?;
            let truth = read_inputs(std::slice::from_ref(truth_path))?;
            let stream = Stream::from_records(&truth.records, None)?;
            let labels: Vec<u64> = stream
                .posits
                .iter()
                .map(|p| predicted.get(&p.source_id).copied().context("prediction and truth cover different points"))
                .collect::<anyhow::Result<_>>()?;
            let s = evaluation::posit_accuracy(&stream.keys(), &labels, stream.require_truth()?, ScoreOptions::default())?;
            geojson::score_geojson(&stream.posits, &s)
        }
    };
    let mut w = create(&a.out)?;
    serde_json::to_writer(&mut w, &doc)?;
    w.flush()?;
    let n = doc["features"].as_array().map_or(0, Vec::len);
    Ok(json!({"command": "map", "features": n, "out": a.out}))
}

fn curve(cfg: &RunConfig, a: &CurveArgs) -> anyhow::Result<serde_json::Value> {
    check_inputs(&a.input.input)?;
    check_outputs(a.out.iter())?;
    if a.accuracies.iter().any(|p| !(0.0..=1.0).contains(p)) {
        bail!("accuracies must lie in [0, 1]");
    }
    let (_, stream, _) = load_stream(&a.input.input)?;
    let points =
        evaluation::simulate_posit_curve(&stream.posits, stream.require_truth()?, &a.accuracies, &a.seeds, &cfg.pipeline())?;
    if let Some(p) = &a.out {
        let mut w = create(p)?;
        serde_json::to_writer_pretty(&mut w, &points)?;
        w.flush()?;
    }
    Ok(json!({"command": "simulate-curve", "curve": points}))
}

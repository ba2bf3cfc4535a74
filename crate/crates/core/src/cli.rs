//! The `wits` command line.
//!
//! Every artifact-producing command stages its outputs in a sibling temp
//! directory and moves them into `--out` only after success, together with a
//! `run_manifest.json` recording the resolved configuration.

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::cascade::{EngagementLabel, Rule, RuleStats};
use crate::dataset::{
    build_cube, generate_synthetic, load_annotations, save_annotations, tiled_samples, AnnotationRecord, CropStore, LoadOptions,
    SyntheticConfig,
};
use crate::error::{Error, Result};
use crate::eval::{
    render_text, run_protocol, train_and_evaluate, ClassifierConfig, ClassifierKind, ConfusionMatrix, Dataset, Protocol,
    ProtocolConfig, ProtocolReport, Trained,
};
use crate::interest_map::{encode_png, render_onto, render_overlay, MapSettings, Sidecar, Smoother, StudentScore};

pub const MANIFEST_FILE: &str = "run_manifest.json";
const ANNOTATIONS_FILE: &str = "annotations.jsonl";
const CROPS_DIR: &str = "crops";

#[derive(Debug, Parser)]
#[command(name = "wits", version, about = "Classroom engagement recognition toolkit")]
pub struct Cli {
    /// Root seed for every random stream.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Preset (`tiny`, `alexnet`), TOML/JSON config file, or a run manifest.
    #[arg(long, global = true)]
    pub config: Option<String>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic annotated dataset with crops.
    Synth(SynthArgs),
    /// Apply the labelling cascade to an annotation file.
    Label {
        annotations: PathBuf,
    },
    /// Train a classifier on a random split and report held-out accuracy.
    Train {
        #[arg(value_parser = parse_kind)]
        classifier: ClassifierKind,
        #[arg(long)]
        data: PathBuf,
        /// Frames per image cube.
        #[arg(long, default_value_t = 1)]
        frames: usize,
        #[arg(long)]
        iterations: Option<usize>,
    },
    /// Run an evaluation protocol, or score a saved model on a dataset.
    Eval {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_parser = parse_protocol, conflicts_with = "model")]
        protocol: Option<Protocol>,
        #[arg(long, value_parser = parse_kind, default_value = "cnn")]
        classifier: ClassifierKind,
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Render interest-map frames from a score file or a model.
    Render(RenderArgs),
    /// Check a report file and print it as tables.
    Report {
        report: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub subjects: Option<usize>,
    /// Frames per subject.
    #[arg(long)]
    pub frames: Option<usize>,
    #[arg(long)]
    pub lectures: Option<u32>,
    #[arg(long)]
    pub crop_size: Option<u32>,
    #[arg(long)]
    pub overlap: Option<f64>,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    /// JSON lines, one array of student scores per frame.
    #[arg(long, conflicts_with_all = ["model", "data"])]
    pub scores: Option<PathBuf>,
    #[arg(long, requires = "data")]
    pub model: Option<PathBuf>,
    #[arg(long, requires = "model")]
    pub data: Option<PathBuf>,
    /// Opaque PNG drawn under every frame.
    #[arg(long)]
    pub background: Option<PathBuf>,
    #[arg(long)]
    pub width: Option<u32>,
    #[arg(long)]
    pub height: Option<u32>,
    /// Render at most this many frames.
    #[arg(long)]
    pub limit: Option<usize>,
}

fn parse_kind(s: &str) -> std::result::Result<ClassifierKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_protocol(s: &str) -> std::result::Result<Protocol, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Everything a run can be configured with.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub synth: SyntheticConfig,
    pub protocol: ProtocolConfig,
    pub map: MapSettings,
}

impl RunConfig {
    pub fn load(spec: &str) -> Result<RunConfig> {
        if spec == "tiny" || spec == "alexnet" {
            let protocol = ProtocolConfig { classifier: ClassifierConfig::preset(spec)?, ..ProtocolConfig::default() };
            return Ok(RunConfig { protocol, ..RunConfig::default() });
        }
        let path = Path::new(spec);
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        if path.extension().is_some_and(|e| e == "toml") {
            return toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())));
        }
        let value: serde_json::Value = serde_json::from_str(&text)?;
        if value.get("tool").and_then(|t| t.as_str()) == Some("wits") {
            let manifest: RunManifest = serde_json::from_value(value)?;
            return Ok(manifest.config);
        }
        Ok(serde_json::from_value(value)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub args: Vec<String>,
    pub seed: u64,
    pub workers: Option<usize>,
    pub config: RunConfig,
    pub inputs: Vec<PathBuf>,
    /// SHA-256 of every output file, keyed by path relative to the output directory.
    pub outputs: BTreeMap<String, String>,
    pub duration_secs: f64,
}

/// Output directory under construction.
struct Stage {
    dir: tempfile::TempDir,
    out: PathBuf,
}

impl Stage {
    fn new(out: &Path) -> Result<Stage> {
        let parent = match out.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        };
        fs::create_dir_all(&parent).map_err(|e| Error::io(&parent, e))?;
        let dir = tempfile::Builder::new().prefix(".wits-stage-").tempdir_in(&parent).map_err(|e| Error::io(&parent, e))?;
        Ok(Stage { dir, out: out.to_path_buf() })
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.dir.path().join(rel)
    }

    fn write(&self, rel: &str, bytes: &[u8]) -> Result<()> {
        let path = self.path(rel);
        if let Some(p) = path.parent() {
            fs::create_dir_all(p).map_err(|e| Error::io(p, e))?;
        }
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))
    }

    fn write_json<T: Serialize>(&self, rel: &str, value: &T) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.write(rel, &bytes)
    }

    fn hashes(&self) -> Result<BTreeMap<String, String>> {
        let mut out = BTreeMap::new();
        hash_tree(self.dir.path(), self.dir.path(), &mut out)?;
        Ok(out)
    }

    fn commit(self) -> Result<()> {
        if !self.out.exists() {
            let staged = self.dir.keep();
            return fs::rename(&staged, &self.out).map_err(|e| Error::io(&self.out, e));
        }
        let entries = fs::read_dir(self.dir.path()).map_err(|e| Error::io(self.dir.path(), e))?;
        for entry in entries {
            let entry = entry.map_err(|e| Error::io(self.dir.path(), e))?;
            let dest = self.out.join(entry.file_name());
            if dest.is_dir() {
                fs::remove_dir_all(&dest).map_err(|e| Error::io(&dest, e))?;
            }
            fs::rename(entry.path(), &dest).map_err(|e| Error::io(&dest, e))?;
        }
        Ok(())
    }
}

/// SHA-256 of every file under `dir`, keyed by `/`-separated relative path.
pub fn hash_tree(root: &Path, dir: &Path, out: &mut BTreeMap<String, String>) -> Result<()> {
    let mut entries: Vec<_> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .collect::<std::io::Result<_>>()
        .map_err(|e| Error::io(dir, e))?;
    entries.sort_by_key(|e| e.file_name());
    for entry in entries {
        let path = entry.path();
        if path.is_dir() {
            hash_tree(root, &path, out)?;
        } else {
            let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
            let rel = path.strip_prefix(root).expect("under root").components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>();
            out.insert(rel.join("/"), format!("{:x}", Sha256::digest(&bytes)));
        }
    }
    Ok(())
}

pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let records = load_annotations(&dir.join(ANNOTATIONS_FILE), &LoadOptions::default())?;
    let crops = CropStore::load_dir(&dir.join(CROPS_DIR))?;
    Ok(Dataset { records, crops })
}

#[derive(Serialize)]
struct LabelLine<'a> {
    lecture_id: u32,
    subject_id: &'a str,
    frame_index: u64,
    label: EngagementLabel,
    rule: Rule,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEvaluation {
    pub model: PathBuf,
    pub frames: usize,
    pub samples: usize,
    pub confusion: ConfusionMatrix,
    pub accuracy: f64,
}

struct Context<'a> {
    cli: &'a Cli,
    args: Vec<String>,
    config: RunConfig,
    started: Instant,
}

impl Context<'_> {
    fn stage(&self) -> Result<Stage> {
        let out = self.cli.out.as_deref().ok_or_else(|| Error::Usage("this command needs --out".into()))?;
        Stage::new(out)
    }

    fn finish(&self, stage: Stage, command: &str, inputs: Vec<PathBuf>) -> Result<()> {
        let manifest = RunManifest {
            tool: "wits".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            args: self.args.clone(),
            seed: self.config.protocol.seed,
            workers: self.cli.workers,
            config: self.config.clone(),
            inputs,
            outputs: stage.hashes()?,
            duration_secs: self.started.elapsed().as_secs_f64(),
        };
        stage.write_json(MANIFEST_FILE, &manifest)?;
        stage.commit()
    }
}

fn synth(ctx: &Context) -> Result<()> {
    let cfg = &ctx.config.synth;
    let (records, crops) = generate_synthetic(cfg)?;
    let stage = ctx.stage()?;
    save_annotations(&stage.path(ANNOTATIONS_FILE), &records)?;
    crops.save_dir(&stage.path(CROPS_DIR))?;
    let stats = RuleStats::from_rules(records.iter().map(|r| r.deciding_rule()));
    println!(
        "{} subjects x {} frames: {} Interested, {} NotInterested",
        cfg.subjects, cfg.frames_per_subject, stats.interested, stats.not_interested
    );
    ctx.finish(stage, "synth", vec![])
}

fn label(ctx: &Context, annotations: &Path) -> Result<()> {
    let records = load_annotations(annotations, &LoadOptions::default())?;
    let mut lines = String::new();
    for r in &records {
        let line = LabelLine {
            lecture_id: r.lecture_id,
            subject_id: &r.subject_id,
            frame_index: r.frame_index,
            label: r.label(),
            rule: r.deciding_rule(),
        };
        lines.push_str(&serde_json::to_string(&line)?);
        lines.push('\n');
    }
    let stats = RuleStats::from_rules(records.iter().map(|r| r.deciding_rule()));
    println!("{:<16}{:>10}", "rule", "count");
    for (rule, count) in &stats.by_rule {
        println!("{:<16}{:>10}", format!("{rule:?}"), count);
    }
    println!("{:<16}{:>10}\n{:<16}{:>10}", "Interested", stats.interested, "NotInterested", stats.not_interested);
    let stage = ctx.stage()?;
    stage.write("labels.jsonl", lines.as_bytes())?;
    stage.write_json("label_stats.json", &stats)?;
    ctx.finish(stage, "label", vec![annotations.to_path_buf()])
}

fn train(ctx: &Context, kind: ClassifierKind, data_dir: &Path, frames: usize) -> Result<()> {
    let data = load_dataset(data_dir)?;
    let config = &ctx.config.protocol;
    let (model, run) = train_and_evaluate(kind, &data, frames, config)?;
    if let Trained::Cnn(m) = &model {
        let batch = config.classifier.train.batch_size;
        println!(
            "trained {} iterations of batch {batch}, about {:.1} passes over {} training images",
            m.iteration,
            (m.iteration * batch) as f64 / run.train_size as f64,
            run.train_size
        );
    }
    let report = ProtocolReport::assemble(Protocol::RandomSplit, kind, config, &data, vec![run], vec![])?;
    print!("{}", render_text(&report));
    let stage = ctx.stage()?;
    let name = match kind {
        ClassifierKind::Cnn => "model.wnet",
        ClassifierKind::Svm => "model.wsvm",
    };
    model.save(&stage.path(name))?;
    stage.write_json("report.json", &report)?;
    stage.write("report.txt", render_text(&report).as_bytes())?;
    ctx.finish(stage, "train", vec![data_dir.to_path_buf()])
}

fn score_model(model: &Trained, data: &Dataset) -> Result<(usize, ConfusionMatrix)> {
    let frames = model.frames();
    let (w, h) = model.input_size();
    let resized;
    let crops = if data.crops.size() == (w, h) {
        &data.crops
    } else {
        resized = data.crops.resized(w, h);
        &resized
    };
    let samples = tiled_samples(&data.records, frames);
    let mut cm = ConfusionMatrix::default();
    for chunk in samples.chunks(256) {
        let cubes = chunk
            .iter()
            .map(|s| crate::dataset::sample_cube(s, &data.records, crops))
            .collect::<Result<Vec<_>>>()?;
        let truth: Vec<bool> = chunk.iter().map(|s| s.label == EngagementLabel::Interested).collect();
        cm += ConfusionMatrix::from_predictions(&truth, &model.predict(&cubes)?);
    }
    Ok((samples.len(), cm))
}

fn eval(ctx: &Context, data_dir: &Path, protocol: Option<Protocol>, kind: ClassifierKind, model_path: Option<&Path>) -> Result<()> {
    let data = load_dataset(data_dir)?;
    let stage = ctx.stage()?;
    let mut inputs = vec![data_dir.to_path_buf()];
    match (protocol, model_path) {
        (_, Some(path)) => {
            let model = Trained::load(path)?;
            let (samples, confusion) = score_model(&model, &data)?;
            let accuracy = confusion.accuracy()?;
            println!("{samples} samples, accuracy {:.2}%", 100.0 * accuracy);
            let eval = ModelEvaluation { model: path.to_path_buf(), frames: model.frames(), samples, confusion, accuracy };
            stage.write_json("eval.json", &eval)?;
            inputs.push(path.to_path_buf());
        }
        (Some(p), None) => {
            let report = run_protocol(p, kind, &data, &ctx.config.protocol)?;
            let text = render_text(&report);
            print!("{text}");
            stage.write_json("report.json", &report)?;
            stage.write("report.txt", text.as_bytes())?;
        }
        (None, None) => return Err(Error::Usage("eval needs --protocol or --model".into())),
    }
    ctx.finish(stage, "eval", inputs)
}

fn read_score_file(path: &Path) -> Result<Vec<Vec<StudentScore>>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse { path: path.to_path_buf(), line: i + 1, message: e.to_string() })
        })
        .collect()
}

/// Disengagement of every student in each frame of the configured lecture.
fn model_scores(model: &Trained, data: &Dataset, lecture: u32) -> Result<Vec<Vec<StudentScore>>> {
    if model.frames() != 1 {
        return Err(Error::Shape(format!("rendering needs a single-frame model, got {} frames", model.frames())));
    }
    let (w, h) = model.input_size();
    let crops = if data.crops.size() == (w, h) { data.crops.clone() } else { data.crops.resized(w, h) };
    let mut by_frame: BTreeMap<u64, Vec<&AnnotationRecord>> = BTreeMap::new();
    for r in data.records.iter().filter(|r| r.lecture_id == lecture) {
        by_frame.entry(r.frame_index).or_default().push(r);
    }
    by_frame
        .values()
        .map(|recs| {
            let cubes = recs.iter().map(|r| build_cube(&[*r], 1, &crops)).collect::<Result<Vec<_>>>()?;
            let d = model.disengagement(&cubes)?;
            Ok(recs
                .iter()
                .zip(d)
                .map(|(r, d)| StudentScore { subject_id: r.subject_id.clone(), bbox: r.bbox, disengagement: d.clamp(0.0, 1.0) })
                .collect())
        })
        .collect()
}

fn render(ctx: &Context, a: &RenderArgs) -> Result<()> {
    let settings = &ctx.config.map;
    settings.validate()?;
    let mut inputs = Vec::new();
    let mut frames = match (&a.scores, &a.model, &a.data) {
        (Some(path), _, _) => {
            inputs.push(path.clone());
            read_score_file(path)?
        }
        (None, Some(model), Some(data)) => {
            inputs.extend([model.clone(), data.clone()]);
            model_scores(&Trained::load(model)?, &load_dataset(data)?, ctx.config.protocol.lecture)?
        }
        _ => return Err(Error::Usage("render needs --scores, or --model with --data".into())),
    };
    if let Some(n) = a.limit {
        frames.truncate(n);
    }
    let background = match &a.background {
        Some(p) => {
            inputs.push(p.clone());
            Some(image::open(p)?.to_rgb8())
        }
        None => None,
    };
    let (width, height) = match &background {
        Some(bg) => (bg.width(), bg.height()),
        None => (a.width.unwrap_or(ctx.config.synth.frame_width), a.height.unwrap_or(ctx.config.synth.frame_height)),
    };
    let stage = ctx.stage()?;
    let mut smoother = Smoother::new(settings.tau);
    let mut sidecar = String::new();
    for (i, scores) in frames.iter().enumerate() {
        let smoothed = smoother.update(scores);
        let img = match &background {
            Some(bg) => render_onto(bg, &smoothed, settings)?,
            None => render_overlay(width, height, &smoothed, settings)?,
        };
        stage.write(&format!("frames/frame_{i:05}.png"), &encode_png(&img)?)?;
        let entry = Sidecar { frame: i, width, height, settings: settings.clone(), scores: smoothed };
        sidecar.push_str(&serde_json::to_string(&entry)?);
        sidecar.push('\n');
    }
    stage.write("scores.jsonl", sidecar.as_bytes())?;
    println!("rendered {} frames at {width}x{height}", frames.len());
    ctx.finish(stage, "render", inputs)
}

fn report(ctx: &Context, path: &Path) -> Result<()> {
    let report: ProtocolReport = serde_json::from_slice(&fs::read(path).map_err(|e| Error::io(path, e))?)?;
    report.verify()?;
    let text = render_text(&report);
    print!("{text}");
    if ctx.cli.out.is_some() {
        let stage = ctx.stage()?;
        stage.write("report.txt", text.as_bytes())?;
        ctx.finish(stage, "report", vec![path.to_path_buf()])?;
    }
    Ok(())
}

/// Defaults, then the config file, then flags.
fn resolve(cli: &Cli) -> Result<RunConfig> {
    let mut config = match &cli.config {
        Some(spec) => RunConfig::load(spec)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.synth.seed = seed;
        config.protocol.seed = seed;
    }
    match &cli.command {
        Command::Synth(a) => {
            let s = &mut config.synth;
            s.subjects = a.subjects.unwrap_or(s.subjects);
            s.frames_per_subject = a.frames.unwrap_or(s.frames_per_subject);
            s.lectures = a.lectures.unwrap_or(s.lectures);
            s.crop_size = a.crop_size.unwrap_or(s.crop_size);
            s.overlap = a.overlap.unwrap_or(s.overlap);
        }
        Command::Train { iterations: Some(n), .. } => config.protocol.classifier.train.iterations = *n,
        _ => {}
    }
    Ok(config)
}

pub fn run(cli: &Cli, args: Vec<String>) -> Result<()> {
    let config = resolve(cli)?;
    let ctx = Context { cli, args, config, started: Instant::now() };
    let go = || match &cli.command {
        Command::Synth(_) => synth(&ctx),
        Command::Label { annotations } => label(&ctx, annotations),
        Command::Train { classifier, data, frames, .. } => train(&ctx, *classifier, data, *frames),
        Command::Eval { data, protocol, classifier, model } => eval(&ctx, data, *protocol, *classifier, model.as_deref()),
        Command::Render(a) => render(&ctx, a),
        Command::Report { report: path } => report(&ctx, path),
    };
    match cli.workers {
        Some(0) => Err(Error::Usage("--workers must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(e.to_string()))?
            .install(go),
        None => go(),
    }
}

/// Parses `args`, runs, and returns the process exit code.
pub fn main_with<I: IntoIterator<Item = OsString>>(args: I) -> i32 {
    let args: Vec<OsString> = args.into_iter().collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { crate::ExitCode::Usage as i32 } else { 0 };
        }
    };
    let args = args.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect();
    match run(&cli, args) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code() as i32
        }
    }
}

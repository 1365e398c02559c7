use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use acf_core::attraction::{grid_csv, sample_grid, AttractionTarget, Vec2};
use acf_core::config::Settings;
use acf_core::corpus::{parse_actions, records_from_events, write_actions, ActionRecord, EncodedCorpus};
use acf_core::events::{parse_event_log, write_event_log};
use acf_core::geom::Rect;
use acf_core::model::{
    evaluate, load_checkpoint, metrics_csv, save_checkpoint, train, CellKind, TrainingConfig,
};
use acf_core::patch::{
    locate_on_screen, ClickResolver, DetectorBox, ImagePatch, PatchDb, SharedPatchDb, StaticDetector,
};
use acf_core::synth::{
    bundled_names, bundled_profile, generate_corpus, oracle_accuracy_with, render_scene, WorkflowProfile,
};
use acf_core::vocab::{build_vocabulary, ActionVocabulary};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::service::{self, AppState};

/// Failure of a subcommand. Usage errors exit with 2, data errors with 1.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Data(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Data(_) => 1,
        }
    }

    /// `error: usage: ...` or `error: data: ...` on one line.
    pub fn line(&self) -> String {
        let (kind, msg) = match self {
            Failure::Usage(m) => ("usage", m),
            Failure::Data(m) => ("data", m),
        };
        format!("error: {kind}: {}", msg.replace(['\n', '\r'], " "))
    }
}

impl From<acf_core::Error> for Failure {
    fn from(e: acf_core::Error) -> Self {
        Failure::Data(e.to_string())
    }
}

type CmdResult = Result<(), Failure>;

fn read_text(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> CmdResult {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Failure::Data(format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, bytes).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

fn read_ppm(path: &Path) -> Result<ImagePatch, Failure> {
    let bytes = fs::read(path).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
    ImagePatch::from_ppm(&bytes).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

fn parse_pair(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or("expected X,Y")?;
    Ok((a.trim().parse().map_err(|_| "bad X")?, b.trim().parse().map_err(|_| "bad Y")?))
}

#[derive(Debug, Parser)]
#[command(name = "acf", version, about = "Next user action forecasting toolkit")]
pub struct Cli {
    /// Config file (flat key = value); defaults to $ACF_CONFIG.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Tokenize event logs into an actions file, growing the patch store.
    Ingest(IngestArgs),
    /// Build the action vocabulary from actions files.
    BuildVocab(BuildVocabArgs),
    /// Train a model; writes a checkpoint and per-epoch metrics CSV.
    Train(TrainArgs),
    /// Top-1 accuracy of a checkpoint on an actions file.
    Eval(EvalArgs),
    /// Generate synthetic event logs from a workflow profile.
    Simulate(SimulateArgs),
    /// Export a workflow profile, its scene and oracle accuracy.
    RenderProfile(RenderProfileArgs),
    /// Find a patch on a screenshot.
    Locate(LocateArgs),
    /// Sample the cursor attraction field on a grid as CSV.
    FieldGrid(FieldGridArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Event log (JSONL, blank line between sessions).
    #[arg(long)]
    pub events: PathBuf,
    /// Output actions file.
    #[arg(long)]
    pub out: PathBuf,
    /// Patch store directory; overrides `patch_dir` from the config.
    #[arg(long)]
    pub patch_dir: Option<PathBuf>,
    /// Directory that screenshot names in the log are relative to
    /// (default: the log's directory).
    #[arg(long)]
    pub shots: Option<PathBuf>,
    /// Detector output: JSON object mapping screenshot name to widget boxes.
    #[arg(long)]
    pub boxes: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BuildVocabArgs {
    /// Actions files.
    #[arg(long = "actions", required = true, num_args = 1..)]
    pub actions: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Patch store whose click counts decide which buttons are kept.
    #[arg(long)]
    pub patch_dir: Option<PathBuf>,
    #[arg(long)]
    pub min_clicks: Option<u64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum CellArg {
    Gru,
    Lstm,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub val: PathBuf,
    #[arg(long)]
    pub vocab: PathBuf,
    /// Checkpoint output.
    #[arg(long)]
    pub out: PathBuf,
    /// Metrics CSV output.
    #[arg(long)]
    pub metrics: PathBuf,
    #[arg(long, value_enum, default_value = "gru")]
    pub cell: CellArg,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub n_past: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Record wall-clock seconds per epoch (makes the CSV non-reproducible).
    #[arg(long)]
    pub wallclock: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub actions: PathBuf,
    #[arg(long)]
    pub vocab: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Per-position CSV (session,position,predicted,actual,correct).
    #[arg(long)]
    pub positions: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Bundled profile name or path to a profile JSON.
    #[arg(long)]
    pub profile: String,
    #[arg(long, default_value_t = 1)]
    pub sessions: usize,
    #[arg(long)]
    pub length: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Event log output.
    #[arg(long)]
    pub out: PathBuf,
    /// Directory for the sessions' screenshots (PPM).
    #[arg(long)]
    pub shots: Option<PathBuf>,
    /// Exact detector boxes per screenshot, for `ingest --boxes`.
    #[arg(long)]
    pub boxes: Option<PathBuf>,
    /// Ground-truth actions file; buttons carry scene ids.
    #[arg(long)]
    pub truth: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RenderProfileArgs {
    #[arg(long)]
    pub profile: String,
    /// Write the profile as JSON.
    #[arg(long)]
    pub json: Option<PathBuf>,
    /// Write the profile's scene as PPM.
    #[arg(long)]
    pub scene: Option<PathBuf>,
    /// Monte Carlo steps for the oracle accuracy; 0 skips it.
    #[arg(long, default_value_t = 200_000)]
    pub oracle_steps: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct LocateArgs {
    #[arg(long)]
    pub patch: PathBuf,
    #[arg(long)]
    pub screen: PathBuf,
    /// Defaults to `ncc_threshold` from the config.
    #[arg(long)]
    pub threshold: Option<f64>,
}

#[derive(Debug, Args)]
pub struct FieldGridArgs {
    /// JSON array of {"rect": {"x","y","w","h"}, "confidence"}.
    #[arg(long)]
    pub targets: PathBuf,
    #[arg(long, value_parser = parse_pair, default_value = "0,0")]
    pub origin: (f64, f64),
    #[arg(long)]
    pub cols: usize,
    #[arg(long)]
    pub rows: usize,
    #[arg(long, default_value_t = 20.0)]
    pub step: f64,
    /// CSV output; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub bind: Option<String>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    #[arg(long)]
    pub patch_dir: Option<PathBuf>,
    #[arg(long)]
    pub static_dir: Option<PathBuf>,
}

pub fn run(cli: Cli) -> CmdResult {
    let settings = Settings::load(cli.config.as_deref())?;
    match cli.command {
        Command::Ingest(a) => ingest(&settings, a),
        Command::BuildVocab(a) => build_vocab(&settings, a),
        Command::Train(a) => train_cmd(a),
        Command::Eval(a) => eval(a),
        Command::Simulate(a) => simulate(a),
        Command::RenderProfile(a) => render_profile(a),
        Command::Locate(a) => locate(&settings, a),
        Command::FieldGrid(a) => field_grid(&settings, a),
        Command::Serve(a) => serve(settings, a),
    }
}

/// A bundled name (`cycle3`, `cycle3.json`) or a profile file.
pub fn load_profile(name: &str) -> Result<WorkflowProfile, Failure> {
    let path = Path::new(name);
    if path.is_file() {
        return Ok(WorkflowProfile::from_json(&read_text(path)?)?);
    }
    bundled_profile(name.strip_suffix(".json").unwrap_or(name)).ok_or_else(|| {
        Failure::Usage(format!("no profile file {name:?} and no bundled profile of that name ({})", bundled_names().join(", ")))
    })
}

fn read_actions(path: &Path) -> Result<Vec<Vec<ActionRecord>>, Failure> {
    parse_actions(&read_text(path)?).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

fn read_vocab(path: &Path) -> Result<ActionVocabulary, Failure> {
    ActionVocabulary::from_json(&read_text(path)?).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

type BoxFile = BTreeMap<String, Vec<DetectorBox>>;

fn ingest(settings: &Settings, a: IngestArgs) -> CmdResult {
    let patch_dir = a
        .patch_dir
        .or_else(|| settings.patch_dir.clone())
        .ok_or_else(|| Failure::Usage("no patch store: pass --patch-dir or set patch_dir".into()))?;
    let sessions = parse_event_log(&read_text(&a.events)?)?;
    let boxes: BoxFile = match &a.boxes {
        Some(p) => serde_json::from_str(&read_text(p)?).map_err(|e| Failure::Data(format!("{}: {e}", p.display())))?,
        None => BoxFile::new(),
    };
    let shots_dir = a
        .shots
        .clone()
        .unwrap_or_else(|| a.events.parent().map(Path::to_path_buf).unwrap_or_default());

    let mut shots: HashMap<String, ImagePatch> = HashMap::new();
    for ev in sessions.iter().flatten() {
        if let Some(name) = &ev.screenshot {
            if boxes.contains_key(name) && !shots.contains_key(name) {
                shots.insert(name.clone(), read_ppm(&shots_dir.join(name))?);
            }
        }
    }

    let db = SharedPatchDb::new(PatchDb::load(&patch_dir)?);
    let mut out = Vec::with_capacity(sessions.len());
    for events in &sessions {
        let records = records_from_events(events, |ev| {
            let name = ev.screenshot.as_ref()?;
            let shot = shots.get(name)?;
            let detector = StaticDetector { boxes: boxes[name].clone() };
            ClickResolver::new(detector, &db, settings.matching).resolve(shot, ev.cursor, ev.timestamp_ms)
        })?;
        out.push(records);
    }
    write_file(&a.out, write_actions(&out))?;
    let db = db.into_inner();
    db.save(&patch_dir)?;
    println!(
        "sessions={} actions={} patches={}",
        out.len(),
        out.iter().map(Vec::len).sum::<usize>(),
        db.len()
    );
    Ok(())
}

fn build_vocab(settings: &Settings, a: BuildVocabArgs) -> CmdResult {
    let mut sessions = Vec::new();
    for p in &a.actions {
        sessions.extend(read_actions(p)?);
    }
    let counts = match a.patch_dir.or_else(|| settings.patch_dir.clone()) {
        Some(dir) => PatchDb::load(&dir)?.click_counts(),
        None => HashMap::new(),
    };
    let min = a.min_clicks.unwrap_or(settings.min_click_count);
    let vocab = build_vocabulary(sessions.iter().flatten().map(|r| &r.action), &counts, min)
        .with_apps(sessions.iter().flatten().map(|r| r.context.app.clone()));
    write_file(&a.out, vocab.to_json())?;
    println!("actions={} apps={} hash={}", vocab.len(), vocab.app_count(), vocab.hash());
    Ok(())
}

fn train_cmd(a: TrainArgs) -> CmdResult {
    let vocab = read_vocab(&a.vocab)?;
    let tr = EncodedCorpus::encode(&read_actions(&a.train)?, &vocab);
    let va = EncodedCorpus::encode(&read_actions(&a.val)?, &vocab);
    let d = TrainingConfig::default();
    let cfg = TrainingConfig {
        cell: match a.cell {
            CellArg::Gru => CellKind::Gru,
            CellArg::Lstm => CellKind::Lstm,
        },
        hidden_size: a.hidden.unwrap_or(d.hidden_size),
        num_layers: a.layers.unwrap_or(d.num_layers),
        n_past: a.n_past.unwrap_or(d.n_past),
        learning_rate: a.lr.unwrap_or(d.learning_rate),
        batch_size: a.batch.unwrap_or(d.batch_size),
        epochs: a.epochs.unwrap_or(d.epochs),
        seed: a.seed,
        ..d
    };
    cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    let run = train(&tr, &va, &vocab, &cfg)?;
    save_checkpoint(&run.best, &a.out)?;
    write_file(&a.metrics, metrics_csv(&run.metrics, a.wallclock))?;
    let best = &run.metrics[run.best_epoch - 1];
    println!("best_epoch={} val_accuracy={:.6}", run.best_epoch, best.val_accuracy);
    Ok(())
}

fn eval(a: EvalArgs) -> CmdResult {
    let vocab = read_vocab(&a.vocab)?;
    let ck = load_checkpoint(&a.checkpoint)?;
    ck.check_vocab(&vocab)?;
    let corpus = EncodedCorpus::encode(&read_actions(&a.actions)?, &vocab);
    let ev = evaluate(&corpus, &ck.model, &vocab)?;
    if let Some(p) = &a.positions {
        let mut csv = String::from("session,position,predicted,actual,correct\n");
        for r in &ev.records {
            csv.push_str(&format!(
                "{},{},{},{},{}\n",
                r.session,
                r.position,
                vocab.label(r.predicted),
                vocab.label(r.actual),
                u8::from(r.correct)
            ));
        }
        write_file(p, csv)?;
    }
    println!("accuracy {:.6} ({}/{})", ev.accuracy, ev.correct, ev.total);
    Ok(())
}

fn simulate(a: SimulateArgs) -> CmdResult {
    if a.length < 1 || a.sessions < 1 {
        return Err(Failure::Usage("--length and --sessions must be at least 1".into()));
    }
    let profile = load_profile(&a.profile)?;
    let sessions = generate_corpus(&profile, a.sessions, a.length, a.seed)?;
    let logs: Vec<_> = sessions.iter().map(|s| s.events.clone()).collect();
    write_file(&a.out, write_event_log(&logs))?;
    if let Some(dir) = &a.shots {
        for s in &sessions {
            write_file(&dir.join(&s.shot), render_scene(&s.scene).to_ppm())?;
        }
    }
    if let Some(p) = &a.boxes {
        let file: BoxFile = sessions.iter().map(|s| (s.shot.clone(), s.scene.boxes())).collect();
        write_file(p, serde_json::to_string_pretty(&file).expect("boxes serialize"))?;
    }
    if let Some(p) = &a.truth {
        let truth = sessions.iter().map(|s| s.records()).collect::<acf_core::Result<Vec<_>>>()?;
        write_file(p, write_actions(&truth))?;
    }
    println!("sessions={} events={}", sessions.len(), logs.iter().map(Vec::len).sum::<usize>());
    Ok(())
}

fn render_profile(a: RenderProfileArgs) -> CmdResult {
    let profile = load_profile(&a.profile)?;
    if let Some(p) = &a.json {
        write_file(p, profile.to_json())?;
    }
    if let Some(p) = &a.scene {
        write_file(p, render_scene(&profile.scene()).to_ppm())?;
    }
    let mut line = format!("states={} actions={}", profile.states.len(), profile.actions.len());
    if a.oracle_steps > 0 {
        let o = oracle_accuracy_with(&profile, a.oracle_steps, a.seed)?;
        line.push_str(&format!(" oracle_accuracy={:.5} std_error={:.5}", o.accuracy, o.std_error));
    }
    println!("{line}");
    Ok(())
}

#[derive(Debug, Serialize)]
struct LocateHit {
    x: i32,
    y: i32,
    w: usize,
    h: usize,
    score: f64,
}

fn locate(settings: &Settings, a: LocateArgs) -> CmdResult {
    let patch = read_ppm(&a.patch)?;
    let screen = read_ppm(&a.screen)?;
    let threshold = a.threshold.unwrap_or(settings.matching.threshold);
    let t0 = Instant::now();
    let hits = locate_on_screen(&patch, &screen, threshold)?;
    let ms = t0.elapsed().as_secs_f64() * 1000.0;
    let hits: Vec<LocateHit> = hits
        .iter()
        .map(|h| LocateHit { x: h.x, y: h.y, w: patch.width(), h: patch.height(), score: h.score })
        .collect();
    println!("{}", serde_json::json!({ "matches": hits, "locate_ms": ms }));
    Ok(())
}

#[derive(Debug, Deserialize)]
struct TargetSpec {
    rect: Rect,
    confidence: f64,
}

fn field_grid(settings: &Settings, a: FieldGridArgs) -> CmdResult {
    if !(a.step > 0.0 && a.step.is_finite()) {
        return Err(Failure::Usage("--step must be positive".into()));
    }
    let specs: Vec<TargetSpec> =
        serde_json::from_str(&read_text(&a.targets)?).map_err(|e| Failure::Data(format!("{}: {e}", a.targets.display())))?;
    let targets: Vec<AttractionTarget> = specs.iter().map(|t| AttractionTarget::from_rect(t.rect, t.confidence)).collect();
    for t in &targets {
        t.validate()?;
    }
    let samples = sample_grid(Vec2::new(a.origin.0, a.origin.1), a.cols, a.rows, a.step, &targets, &settings.field);
    let csv = grid_csv(&samples);
    match &a.out {
        Some(p) => write_file(p, csv),
        None => {
            print!("{csv}");
            Ok(())
        }
    }
}

fn serve(mut settings: Settings, a: ServeArgs) -> CmdResult {
    if let Some(b) = a.bind {
        settings.bind = b;
    }
    settings.checkpoint = a.checkpoint.or(settings.checkpoint);
    settings.vocab = a.vocab.or(settings.vocab);
    settings.patch_dir = a.patch_dir.or(settings.patch_dir);
    settings.static_dir = a.static_dir.or(settings.static_dir);
    let ck_path = settings.checkpoint.clone().ok_or_else(|| Failure::Usage("no checkpoint configured".into()))?;
    let vocab_path = settings.vocab.clone().ok_or_else(|| Failure::Usage("no vocabulary configured".into()))?;
    let checkpoint = load_checkpoint(&ck_path)?;
    let vocab = read_vocab(&vocab_path)?;
    let patches = match &settings.patch_dir {
        Some(dir) => PatchDb::load(dir)?,
        None => PatchDb::new(),
    };
    let state = Arc::new(AppState::new(settings, checkpoint, vocab, patches)?);
    let rt = tokio::runtime::Runtime::new().map_err(|e| Failure::Data(e.to_string()))?;
    rt.block_on(service::serve(state)).map_err(|e| Failure::Data(e.to_string()))
}

//! `dialogq` command implementations. [`run`] parses arguments, dispatches
//! and maps failures to exit codes: 0 success, 1 validation or usage error,
//! 2 I/O error.

use std::collections::HashSet;
use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use dialogq_annotation::{AnnotationService, ServiceError, Store};
use dialogq_core::aggregate::{DialogScore, Method, DEFAULT_THRESHOLD};
use dialogq_core::dataset::{read_labeled, split_by_use_case, write_labeled, LabeledDialog};
use dialogq_core::dialog::{parse_dialog_log, read_dialogs, sessionize, write_dialogs, Dialog, DEFAULT_GAP_SECONDS};
use dialogq_core::evaluate::evaluate;
use dialogq_core::features::encoder::DEFAULT_TEXT_DIM;
use dialogq_core::features::{EncoderConfig, DEFAULT_VOCAB_MAX};
use dialogq_core::metrics::attribute_correlations;
use dialogq_core::model::{select_and_train, BundleManifest, DqmModel, FeatureSettings, GridSpec, DEFAULT_FOLDS};
use dialogq_core::questionnaire::DialogAnnotation;
use dialogq_core::synth::{generate, PatternMix, SynthSpec};
use dialogq_core::tld::{load_scores, write_scores, HeuristicRuleTable, HeuristicScorer, TldScoreMap, TldScorer};
use dialogq_core::Error as CoreError;

pub const DEFAULT_SEED: u64 = 7;

#[derive(Debug, Parser)]
#[command(name = "dialogq", version, about = "Dialog quality estimation and annotation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Split a raw utterance log into dialogs (dialog v1 JSON lines).
    Segment(SegmentArgs),
    /// Aggregate turn scores into dialog scores with the baselines.
    Score(ScoreArgs),
    /// Train a DQM bundle with cross-validated grid selection.
    Train(TrainArgs),
    /// Score dialogs with a trained DQM bundle.
    Predict(PredictArgs),
    /// Compare baselines and DQM on a labeled test set.
    Evaluate(EvaluateArgs),
    /// Spearman correlation of questionnaire attributes with satisfaction.
    Correlate(CorrelateArgs),
    /// Within-one agreement over dual annotations in a store.
    Agreement(StoreArgs),
    /// Run the annotation HTTP service.
    Serve(ServeArgs),
    /// Export annotated dialogs as labeled training data.
    Export(ExportArgs),
    /// Generate a synthetic labeled corpus with turn scores.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct SegmentArgs {
    /// Raw utterance events, one JSON object per line.
    pub input: PathBuf,
    /// Inactivity gap in seconds; a longer gap starts a new dialog.
    #[arg(long, default_value_t = DEFAULT_GAP_SECONDS)]
    pub gap: i64,
    /// Output file (stdout when absent).
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Mean,
    Last,
    Union,
    Rising,
    All,
}

impl MethodArg {
    fn methods(self) -> Vec<Method> {
        match self {
            MethodArg::Mean => vec![Method::Mean],
            MethodArg::Last => vec![Method::LastTurn],
            MethodArg::Union => vec![Method::Union],
            MethodArg::Rising => vec![Method::RisingLinear],
            MethodArg::All => Method::BASELINES.to_vec(),
        }
    }
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    /// Dialogs (dialog v1 or labeled dialogs).
    #[arg(long, env = "DIALOGQ_DIALOGS")]
    pub dialogs: PathBuf,
    /// Turn scores (tld-scores v1). Without it the phrase heuristic is used.
    #[arg(long, env = "DIALOGQ_SCORES")]
    pub scores: Option<PathBuf>,
    /// Heuristic rule table (JSON); only used without --scores.
    #[arg(long)]
    pub rules: Option<PathBuf>,
    /// Write the heuristic turn scores to this file.
    #[arg(long)]
    pub write_scores: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = MethodArg::All)]
    pub method: MethodArg,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    pub threshold: f64,
    /// Print an aligned table instead of JSON lines.
    #[arg(long)]
    pub table: bool,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Grid file (JSON); defaults to trees {100,300} x depth {8,16,none} x leaf {1,5}.
    #[arg(long)]
    pub grid: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_FOLDS)]
    pub folds: usize,
    /// Hashed turn-encoding width.
    #[arg(long, default_value_t = DEFAULT_TEXT_DIM)]
    pub text_dim: usize,
    #[arg(long, default_value_t = DEFAULT_VOCAB_MAX)]
    pub vocab_max: usize,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Labeled training dialogs.
    #[arg(long, env = "DIALOGQ_TRAIN")]
    pub train: PathBuf,
    /// Turn scores covering the training dialogs (repeatable).
    #[arg(long, required = true)]
    pub scores: Vec<PathBuf>,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Bundle directory to write.
    #[arg(long, env = "DIALOGQ_MODEL")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long, env = "DIALOGQ_MODEL")]
    pub model: PathBuf,
    #[arg(long, env = "DIALOGQ_DIALOGS")]
    pub dialogs: PathBuf,
    #[arg(long, required = true)]
    pub scores: Vec<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    pub threshold: f64,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Labeled test dialogs.
    #[arg(long)]
    pub test: PathBuf,
    /// Turn scores for the test (and, with --train, training) dialogs.
    #[arg(long, required = true)]
    pub scores: Vec<PathBuf>,
    /// Evaluate an existing bundle.
    #[arg(long, conflicts_with = "train", env = "DIALOGQ_MODEL")]
    pub model: Option<PathBuf>,
    /// Train on this labeled file first.
    #[arg(long)]
    pub train: Option<PathBuf>,
    #[command(flatten)]
    pub model_args: ModelArgs,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    pub threshold: f64,
    /// Write the eval-report v1 JSON here.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CorrelateArgs {
    /// Annotation store to read.
    #[arg(long, conflicts_with = "annotations", required_unless_present = "annotations", env = "DIALOGQ_STORE")]
    pub store: Option<PathBuf>,
    /// Dialog annotations, one JSON object per line.
    #[arg(long)]
    pub annotations: Option<PathBuf>,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct StoreArgs {
    #[arg(long, env = "DIALOGQ_STORE")]
    pub store: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, env = "DIALOGQ_STORE")]
    pub store: PathBuf,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: SocketAddr,
    /// Built UI assets to serve alongside the API.
    #[arg(long, env = "DIALOGQ_UI_DIR")]
    pub ui: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long, env = "DIALOGQ_STORE")]
    pub store: PathBuf,
    /// Labeled output (the training side when splitting).
    #[arg(short, long)]
    pub output: PathBuf,
    /// Hold out this fraction of every use case.
    #[arg(long, requires = "test_output")]
    pub test_fraction: Option<f64>,
    #[arg(long)]
    pub test_output: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 2000)]
    pub n: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Fractions per pattern, e.g. `fatal_turn=0.25,rephrase_loop=0.25,refinement_chain=0.25,clean=0.25`.
    #[arg(long)]
    pub mix: Option<String>,
    /// Labeled dialogs output.
    #[arg(long)]
    pub dialogs: PathBuf,
    /// Turn scores output.
    #[arg(long)]
    pub scores: PathBuf,
}

/// Marks a failure as an I/O problem (exit 2).
#[derive(Debug)]
struct IoFailure(String);

impl std::fmt::Display for IoFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for IoFailure {}

fn is_io(err: &anyhow::Error) -> bool {
    err.chain().any(|e| {
        e.is::<io::Error>()
            || e.is::<IoFailure>()
            || matches!(e.downcast_ref::<CoreError>(), Some(CoreError::Io(_)))
            || matches!(e.downcast_ref::<ServiceError>(), Some(ServiceError::Io(_)))
    })
}

pub fn exit_code(err: &anyhow::Error) -> i32 {
    if is_io(err) {
        2
    } else {
        1
    }
}

fn open(path: &Path) -> anyhow::Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| IoFailure(format!("{}: {e}", path.display())).into())
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| IoFailure(format!("{}: {e}", parent.display())))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| IoFailure(format!("{}: {e}", path.display())).into())
}

fn output(path: Option<&Path>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(create(p)?),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn read_dialog_file(path: &Path) -> anyhow::Result<Vec<Dialog>> {
    read_dialogs(open(path)?).with_context(|| format!("reading dialogs from {}", path.display()))
}

fn read_labeled_file(path: &Path) -> anyhow::Result<Vec<LabeledDialog>> {
    read_labeled(open(path)?).with_context(|| format!("reading labeled dialogs from {}", path.display()))
}

/// Loads every score file and keeps the scores for `dialogs`.
fn read_scores(paths: &[PathBuf], dialogs: &[Dialog]) -> anyhow::Result<TldScoreMap<f64>> {
    let mut all = Vec::new();
    for p in paths {
        open(p)?
            .read_to_end(&mut all)
            .map_err(|e| IoFailure(format!("{}: {e}", p.display())))?;
        if !all.ends_with(b"\n") {
            all.push(b'\n');
        }
    }
    load_scores(all.as_slice(), dialogs).context("loading turn scores")
}

fn model_settings(args: &ModelArgs) -> anyhow::Result<(FeatureSettings, GridSpec)> {
    let grid = match &args.grid {
        Some(p) => serde_json::from_reader(open(p)?).with_context(|| format!("parsing grid {}", p.display()))?,
        None => GridSpec::default(),
    };
    Ok((
        FeatureSettings {
            encoder: EncoderConfig::Hashed { dim: args.text_dim },
            vocab_max: args.vocab_max,
        },
        grid,
    ))
}

fn train_bundle(
    rows: &[LabeledDialog],
    scores: &TldScoreMap<f64>,
    args: &ModelArgs,
) -> anyhow::Result<(DqmModel<f64>, BundleManifest)> {
    let (settings, grid) = model_settings(args)?;
    let points = grid.expand(args.seed);
    let sel = select_and_train(rows, scores, settings, &points, args.folds, args.seed).context("training DQM")?;
    let mut manifest = BundleManifest::new(sel.training_fingerprint, rows.len());
    manifest.selected = Some(sel.cv.best.clone());
    manifest.cv_mean_f1 = sel.cv.mean_f1;
    Ok((sel.model, manifest))
}

fn segment(a: &SegmentArgs) -> anyhow::Result<()> {
    let events = parse_dialog_log(open(&a.input)?).context("parsing utterance log")?;
    let dialogs = sessionize(events, a.gap)?;
    let mut out = output(a.output.as_deref())?;
    write_dialogs(&mut out, &dialogs)?;
    out.flush()?;
    Ok(())
}

fn score(a: &ScoreArgs) -> anyhow::Result<()> {
    let dialogs = read_dialog_file(&a.dialogs)?;
    let scores = match &a.scores {
        Some(p) => read_scores(std::slice::from_ref(p), &dialogs)?,
        None => {
            let rules = match &a.rules {
                Some(p) => HeuristicRuleTable::from_json(
                    &fs::read_to_string(p).map_err(|e| IoFailure(format!("{}: {e}", p.display())))?,
                )?,
                None => HeuristicRuleTable::default(),
            };
            let scores: TldScoreMap<f64> = HeuristicScorer { rules }.score_all(&dialogs)?;
            if let Some(p) = &a.write_scores {
                let mut w = create(p)?;
                write_scores(&mut w, &scores)?;
                w.flush()?;
            }
            scores
        }
    };
    let methods = a.method.methods();
    let mut out = output(a.output.as_deref())?;
    if a.table {
        write!(out, "{:<24}", "dialog_id")?;
        for m in &methods {
            write!(out, " {:>14}", m.label())?;
        }
        writeln!(out)?;
    }
    for d in &dialogs {
        let turn_scores = scores.dialog_scores(d)?;
        if a.table {
            write!(out, "{:<24}", d.dialog_id)?;
        }
        for &m in &methods {
            let s = DialogScore::new(d.dialog_id.clone(), m, m.aggregate(&turn_scores)?, a.threshold);
            if a.table {
                write!(out, " {:>14.4}", s.score)?;
            } else {
                serde_json::to_writer(&mut out, &s)?;
                writeln!(out)?;
            }
        }
        if a.table {
            writeln!(out)?;
        }
    }
    out.flush()?;
    Ok(())
}

fn train(a: &TrainArgs) -> anyhow::Result<()> {
    let rows = read_labeled_file(&a.train)?;
    let dialogs: Vec<Dialog> = rows.iter().map(|r| r.dialog.clone()).collect();
    let scores = read_scores(&a.scores, &dialogs)?;
    let (model, manifest) = train_bundle(&rows, &scores, &a.model)?;
    model.save(&a.out, &manifest)?;
    eprintln!(
        "trained on {} dialogs; selected {:?}; bundle at {}",
        rows.len(),
        manifest.selected,
        a.out.display()
    );
    Ok(())
}

fn load_bundle(path: &Path) -> anyhow::Result<(DqmModel<f64>, BundleManifest)> {
    if !path.join("manifest.json").is_file() {
        return Err(IoFailure(format!("{}: no model bundle", path.display())).into());
    }
    DqmModel::load(path).with_context(|| format!("loading bundle {}", path.display()))
}

fn predict(a: &PredictArgs) -> anyhow::Result<()> {
    let (model, _) = load_bundle(&a.model)?;
    let dialogs = read_dialog_file(&a.dialogs)?;
    let scores = read_scores(&a.scores, &dialogs)?;
    let probs = model.predict_many(&dialogs, &scores)?;
    let mut out = output(a.output.as_deref())?;
    for (d, p) in dialogs.iter().zip(probs) {
        serde_json::to_writer(&mut out, &DialogScore::new(d.dialog_id.clone(), Method::Dqm, p, a.threshold))?;
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

/// Refuses train/test pairs that share a dialog or turn.
pub fn check_disjoint(train: &[LabeledDialog], test: &[Dialog]) -> anyhow::Result<()> {
    let dialog_ids: HashSet<&str> = train.iter().map(|r| r.dialog.dialog_id.as_str()).collect();
    let turn_ids: HashSet<&str> = train
        .iter()
        .flat_map(|r| r.dialog.turns.iter().map(|t| t.turn_id()))
        .collect();
    for d in test {
        if dialog_ids.contains(d.dialog_id.as_str()) {
            bail!("dialog {:?} appears in both train and test", d.dialog_id);
        }
        if let Some(t) = d.turns.iter().find(|t| turn_ids.contains(t.turn_id())) {
            bail!("turn {:?} appears in both train and test", t.turn_id());
        }
    }
    Ok(())
}

fn evaluate_cmd(a: &EvaluateArgs) -> anyhow::Result<()> {
    // Before training, the test file is read as plain dialogs (labels are
    // ignored) for the overlap check only.
    let model = match (&a.model, &a.train) {
        (Some(p), None) => Some(load_bundle(p)?.0),
        (None, Some(p)) => {
            let rows = read_labeled_file(p)?;
            let dialogs: Vec<Dialog> = rows.iter().map(|r| r.dialog.clone()).collect();
            let scores = read_scores(&a.scores, &dialogs)?;
            check_disjoint(&rows, &read_dialog_file(&a.test)?)?;
            Some(train_bundle(&rows, &scores, &a.model_args)?.0)
        }
        _ => None,
    };
    let test = read_labeled_file(&a.test)?;
    let dialogs: Vec<Dialog> = test.iter().map(|r| r.dialog.clone()).collect();
    let scores = read_scores(&a.scores, &dialogs)?;
    let probs = match &model {
        Some(m) => Some(m.predict_many(&dialogs, &scores)?),
        None => None,
    };
    let report = evaluate(&test, &scores, probs.as_deref(), a.threshold)?;
    print!("{}", report.to_table());
    if let Some(p) = &a.json {
        let mut w = create(p)?;
        serde_json::to_writer_pretty(&mut w, &report)?;
        writeln!(w)?;
        w.flush()?;
    }
    Ok(())
}

fn read_annotations(path: &Path) -> anyhow::Result<Vec<DialogAnnotation>> {
    let mut out = Vec::new();
    for (i, line) in open(path)?.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let a: DialogAnnotation =
            serde_json::from_str(&line).with_context(|| format!("{} line {}", path.display(), i + 1))?;
        out.push(a);
    }
    Ok(out)
}

fn open_store(path: &Path) -> anyhow::Result<AnnotationService> {
    Ok(AnnotationService::new(
        Store::open(path).with_context(|| format!("opening store {}", path.display()))?,
    ))
}

fn open_existing_store(path: &Path) -> anyhow::Result<AnnotationService> {
    if !path.is_file() {
        return Err(IoFailure(format!("{}: no such store", path.display())).into());
    }
    open_store(path)
}

fn correlate(a: &CorrelateArgs) -> anyhow::Result<()> {
    let annotations = match (&a.store, &a.annotations) {
        (Some(s), _) => open_existing_store(s)?.annotations(),
        (None, Some(p)) => read_annotations(p)?,
        (None, None) => bail!("one of --store or --annotations is required"),
    };
    let report = attribute_correlations::<f64>(&annotations);
    if a.json {
        println!("{}", serde_json::to_string_pretty(&report)?);
    } else {
        print!("{}", report.to_table());
    }
    Ok(())
}

fn agreement(a: &StoreArgs) -> anyhow::Result<()> {
    let report = open_existing_store(&a.store)?.agreement_report()?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn serve(a: &ServeArgs) -> anyhow::Result<()> {
    let service = Arc::new(open_store(&a.store)?);
    let app = dialogq_annotation::http::router(service, a.ui.clone());
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(a.addr).await?;
        eprintln!("listening on http://{}", listener.local_addr()?);
        axum::serve(listener, app).await
    })?;
    Ok(())
}

fn export(a: &ExportArgs) -> anyhow::Result<()> {
    let rows = open_existing_store(&a.store)?.export_training_set()?;
    let (train, test) = match a.test_fraction {
        Some(f) => split_by_use_case(&rows, f, a.seed)?,
        None => (rows, Vec::new()),
    };
    let mut w = create(&a.output)?;
    write_labeled(&mut w, &train)?;
    w.flush()?;
    if let Some(p) = &a.test_output {
        let mut w = create(p)?;
        write_labeled(&mut w, &test)?;
        w.flush()?;
    }
    Ok(())
}

/// Parses `name=fraction,...`; unnamed patterns get 0.
pub fn parse_mix(text: &str) -> anyhow::Result<PatternMix> {
    let mut mix = serde_json::Map::new();
    for name in ["fatal_turn", "rephrase_loop", "refinement_chain", "clean"] {
        mix.insert(name.into(), 0.0.into());
    }
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (name, value) = part.split_once('=').with_context(|| format!("expected name=fraction, got {part:?}"))?;
        let value: f64 = value.trim().parse().with_context(|| format!("bad fraction in {part:?}"))?;
        if !mix.contains_key(name.trim()) {
            bail!("unknown pattern {name:?}");
        }
        mix.insert(name.trim().into(), value.into());
    }
    let mix: PatternMix = serde_json::from_value(mix.into())?;
    mix.validate()?;
    Ok(mix)
}

fn synth(a: &SynthArgs) -> anyhow::Result<()> {
    let mix = match &a.mix {
        Some(m) => parse_mix(m)?,
        None => PatternMix::uniform(),
    };
    let corpus = generate(&SynthSpec::new(a.n, mix, a.seed))?;
    let mut w = create(&a.dialogs)?;
    write_labeled(&mut w, &corpus.dialogs)?;
    w.flush()?;
    let mut w = create(&a.scores)?;
    write_scores(&mut w, &corpus.scores)?;
    w.flush()?;
    Ok(())
}

pub fn dispatch(cli: &Cli) -> anyhow::Result<()> {
    match &cli.command {
        Command::Segment(a) => segment(a),
        Command::Score(a) => score(a),
        Command::Train(a) => train(a),
        Command::Predict(a) => predict(a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::Correlate(a) => correlate(a),
        Command::Agreement(a) => agreement(a),
        Command::Serve(a) => serve(a),
        Command::Export(a) => export(a),
        Command::Synth(a) => synth(a),
    }
}

/// Full entry point; returns the process exit code.
pub fn run<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code(&e)
        }
    }
}

//! Command-line entry points. Each subcommand is a thin composition of
//! library operations; [`run`] returns an error carrying the exit code.

use clap::{Args, Parser, Subcommand};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use logsight_core::encoder::{build_vocab, predict, train, Checkpoint, EncoderConfig, EncoderError, TrainOptions, TrainReport};
use logsight_core::logcore::{
    generate_synthetic_corpus, parse_dataset, split_dataset, write_labeled_tsv, DatasetFormat, Label, LogError, LogRecord,
    SplitSizes,
};
use logsight_core::metrics::{MetricsError, MetricsReport};
use logsight_core::pipeline::{analyze_line, LineAnalysis, PipelineConfig, PipelineError};
use logsight_core::reportgen::ResponseCatalog;
use logsight_service::config::ConfigError;
use logsight_service::{ServeError, ServiceConfig};

#[derive(Debug, Parser)]
#[command(name = "logsight", version, about = "Explainable log anomaly detection")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic labeled corpus as tab-separated `<0|1>\t<line>`.
    GenData(GenDataArgs),
    /// Split a labeled corpus, train the encoder and save a checkpoint.
    Train(TrainArgs),
    /// Score a checkpoint on labeled data and print the metrics table.
    Eval(EvalArgs),
    /// Analyze every line of a raw log file and write reports to a directory.
    Analyze(AnalyzeArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[arg(long, default_value_t = 1000)]
    pub n_normal: usize,
    #[arg(long, default_value_t = 1000)]
    pub n_anomaly: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Labeled corpus.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 3)]
    pub epochs: usize,
    #[arg(long, default_value_t = 3e-4)]
    pub lr: f64,
    #[arg(long, default_value_t = 32)]
    pub batch: usize,
    #[arg(long, default_value_t = 4000)]
    pub train_size: usize,
    #[arg(long, default_value_t = 500)]
    pub val_size: usize,
    #[arg(long, default_value_t = 500)]
    pub test_size: usize,
    /// Also write train.tsv, val.tsv and test.tsv here.
    #[arg(long)]
    pub split_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 2)]
    pub num_layers: usize,
    #[arg(long, default_value_t = 4)]
    pub num_heads: usize,
    #[arg(long, default_value_t = 64)]
    pub d_model: usize,
    #[arg(long, default_value_t = 256)]
    pub d_ff: usize,
    #[arg(long, default_value_t = 64)]
    pub max_seq_len: usize,
    #[arg(long, default_value_t = 8192)]
    pub vocab_max: usize,
    #[arg(long, default_value_t = 0.1)]
    pub dropout: f64,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Also write the metrics as JSON.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Raw log file, one line per record.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 128)]
    pub ig_steps: usize,
    /// Response catalog JSON replacing the bundled one.
    #[arg(long)]
    pub catalog: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// TOML config; LOGSIGHT_* variables and the flags below override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub port: Option<u16>,
    #[arg(long)]
    pub store: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Model(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Model(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}

impl From<LogError> for CliError {
    fn from(e: LogError) -> Self {
        match e {
            LogError::Io { .. } => CliError::Io(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<EncoderError> for CliError {
    fn from(e: EncoderError) -> Self {
        match e {
            EncoderError::Io(_) => CliError::Io(e.to_string()),
            EncoderError::EmptyCorpus | EncoderError::Unlabeled { .. } | EncoderError::DegenerateInput => {
                CliError::Data(e.to_string())
            }
            _ => CliError::Model(e.to_string()),
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        let msg = e.to_string();
        match e {
            PipelineError::Encoder { source, .. } => match CliError::from(source) {
                CliError::Data(_) => CliError::Data(msg),
                CliError::Io(_) => CliError::Io(msg),
                _ => CliError::Model(msg),
            },
            PipelineError::Analysis { .. } => CliError::Model(msg),
        }
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<ServeError> for CliError {
    fn from(e: ServeError) -> Self {
        match e {
            ServeError::Checkpoint { .. } => CliError::Model(e.to_string()),
            ServeError::Questionnaire(_) | ServeError::Catalog(_) => CliError::Data(e.to_string()),
            _ => CliError::Io(e.to_string()),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Read { .. } => CliError::Io(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| CliError::Io(format!("{}: {e}", path.display()))
}

/// Write to a sibling temporary file, then rename over the target.
fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(io(&tmp))?;
    fs::rename(&tmp, path).map_err(io(path))
}

fn tsv(records: &[LogRecord]) -> Vec<u8> {
    let mut buf = Vec::new();
    write_labeled_tsv(records, &mut buf).expect("writing to memory");
    buf
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        Command::GenData(a) => gen_data(&a, out),
        Command::Train(a) => train_cmd(&a, out),
        Command::Eval(a) => eval(&a, out),
        Command::Analyze(a) => analyze(&a, out),
        Command::Serve(a) => serve(&a),
    }
}

fn emit(out: &mut dyn Write, text: &str) -> Result<(), CliError> {
    out.write_all(text.as_bytes()).map_err(|e| CliError::Io(format!("stdout: {e}")))
}

pub fn gen_data(a: &GenDataArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let corpus = generate_synthetic_corpus(a.n_normal, a.n_anomaly, a.seed);
    write_file(&a.out, &tsv(&corpus))?;
    emit(out, &format!("wrote {} records to {}\n", corpus.len(), a.out.display()))
}

pub fn format_train_report(r: &TrainReport) -> String {
    let mut s = String::new();
    for (i, (loss, acc)) in r.train_loss_per_epoch.iter().zip(&r.val_accuracy_per_epoch).enumerate() {
        s += &format!("epoch {}: train loss {loss:.4}, val accuracy {acc:.4}\n", i + 1);
    }
    s += &format!("final train loss {:.4} (seed {}, {} epochs)\n", r.final_train_loss, r.seed, r.epochs);
    s
}

pub fn train_cmd(a: &TrainArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let cfg = EncoderConfig {
        num_layers: a.num_layers,
        num_heads: a.num_heads,
        d_model: a.d_model,
        d_ff: a.d_ff,
        max_seq_len: a.max_seq_len,
        vocab_max: a.vocab_max,
        dropout: a.dropout,
        seed: a.seed,
    };
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let records = parse_dataset(&a.data, DatasetFormat::LabeledTsv)?;
    let sizes = SplitSizes { train: a.train_size, val: a.val_size, test: a.test_size };
    let split = split_dataset(&records, sizes, a.seed)?;
    let vocab = build_vocab(&split.train, &cfg)?;
    let options = TrainOptions { epochs: a.epochs, lr: a.lr, batch: a.batch };
    let (params, report) = train(&split, &vocab, &cfg, options)?;
    let checkpoint = Checkpoint { vocab, params, report: Some(report.clone()) };
    if let Some(dir) = &a.split_dir {
        fs::create_dir_all(dir).map_err(io(dir))?;
        for (name, part) in [("train.tsv", &split.train), ("val.tsv", &split.val), ("test.tsv", &split.test)] {
            write_file(&dir.join(name), &tsv(part))?;
        }
    }
    write_file(&a.out, checkpoint.to_json().as_bytes())?;
    emit(out, &format_train_report(&report))?;
    emit(out, &format!("checkpoint written to {}\n", a.out.display()))
}

/// Predictions for every labeled record.
pub fn evaluate(records: &[LogRecord], checkpoint: &Checkpoint) -> Result<MetricsReport, CliError> {
    let mut truth = Vec::with_capacity(records.len());
    let mut pred = Vec::with_capacity(records.len());
    for r in records {
        let label = r.label.ok_or_else(|| CliError::Data(format!("record {} has no label", r.line_no)))?;
        truth.push(label);
        pred.push(predict(&r.normalized_text, &checkpoint.params, &checkpoint.vocab)?.label);
    }
    if records.is_empty() {
        return Err(CliError::Data("no records to evaluate".into()));
    }
    Ok(MetricsReport::from_predictions(&truth, &pred)?)
}

pub fn eval(a: &EvalArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let checkpoint = Checkpoint::load(&a.checkpoint)?;
    let records = parse_dataset(&a.data, DatasetFormat::LabeledTsv)?;
    let report = evaluate(&records, &checkpoint)?;
    if let Some(path) = &a.json {
        write_file(path, serde_json::to_string_pretty(&report).expect("report serializes").as_bytes())?;
    }
    emit(out, &report.to_table("logsight-encoder"))
}

fn line_stem(line_no: usize) -> String {
    format!("line-{line_no:05}")
}

pub fn analyze(a: &AnalyzeArgs, out: &mut dyn Write) -> Result<(), CliError> {
    if a.ig_steps == 0 {
        return Err(CliError::Usage("--ig-steps must be at least 1".into()));
    }
    let checkpoint = Checkpoint::load(&a.checkpoint)?;
    let catalog = match &a.catalog {
        Some(p) => ResponseCatalog::load(p).map_err(|e| CliError::Data(e.to_string()))?,
        None => ResponseCatalog::default(),
    };
    let records = parse_dataset(&a.input, DatasetFormat::RawLines)?;
    let cfg = PipelineConfig { ig_steps: a.ig_steps, catalog, ..Default::default() };
    let analyses: Vec<LineAnalysis> = records
        .iter()
        .map(|r| analyze_line(r, &checkpoint, &cfg))
        .collect::<Result<_, _>>()?;

    fs::create_dir_all(&a.out_dir).map_err(io(&a.out_dir))?;
    let mut summary = String::from("line_no\tverdict\tconfidence\tseverity\tevent\n");
    for la in &analyses {
        let stem = line_stem(la.line_no);
        let text = format!("{}\n{}", la.response.to_text(), la.report_text());
        write_file(&a.out_dir.join(format!("{stem}.txt")), text.as_bytes())?;
        let json = serde_json::to_string(la).expect("analysis serializes");
        write_file(&a.out_dir.join(format!("{stem}.json")), json.as_bytes())?;
        summary += &format!(
            "{}\t{}\t{:.4}\t{}\t{}\n",
            la.line_no, la.response.verdict, la.response.confidence, la.response.severity, la.response.event
        );
    }
    write_file(&a.out_dir.join("results.tsv"), summary.as_bytes())?;
    let anomalies = analyses.iter().filter(|l| l.response.verdict == Label::Anomaly).count();
    emit(
        out,
        &format!("analyzed {} lines, {anomalies} anomalous; output in {}\n", analyses.len(), a.out_dir.display()),
    )
}

pub fn serve(a: &ServeArgs) -> Result<(), CliError> {
    let mut cfg = ServiceConfig::from_env(a.config.as_deref())?;
    if let Some(p) = a.port {
        cfg.port = p;
    }
    if let Some(s) = &a.store {
        cfg.store_path = s.clone();
    }
    if let Some(c) = &a.checkpoint {
        cfg.checkpoint_path = Some(c.clone());
    }
    let _ = tracing_subscriber::fmt().with_writer(std::io::stderr).try_init();
    let rt = tokio::runtime::Runtime::new().map_err(|e| CliError::Io(e.to_string()))?;
    rt.block_on(logsight_service::serve(cfg))?;
    Ok(())
}

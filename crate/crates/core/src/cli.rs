//! Command-line front end.
//!
//! Settings come from defaults, then an optional TOML config file, then
//! flags. Every command prints a TOML report on stdout; `--out` also writes
//! it (or the generated data) to disk.

use std::ffi::OsString;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{evaluate_stream, run_bench, BenchReport, EvalOptions, StreamReport};
use crate::labels::PostureLabel;
use crate::osc::OscConfig;
use crate::persist::{load_model, save_model};
use crate::recognizer::{ClassifierKind, RecognizerModel};
use crate::signal::{window_count, LabeledStream, DEFAULT_RATE_HZ, DEFAULT_WINDOW};
use crate::synth::{evaluation_scenarios, synth_generate, Scenario, DEFAULT_NOISE};
use crate::train::{train_recognizer, TrainConfig, TrainingReport, TrainingSet, TRAINING_SECONDS};

pub const REPORT_VERSION: u32 = 1;

#[derive(Debug, Parser)]
#[command(name = "gesturespot", version, about = "Posture and gesture spotting on streaming hand signals")]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

/// Settings shared by every command. Each may also come from `--config`.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommonArgs {
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub window: Option<usize>,
    /// Frame rate of generated streams, Hz.
    #[arg(long, global = true)]
    pub rate: Option<f64>,
    /// Generator feature noise standard deviation.
    #[arg(long, global = true)]
    pub noise: Option<f64>,
    /// `crc` or `src`.
    #[arg(long, global = true)]
    pub classifier: Option<ClassifierKind>,
    /// Ridge weight of the three dictionaries.
    #[arg(long, global = true)]
    pub lambda: Option<f64>,
    #[arg(long = "osc-lambda1", global = true)]
    #[serde(rename = "osc-lambda1")]
    pub osc_lambda1: Option<f64>,
    #[arg(long = "osc-lambda2", global = true)]
    #[serde(rename = "osc-lambda2")]
    pub osc_lambda2: Option<f64>,
    #[arg(long = "model-dir", global = true)]
    #[serde(rename = "model-dir")]
    pub model_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// TOML file with any of these settings; flags take precedence.
    #[arg(long, global = true)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

impl CommonArgs {
    fn or(self, file: CommonArgs) -> CommonArgs {
        CommonArgs {
            seed: self.seed.or(file.seed),
            window: self.window.or(file.window),
            rate: self.rate.or(file.rate),
            noise: self.noise.or(file.noise),
            classifier: self.classifier.or(file.classifier),
            lambda: self.lambda.or(file.lambda),
            osc_lambda1: self.osc_lambda1.or(file.osc_lambda1),
            osc_lambda2: self.osc_lambda2.or(file.osc_lambda2),
            model_dir: self.model_dir.or(file.model_dir),
            out: self.out.or(file.out),
            config: self.config,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write synthetic stream files.
    Generate {
        /// `Posture[:seconds],...`; segments without a dwell share `--duration`.
        #[arg(long)]
        scenario: Option<String>,
        #[arg(long)]
        duration: Option<f64>,
        /// Write the nine training recordings into the `--out` directory.
        #[arg(long, conflicts_with_all = ["scenario", "suite"])]
        training_set: bool,
        /// Write the twelve evaluation streams into the `--out` directory.
        #[arg(long, conflicts_with = "scenario")]
        suite: bool,
    },
    /// Cluster the transition recordings and save a model.
    Train {
        /// Directory with the nine recordings; synthesized when absent.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Length of synthesized recordings, seconds.
        #[arg(long)]
        duration: Option<f64>,
        #[arg(long = "osc-max-iter")]
        osc_max_iter: Option<usize>,
    },
    /// Run a model over stream files and score labeled ones.
    Eval {
        #[arg(long)]
        input: Vec<PathBuf>,
        /// Evaluate a generated scenario instead of files.
        #[arg(long)]
        scenario: Option<String>,
        /// Evaluate the twelve generated evaluation streams.
        #[arg(long)]
        suite: bool,
        #[arg(long)]
        duration: Option<f64>,
        /// Half-width of the boundary band; defaults to the window length.
        #[arg(long)]
        band: Option<usize>,
        /// Write per-frame event records here.
        #[arg(long)]
        records: Option<PathBuf>,
    },
    /// Time the classifiers over every window of a stream.
    Bench {
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        scenario: Option<String>,
        #[arg(long)]
        duration: Option<f64>,
        /// Also time the sparse classifier.
        #[arg(long)]
        with_src: bool,
    },
    /// Serve the model over WebSocket.
    Serve {
        #[arg(long, default_value = "127.0.0.1")]
        bind: String,
        #[arg(long, default_value_t = 8080)]
        port: u16,
    },
}

/// Fully resolved settings.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub seed: u64,
    pub window: usize,
    pub rate: f64,
    pub noise: f64,
    pub classifier: Option<ClassifierKind>,
    pub lambda: Option<f64>,
    pub osc: OscConfig,
    pub model_dir: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn resolve(args: CommonArgs) -> Result<Self> {
        let args = match &args.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                let file: CommonArgs = toml::from_str(&text).map_err(|e| Error::Usage(format!("{}: {e}", path.display())))?;
                args.or(file)
            }
            None => args,
        };
        let mut osc = OscConfig::default();
        if let Some(v) = args.osc_lambda1 {
            osc.lambda1 = v;
        }
        if let Some(v) = args.osc_lambda2 {
            osc.lambda2 = v;
        }
        osc.validate().map_err(|e| Error::Usage(e.to_string()))?;
        let cfg = RunConfig {
            seed: args.seed.unwrap_or(0),
            window: args.window.unwrap_or(DEFAULT_WINDOW),
            rate: args.rate.unwrap_or(DEFAULT_RATE_HZ),
            noise: args.noise.unwrap_or(DEFAULT_NOISE),
            classifier: args.classifier,
            lambda: args.lambda,
            osc,
            model_dir: args.model_dir,
            out: args.out,
        };
        if cfg.window < 2 {
            return Err(Error::Usage(format!("--window must be at least 2, got {}", cfg.window)));
        }
        if !(cfg.rate > 0.0 && cfg.rate.is_finite()) {
            return Err(Error::Usage(format!("--rate must be positive, got {}", cfg.rate)));
        }
        if !(cfg.noise >= 0.0 && cfg.noise.is_finite()) {
            return Err(Error::Usage(format!("--noise must be non-negative, got {}", cfg.noise)));
        }
        if cfg.lambda.is_some_and(|l| !(l > 0.0 && l.is_finite())) {
            return Err(Error::Usage("--lambda must be positive".into()));
        }
        Ok(cfg)
    }

    fn model_dir(&self) -> Result<&Path> {
        self.model_dir.as_deref().ok_or_else(|| Error::Usage("--model-dir is required".into()))
    }

    fn load_model(&self) -> Result<RecognizerModel> {
        let model = load_model(self.model_dir()?)?;
        if model.window != self.window && self.window != DEFAULT_WINDOW {
            log::warn!("--window {} ignored: the model was trained with W={}", self.window, model.window);
        }
        Ok(match self.classifier {
            Some(c) => model.with_classifier(c),
            None => model,
        })
    }

    fn scenario(&self, spec: &str, duration: Option<f64>, seed: u64) -> Result<Scenario> {
        let mut s = Scenario::parse(spec, duration.or(Some(20.0)), self.noise, seed)?;
        s.rate_hz = self.rate;
        s.validate()?;
        Ok(s)
    }
}

#[derive(Debug, Clone, Serialize)]
struct GenerateReport {
    report_version: u32,
    command: &'static str,
    files: Vec<GeneratedFile>,
}

#[derive(Debug, Clone, Serialize)]
struct GeneratedFile {
    path: String,
    frames: usize,
    windows: usize,
}

#[derive(Debug, Clone, Serialize)]
struct TrainCommandReport {
    report_version: u32,
    command: &'static str,
    model_dir: String,
    seconds: f64,
    training: TrainingReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalSummary {
    pub streams: usize,
    pub labeled: usize,
    pub windows: usize,
    pub raw_errors_outside_band: usize,
    pub command_errors_outside_band: usize,
    pub raw_errors_all: usize,
    pub command_errors_all: usize,
    pub seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
struct EvalCommandReport {
    report_version: u32,
    command: &'static str,
    summary: EvalSummary,
    streams: Vec<StreamReport>,
}

#[derive(Debug, Clone, Serialize)]
struct BenchCommandReport {
    report_version: u32,
    command: &'static str,
    stream: String,
    bench: BenchReport,
}

fn toml_text<T: Serialize>(v: &T) -> Result<String> {
    toml::to_string(v).map_err(|e| Error::ModelFormat(e.to_string()))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn emit(out: &mut dyn Write, text: &str) -> Result<()> {
    out.write_all(text.as_bytes()).map_err(|e| Error::io("<stdout>", e))
}

/// Parses `args` (including the program name) and runs the command,
/// printing the report to `out`.
pub fn run_with(args: impl IntoIterator<Item = OsString>, out: &mut dyn Write) -> Result<()> {
    let cli = Cli::try_parse_from(args).map_err(|e| Error::Usage(e.to_string().trim_start_matches("error: ").trim_end().to_string()))?;
    let cfg = RunConfig::resolve(cli.common)?;
    match cli.command {
        Command::Generate { scenario, duration, training_set, suite } => run_generate(&cfg, scenario, duration, training_set, suite, out),
        Command::Train { data, duration, osc_max_iter } => run_train(&cfg, data, duration, osc_max_iter, out),
        Command::Eval { input, scenario, suite, duration, band, records } => {
            run_eval(&cfg, &input, scenario, suite, duration, band, records, out).map(|_| ())
        }
        Command::Bench { input, scenario, duration, with_src } => run_bench_command(&cfg, input, scenario, duration, with_src, out),
        Command::Serve { bind, port } => run_serve(&cfg, &bind, port),
    }
}

/// Entry point for the binary: returns the process exit code.
pub fn main_with(args: impl IntoIterator<Item = OsString>) -> i32 {
    let args: Vec<OsString> = args.into_iter().collect();
    // help and version are not errors
    if let Err(e) = Cli::try_parse_from(&args) {
        if matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion) {
            let _ = e.print();
            return 0;
        }
    }
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    match run_with(args, &mut lock) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn run_generate(cfg: &RunConfig, scenario: Option<String>, duration: Option<f64>, training_set: bool, suite: bool, out: &mut dyn Write) -> Result<()> {
    let target = cfg.out.clone().ok_or_else(|| Error::Usage("generate needs --out".into()))?;
    let mut files = Vec::new();
    let mut record = |path: PathBuf, s: &LabeledStream| -> Result<()> {
        s.save(&path)?;
        files.push(GeneratedFile { path: path.display().to_string(), frames: s.len(), windows: window_count(s.len(), cfg.window) });
        Ok(())
    };
    if training_set {
        let secs = duration.unwrap_or(TRAINING_SECONDS);
        let set = TrainingSet::synthetic(secs, cfg.noise, cfg.seed)?;
        set.save_dir(&target)?;
        for (side, s) in &set.transitions {
            files.push(GeneratedFile {
                path: target.join(crate::train::transition_file(*side)).display().to_string(),
                frames: s.len(),
                windows: window_count(s.len(), cfg.window),
            });
        }
        for (p, s) in &set.postures {
            files.push(GeneratedFile {
                path: target.join(crate::train::posture_file(*p)).display().to_string(),
                frames: s.len(),
                windows: window_count(s.len(), cfg.window),
            });
        }
    } else if suite {
        std::fs::create_dir_all(&target).map_err(|e| Error::io(&target, e))?;
        for (name, mut sc) in evaluation_scenarios(cfg.noise, cfg.seed) {
            sc.rate_hz = cfg.rate;
            record(target.join(format!("{name}.stream")), &synth_generate(&sc)?)?;
        }
    } else {
        let spec = scenario.ok_or_else(|| Error::Usage("generate needs --scenario, --suite or --training-set".into()))?;
        record(target, &synth_generate(&cfg.scenario(&spec, duration, cfg.seed)?)?)?;
    }
    emit(out, &toml_text(&GenerateReport { report_version: REPORT_VERSION, command: "generate", files })?)
}

/// Where `train` writes its report when `--out` is not given: next to the
/// model directory, as `<model-dir>.training.toml`.
pub fn default_training_report_path(model_dir: &Path) -> PathBuf {
    let mut name = model_dir.file_name().map(|n| n.to_os_string()).unwrap_or_else(|| "model".into());
    name.push(".training.toml");
    model_dir.with_file_name(name)
}

fn run_train(cfg: &RunConfig, data: Option<PathBuf>, duration: Option<f64>, osc_max_iter: Option<usize>, out: &mut dyn Write) -> Result<()> {
    let model_dir = cfg.model_dir()?.to_path_buf();
    let set = match data {
        Some(dir) => TrainingSet::load_dir(dir)?,
        None => TrainingSet::synthetic(duration.unwrap_or(TRAINING_SECONDS), cfg.noise, cfg.seed)?,
    };
    let mut tc = TrainConfig { window: cfg.window, seed: cfg.seed, osc: cfg.osc, ..TrainConfig::default() };
    if let Some(l) = cfg.lambda {
        tc.lambda = Some(l);
    }
    if let Some(c) = cfg.classifier {
        tc.classifier = c;
    }
    if let Some(n) = osc_max_iter {
        tc.osc.max_iter = n;
    }
    let started = std::time::Instant::now();
    let trained = train_recognizer(&set, &tc)?;
    save_model(&model_dir, &trained.model)?;
    let report = TrainCommandReport {
        report_version: REPORT_VERSION,
        command: "train",
        model_dir: model_dir.display().to_string(),
        seconds: started.elapsed().as_secs_f64(),
        training: trained.report,
    };
    let text = toml_text(&report)?;
    write_file(&cfg.out.clone().unwrap_or_else(|| default_training_report_path(&model_dir)), &text)?;
    emit(out, &text)
}

/// Evaluates streams and returns the per-stream event records alongside the
/// summary.
#[allow(clippy::too_many_arguments)]
pub fn run_eval(
    cfg: &RunConfig,
    inputs: &[PathBuf],
    scenario: Option<String>,
    suite: bool,
    duration: Option<f64>,
    band: Option<usize>,
    records: Option<PathBuf>,
    out: &mut dyn Write,
) -> Result<EvalSummary> {
    let model = Arc::new(cfg.load_model()?);
    let mut streams: Vec<(String, LabeledStream)> = Vec::new();
    for path in inputs {
        streams.push((path.display().to_string(), LabeledStream::load(path)?));
    }
    if let Some(spec) = scenario {
        streams.push((spec.clone(), synth_generate(&cfg.scenario(&spec, duration, cfg.seed)?)?));
    }
    if suite {
        for (name, mut sc) in evaluation_scenarios(cfg.noise, cfg.seed) {
            sc.rate_hz = cfg.rate;
            streams.push((name, synth_generate(&sc)?));
        }
    }
    if streams.is_empty() {
        return Err(Error::Usage("eval needs --input, --scenario or --suite".into()));
    }
    let opts = EvalOptions { band };
    let started = std::time::Instant::now();
    let mut reports = Vec::new();
    let mut record_text = String::new();
    for (name, s) in &streams {
        let e = evaluate_stream(name, s, &model, &opts)?;
        if streams.len() > 1 {
            record_text.push_str(&format!("# {name}\n"));
        }
        record_text.push_str(&e.records());
        reports.push(e.report);
    }
    let seconds = started.elapsed().as_secs_f64();
    let labeled: Vec<_> = reports.iter().filter_map(|r| r.accuracy.as_ref()).collect();
    let summary = EvalSummary {
        streams: reports.len(),
        labeled: labeled.len(),
        windows: reports.iter().map(|r| r.windows).sum(),
        raw_errors_outside_band: labeled.iter().map(|a| a.outside_band.raw_errors).sum(),
        command_errors_outside_band: labeled.iter().map(|a| a.outside_band.command_errors).sum(),
        raw_errors_all: labeled.iter().map(|a| a.all.raw_errors).sum(),
        command_errors_all: labeled.iter().map(|a| a.all.command_errors).sum(),
        seconds,
    };
    if let Some(path) = records {
        write_file(&path, &record_text)?;
    }
    let text = toml_text(&EvalCommandReport { report_version: REPORT_VERSION, command: "eval", summary: summary.clone(), streams: reports })?;
    if let Some(path) = &cfg.out {
        write_file(path, &text)?;
    }
    emit(out, &text)?;
    Ok(summary)
}

fn run_bench_command(cfg: &RunConfig, input: Option<PathBuf>, scenario: Option<String>, duration: Option<f64>, with_src: bool, out: &mut dyn Write) -> Result<()> {
    let model = cfg.load_model()?;
    let (name, stream) = match (input, scenario) {
        (Some(path), _) => (path.display().to_string(), LabeledStream::load(&path)?),
        (None, spec) => {
            let spec = spec.unwrap_or_else(|| {
                let names: Vec<&str> = [PostureLabel::GoStraight, PostureLabel::TurnLeft, PostureLabel::GoStraight].iter().map(|p| p.name()).collect();
                names.join(",")
            });
            let s = synth_generate(&cfg.scenario(&spec, duration, cfg.seed)?)?;
            (spec, s)
        }
    };
    let mut kinds = vec![ClassifierKind::Crc];
    if with_src || cfg.classifier == Some(ClassifierKind::Src) {
        kinds.push(ClassifierKind::Src);
    }
    let bench = run_bench(&stream, &model, &kinds)?;
    let text = toml_text(&BenchCommandReport { report_version: REPORT_VERSION, command: "bench", stream: name, bench })?;
    if let Some(path) = &cfg.out {
        write_file(path, &text)?;
    }
    emit(out, &text)
}

fn run_serve(cfg: &RunConfig, bind: &str, port: u16) -> Result<()> {
    let model = match &cfg.model_dir {
        Some(_) => Some(Arc::new(cfg.load_model()?)),
        None => {
            log::warn!("no --model-dir: sessions will be refused");
            None
        }
    };
    let addr: SocketAddr = format!("{bind}:{port}").parse().map_err(|e| Error::Usage(format!("bad bind address: {e}")))?;
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build().map_err(|e| Error::io("<runtime>", e))?;
    rt.block_on(async move {
        let listener = crate::service::bind(addr).await.map_err(|e| Error::io(addr.to_string(), e))?;
        log::info!("listening on {}", listener.local_addr().map_err(|e| Error::io(addr.to_string(), e))?);
        crate::service::serve(listener, model).await.map_err(|e| Error::io(addr.to_string(), e))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> std::result::Result<Cli, clap::Error> {
        Cli::try_parse_from(std::iter::once("gesturespot").chain(args.iter().copied()))
    }

    #[test]
    fn flags_override_config() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "seed = 5\nnoise = 0.03\nwindow = 30\nosc-lambda1 = 0.2\n").unwrap();
        let cli = parse(&["--config", path.to_str().unwrap(), "--seed", "9", "bench"]).unwrap();
        let cfg = RunConfig::resolve(cli.common).unwrap();
        assert_eq!((cfg.seed, cfg.noise, cfg.window), (9, 0.03, 30));
        assert_eq!(cfg.osc.lambda1, 0.2);
    }

    #[test]
    fn rejects_bad_settings() {
        for args in [&["--window", "1", "bench"][..], &["--rate", "0", "bench"], &["--noise=-1", "bench"]] {
            let cfg = RunConfig::resolve(parse(args).unwrap().common);
            assert!(matches!(cfg, Err(Error::Usage(_))), "{args:?}");
        }
        assert!(parse(&["--classifier", "svm", "bench"]).is_err());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.toml");
        std::fs::write(&path, "colour = 1\n").unwrap();
        let cli = parse(&["--config", path.to_str().unwrap(), "bench"]).unwrap();
        assert!(matches!(RunConfig::resolve(cli.common), Err(Error::Usage(_))));
    }

    #[test]
    fn training_report_sits_beside_model() {
        assert_eq!(default_training_report_path(Path::new("out/model")), PathBuf::from("out/model.training.toml"));
    }
}

//! `growconv`: grow convolutional layers from images, train classifiers
//! around them, transfer them between datasets and render their responses.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 numeric failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use growconv::config::{load_dataset, DatasetFormat, RunConfig, Split};
use growconv::data::Dataset;
use growconv::metrics::EvalReport;
use growconv::models::{ModelFile, Topology};
use growconv::numerics::Activation;
use growconv::workflows::{self, FailureClass, GrowOutcome, WorkflowError};
use serde::Serialize;

/// Relative output paths are resolved against this directory when set.
const OUT_DIR_ENV: &str = "GROWCONV_OUT_DIR";

#[derive(Parser)]
#[command(name = "growconv", version, about = "Data-driven growth of convolutional layers")]
struct Cli {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Grow a first conv layer from the seed kernel.
    Grow(GrowCmd),
    /// Grow a second conv layer on the pooled maps of a first layer.
    GrowLayer2(GrowLayer2Cmd),
    /// Train a classifier, optionally around grown layers.
    Train(TrainCmd),
    /// Score a saved model on a dataset's test split.
    Eval(EvalCmd),
    /// Freeze a grown layer into a classifier for another dataset.
    Transfer(TransferCmd),
    /// Render a layer's response to one image.
    Viz(VizCmd),
}

#[derive(Args)]
struct DataArgs {
    /// Dataset directory (IDX or CIFAR binary files).
    dataset: Option<PathBuf>,
    /// auto, idx, cifar10 or cifar100.
    #[arg(long)]
    format: Option<DatasetFormat>,
    /// Seed for drawing image subsets.
    #[arg(long)]
    sample_seed: Option<u64>,
}

#[derive(Args)]
struct GrowthArgs {
    /// Number of generation images.
    #[arg(long)]
    images: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Stop once the running mean inactive ratio falls below this.
    #[arg(long)]
    stop: Option<f64>,
    #[arg(long)]
    max_kernels: Option<usize>,
}

#[derive(Args)]
struct GrowCmd {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    growth: GrowthArgs,
    #[arg(long)]
    kernel_size: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Seeds both the growth driver and the image sample.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "layer.json")]
    out: PathBuf,
}

#[derive(Args)]
struct GrowLayer2Cmd {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    growth: GrowthArgs,
    /// Layer file of the first conv layer.
    #[arg(long)]
    layer0: Option<PathBuf>,
    #[arg(long, default_value_t = 3)]
    kernel_size: usize,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "layer1.json")]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    momentum: Option<f64>,
    /// Seeds model initialization and batch order.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    train_size: Option<usize>,
    #[arg(long)]
    test_size: Option<usize>,
    #[arg(long)]
    hidden: Option<usize>,
    /// Kernel count of ordinary conv layers.
    #[arg(long)]
    kernels: Option<usize>,
    /// sigmoid or relu, for ordinary conv layers.
    #[arg(long)]
    conv_activation: Option<String>,
}

#[derive(Args)]
struct TrainCmd {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    train: TrainArgs,
    /// model1 or model2.
    #[arg(long)]
    model: Option<Topology>,
    #[arg(long)]
    sub0: Option<PathBuf>,
    #[arg(long)]
    sub1: Option<PathBuf>,
    /// Comma-separated parameter-layer indices to freeze.
    #[arg(long, value_delimiter = ',')]
    freeze: Option<Vec<usize>>,
    #[arg(long, default_value = "model.json")]
    out: PathBuf,
    #[arg(long, default_value = "report.json")]
    report: PathBuf,
}

#[derive(Args)]
struct EvalCmd {
    #[command(flatten)]
    data: DataArgs,
    /// Model file written by `train`.
    #[arg(long = "model-file")]
    model_file: PathBuf,
    #[arg(long)]
    test_size: Option<usize>,
    #[arg(long, default_value = "eval.json")]
    report: PathBuf,
}

#[derive(Args)]
struct TransferCmd {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    growth: GrowthArgs,
    #[command(flatten)]
    train: TrainArgs,
    /// Layer file grown on the source dataset.
    #[arg(long)]
    layer: Option<PathBuf>,
    /// Also grow the layer on target images and train a second arm.
    #[arg(long, action = clap::ArgAction::Set)]
    expand: Option<bool>,
    #[arg(long)]
    grow_epochs: Option<usize>,
    #[arg(long, default_value = "transfer.json")]
    out: PathBuf,
}

#[derive(Args)]
struct VizCmd {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    layer: Option<PathBuf>,
    /// Index into the test split.
    #[arg(long)]
    image: Option<usize>,
    /// Output prefix; files get -activity.pgm, -kernels.ppm and -source suffixes.
    #[arg(long, default_value = "viz")]
    out: PathBuf,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Io(PathBuf, std::io::Error),
    Workflow(WorkflowError),
}

impl From<WorkflowError> for CliError {
    fn from(e: WorkflowError) -> Self {
        CliError::Workflow(e)
    }
}

impl<E: Into<WorkflowError>> From<Wrap<E>> for CliError {
    fn from(e: Wrap<E>) -> Self {
        CliError::Workflow(e.0.into())
    }
}

/// Lets `?` lift any module error through `WorkflowError`.
struct Wrap<E>(E);

trait WrapErr<T, E> {
    fn wf(self) -> Result<T, Wrap<E>>;
}

impl<T, E> WrapErr<T, E> for Result<T, E> {
    fn wf(self) -> Result<T, Wrap<E>> {
        self.map_err(Wrap)
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Io(..) => 2,
            CliError::Workflow(e) => match e.class() {
                FailureClass::Config => 1,
                FailureClass::Data => 2,
                FailureClass::Numeric => 3,
            },
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => f.write_str(m),
            CliError::Io(p, e) => write!(f, "{}: {e}", p.display()),
            CliError::Workflow(e) => write!(f, "{e}"),
        }
    }
}

type Result<T, E = CliError> = std::result::Result<T, E>;

fn out_path(p: &Path) -> PathBuf {
    match std::env::var_os(OUT_DIR_ENV) {
        Some(root) if p.is_relative() => PathBuf::from(root).join(p),
        _ => p.to_path_buf(),
    }
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::Io(dir.to_path_buf(), e))?;
    }
    fs::write(path, bytes).map_err(|e| CliError::Io(path.to_path_buf(), e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    write_bytes(path, s.as_bytes())
}

/// `dir/report.json` + ".csv" → `dir/report.csv`.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}"))
}

/// Writes the resolved configuration next to the command's main output.
fn echo_config(cfg: &RunConfig, main_output: &Path, command: &str) -> Result<()> {
    let path = main_output.with_file_name(format!("{command}.config.json"));
    write_bytes(&path, cfg.to_json().as_bytes())
}

fn apply_data(cfg: &mut RunConfig, a: &DataArgs) {
    if let Some(p) = &a.dataset {
        cfg.data.path = Some(p.clone());
    }
    if let Some(f) = a.format {
        cfg.data.format = f;
    }
    if let Some(s) = a.sample_seed {
        cfg.data.sample_seed = s;
    }
}

fn apply_growth(cfg: &mut RunConfig, a: &GrowthArgs) {
    if let Some(v) = a.images {
        cfg.data.images = v;
    }
    if let Some(v) = a.alpha {
        cfg.growth.alpha = v;
    }
    if let Some(v) = a.stop {
        cfg.growth.stop_ratio = v;
    }
    if let Some(v) = a.max_kernels {
        cfg.growth.max_kernels = v;
    }
}

fn apply_train(cfg: &mut RunConfig, a: &TrainArgs) -> Result<()> {
    let t = &mut cfg.train;
    if let Some(v) = a.epochs {
        t.epochs = v;
    }
    if let Some(v) = a.batch_size {
        t.batch_size = v;
    }
    if let Some(v) = a.lr {
        t.lr = v;
    }
    if let Some(v) = a.momentum {
        t.momentum = v;
    }
    if let Some(v) = a.seed {
        t.rng_seed = v;
        cfg.model.seed = v;
    }
    if let Some(v) = a.train_size {
        t.train_subset = Some(v);
    }
    if let Some(v) = a.test_size {
        t.eval_subset = Some(v);
    }
    if let Some(v) = a.hidden {
        cfg.model.hidden = v;
    }
    if let Some(v) = a.kernels {
        cfg.model.conv_kernels = vec![v; 2];
    }
    if let Some(v) = &a.conv_activation {
        cfg.model.conv_activation = match v.as_str() {
            "sigmoid" => Activation::Sigmoid,
            "relu" => Activation::Relu,
            _ => return Err(CliError::Usage(format!("unknown conv activation {v:?} (sigmoid or relu)"))),
        };
    }
    Ok(())
}

fn dataset(cfg: &RunConfig, split: Split) -> Result<Dataset> {
    let dir = cfg
        .data
        .path
        .as_ref()
        .ok_or_else(|| CliError::Usage("no dataset given (positional argument or data.path in --config)".into()))?;
    load_dataset(dir, cfg.data.format, split).wf().map_err(Into::into)
}

fn require(p: &Option<PathBuf>, what: &str) -> Result<PathBuf> {
    p.clone().ok_or_else(|| CliError::Usage(format!("missing {what}")))
}

fn write_growth(out: &Path, g: &GrowOutcome) -> Result<()> {
    write_bytes(out, g.file.to_json().as_bytes())?;
    let mut csv = Vec::new();
    g.log.write_csv(&mut csv).wf()?;
    write_bytes(&sibling(out, ".log.csv"), &csv)?;
    write_json(&sibling(out, ".summary.json"), &g.log.summary())?;
    let s = g.log.summary();
    println!(
        "{}: {} kernels ({} added), stop {:?}, final mean H {}",
        out.display(),
        s.final_kernels,
        s.final_kernels - s.initial_kernels,
        s.stop_reason,
        s.final_batch_mean_h.map_or("n/a".into(), |h| format!("{h:.4}"))
    );
    Ok(())
}

fn write_report(path: &Path, report: &EvalReport) -> Result<()> {
    write_json(path, report)?;
    report.write_csv(sibling(path, ".csv")).wf()?;
    report.write_roc_csv(sibling(path, ".roc.csv")).wf()?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p).map_err(CliError::Usage)?,
        None => RunConfig::default(),
    };
    match cli.command {
        Command::Grow(c) => {
            apply_data(&mut cfg, &c.data);
            apply_growth(&mut cfg, &c.growth);
            if let Some(k) = c.kernel_size {
                cfg.kernel_size = k;
            }
            if let Some(e) = c.epochs {
                cfg.growth.epochs = e;
            }
            if let Some(s) = c.seed {
                cfg.growth.rng_seed = s;
                cfg.data.sample_seed = s;
            }
            let out = out_path(&c.out);
            echo_config(&cfg, &out, "grow")?;
            let train = dataset(&cfg, Split::Train)?;
            let g = workflows::grow_first_layer(&train, &cfg)?;
            write_growth(&out, &g)
        }
        Command::GrowLayer2(c) => {
            apply_data(&mut cfg, &c.data);
            apply_growth(&mut cfg, &c.growth);
            if c.layer0.is_some() {
                cfg.layer = c.layer0.clone();
            }
            cfg.kernel_size = c.kernel_size;
            if let Some(e) = c.epochs {
                cfg.growth.epochs = e;
            }
            if let Some(s) = c.seed {
                cfg.growth.rng_seed = s;
                cfg.data.sample_seed = s;
            }
            let out = out_path(&c.out);
            echo_config(&cfg, &out, "grow-layer2")?;
            let layer0 = workflows::load_layer(&require(&cfg.layer, "--layer0")?)?;
            let train = dataset(&cfg, Split::Train)?;
            let g = workflows::grow_second_layer(&layer0, &train, &cfg)?;
            write_growth(&out, &g)
        }
        Command::Train(c) => {
            apply_data(&mut cfg, &c.data);
            apply_train(&mut cfg, &c.train)?;
            if let Some(m) = c.model {
                cfg.model.topology = m;
            }
            if c.sub0.is_some() {
                cfg.model.sub0 = c.sub0.clone();
            }
            if c.sub1.is_some() {
                cfg.model.sub1 = c.sub1.clone();
            }
            if let Some(f) = &c.freeze {
                cfg.model.freeze = f.clone();
            }
            let out = out_path(&c.out);
            let report_path = out_path(&c.report);
            echo_config(&cfg, &out, "train")?;
            let train = dataset(&cfg, Split::Train)?;
            let test = dataset(&cfg, Split::Test)?;
            let shape = train.image_shape().ok_or_else(|| CliError::Usage("training split is empty".into()))?;
            let model = workflows::build_configured(&cfg.model, shape, train.n_classes)?;
            let o = workflows::train_and_evaluate(model, &train, &test, &cfg.train, cfg.data.sample_seed)?;
            ModelFile::from_model(&o.model).save(&out).wf()?;
            write_report(&report_path, &o.report)?;
            write_json(&sibling(&report_path, ".history.json"), &o.history)?;
            println!(
                "{}: accuracy {:.4}, macro F1 {:.4} on {} test images",
                out.display(),
                o.report.accuracy,
                o.report.macro_f1,
                o.report.n_samples
            );
            Ok(())
        }
        Command::Eval(c) => {
            apply_data(&mut cfg, &c.data);
            if let Some(n) = c.test_size {
                cfg.train.eval_subset = Some(n);
            }
            let report_path = out_path(&c.report);
            echo_config(&cfg, &report_path, "eval")?;
            let model = ModelFile::load(&c.model_file).wf()?.to_model().wf()?;
            let test = dataset(&cfg, Split::Test)?;
            let test = workflows::sample(&test, cfg.train.eval_subset.unwrap_or(test.len()), cfg.data.sample_seed);
            let report = workflows::evaluate_model(&model, &test, cfg.data.sample_seed)?;
            write_report(&report_path, &report)?;
            println!("accuracy {:.4} on {} images", report.accuracy, report.n_samples);
            Ok(())
        }
        Command::Transfer(c) => {
            apply_data(&mut cfg, &c.data);
            apply_growth(&mut cfg, &c.growth);
            apply_train(&mut cfg, &c.train)?;
            if c.layer.is_some() {
                cfg.layer = c.layer.clone();
            }
            if let Some(e) = c.expand {
                cfg.expand = e;
            }
            if let Some(e) = c.grow_epochs {
                cfg.growth.epochs = e;
            }
            let out = out_path(&c.out);
            echo_config(&cfg, &out, "transfer")?;
            let layer = workflows::load_layer(&require(&cfg.layer, "--layer")?)?;
            let train = dataset(&cfg, Split::Train)?;
            let test = dataset(&cfg, Split::Test)?;
            let (outcome, grown) = workflows::transfer(&layer, &train, &test, &cfg)?;
            if let Some(g) = &grown {
                write_growth(&sibling(&out, ".layer.json"), g)?;
            }
            write_json(&out, &outcome)?;
            println!(
                "kernels {} -> {}; unexpanded accuracy {:.4}{}",
                outcome.kernels_before,
                outcome.kernels_after,
                outcome.unexpanded.report.accuracy,
                outcome
                    .expanded
                    .as_ref()
                    .map_or(String::new(), |e| format!(", expanded accuracy {:.4}", e.report.accuracy))
            );
            Ok(())
        }
        Command::Viz(c) => {
            apply_data(&mut cfg, &c.data);
            if c.layer.is_some() {
                cfg.layer = c.layer.clone();
            }
            if let Some(i) = c.image {
                cfg.image = i;
            }
            let prefix = out_path(&c.out);
            echo_config(&cfg, &prefix, "viz")?;
            let layer = workflows::load_layer(&require(&cfg.layer, "--layer")?)?;
            let test = dataset(&cfg, Split::Test)?;
            let image = test.images.get(cfg.image).ok_or_else(|| {
                CliError::Usage(format!("image index {} out of range (test split holds {})", cfg.image, test.len()))
            })?;
            let r = workflows::render(&layer, image)?;
            let name = |suffix: &str| {
                let base = prefix.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
                prefix.with_file_name(format!("{base}{suffix}"))
            };
            write_bytes(&name("-activity.pgm"), &r.activity_pgm)?;
            write_bytes(&name("-kernels.ppm"), &r.dominant_ppm)?;
            write_bytes(&name(&format!("-source.{}", r.source_ext)), &r.source)?;
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

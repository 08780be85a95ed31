//! Command-line front end. [`run`] parses arguments, dispatches to a
//! subcommand and returns the process exit code.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use calibkit::bench::{cross_validate, render_report, BenchmarkSpec, ReportFormat};
use calibkit::binning::BinScheme;
use calibkit::calibrators::{Method, MethodConfig, DEFAULT_HISTOGRAM_BINS};
use calibkit::datagen::{DirichletSpec, EtfSpec, GeneratorSpec};
use calibkit::io::{load_dataset, save_dataset, DatasetFormat};
use calibkit::lenses::LensKind;
use calibkit::metrics::{
    accuracy, accuracy_bound_check, binned_ece, classwise_ece, debiased_ece, lens_ece, nll,
    reliability_curve, AccuracyBoundReport, BinningConfig, PNorm, DEFAULT_BINS,
};
use calibkit::wrappers::{
    Calibrator, CalibratorSpec, FittedCalibrator, Wrapper, DEFAULT_MIN_SECTOR_SAMPLES,
};
use calibkit::{CalibError, PredictionDataset};

/// Exit code for invalid arguments and inputs.
pub const EXIT_USAGE: i32 = 2;
/// Exit code for failures while running a valid command.
pub const EXIT_FAILURE: i32 = 1;

#[derive(Parser, Debug)]
#[command(
    name = "calibkit",
    version,
    about = "Recalibration of probabilistic classifiers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic dataset.
    Generate(GenerateArgs),
    /// Fit a calibrator and save it as JSON.
    Fit(FitArgs),
    /// Recalibrate a dataset with a saved calibrator.
    Apply(ApplyArgs),
    /// Compute calibration metrics of a dataset as JSON.
    Evaluate(EvaluateArgs),
    /// Cross-validate methods and wrappers.
    Benchmark(BenchmarkArgs),
    /// Write the top-class reliability curve as CSV.
    Reliability(ReliabilityArgs),
}

#[derive(Args, Debug)]
struct DatasetArgs {
    /// Dataset file (CSV with `label,c1..cK`, logits CSV with `label,l1..lK`, or JSON).
    #[arg(long)]
    dataset: PathBuf,
    /// Force the input format (csv, logits-csv, json); inferred from the extension otherwise.
    #[arg(long, value_parser = parse_name::<DatasetFormat>)]
    input_format: Option<DatasetFormat>,
}

impl DatasetArgs {
    fn load(&self) -> anyhow::Result<PredictionDataset> {
        let format = self
            .input_format
            .unwrap_or_else(|| DatasetFormat::infer(&self.dataset, false));
        load_dataset(&self.dataset, format)
            .with_context(|| format!("loading {}", self.dataset.display()))
    }
}

#[derive(Args, Debug)]
struct GenerateArgs {
    /// Neural-collapse ETF logits.
    #[arg(long, conflicts_with_all = ["dirichlet", "spec"])]
    etf: bool,
    /// Dirichlet draws with sharpening.
    #[arg(long, conflicts_with = "spec")]
    dirichlet: bool,
    /// Generator spec JSON file instead of flags.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    k: usize,
    #[arg(long, default_value_t = 10000)]
    n: usize,
    /// ETF class weights, comma separated; uniform by default.
    #[arg(long, value_delimiter = ',')]
    weights: Vec<f64>,
    /// ETF radii: one value for all classes or one per class.
    #[arg(long, value_delimiter = ',', default_value = "1.0")]
    radii: Vec<f64>,
    /// ETF logit noise standard deviation.
    #[arg(long, default_value_t = 0.5)]
    noise: f64,
    /// Dirichlet concentration: one value or one per class.
    #[arg(long, value_delimiter = ',', default_value = "1.0")]
    alpha: Vec<f64>,
    /// Dirichlet sharpening temperature; below 1 is overconfident.
    #[arg(long, default_value_t = 1.0)]
    sharpen: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write logits instead of confidences (ETF only).
    #[arg(long)]
    logits: bool,
    /// Output format (csv, logits-csv, json); inferred from the extension otherwise.
    #[arg(long, value_parser = parse_name::<DatasetFormat>)]
    format: Option<DatasetFormat>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct CalibratorArgs {
    #[arg(long, value_parser = parse_name::<Method>)]
    method: Method,
    #[arg(long, default_value = "baseline", value_parser = parse_name::<Wrapper>)]
    wrapper: Wrapper,
    /// confidence, topk:<k>, sumk:<k> or toplabel.
    #[arg(long, default_value = "confidence", value_parser = parse_name::<LensKind>)]
    lens: LensKind,
    #[arg(long, default_value_t = DEFAULT_MIN_SECTOR_SAMPLES)]
    min_sector_samples: usize,
    #[arg(long, default_value_t = DEFAULT_HISTOGRAM_BINS)]
    histogram_bins: usize,
    /// Floor fitted temperatures at 1 so the predicted class never changes.
    #[arg(long)]
    argmax_preserving: bool,
}

#[derive(Args, Debug)]
struct FitArgs {
    #[command(flatten)]
    data: DatasetArgs,
    #[command(flatten)]
    calibrator: CalibratorArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ApplyArgs {
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    data: DatasetArgs,
    #[arg(long, value_parser = parse_name::<DatasetFormat>)]
    format: Option<DatasetFormat>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct BinningArgs {
    #[arg(long, default_value_t = DEFAULT_BINS)]
    bins: usize,
    /// Norm exponent for combining bin gaps: a number >= 1 or `inf`.
    #[arg(long, default_value = "1", value_parser = parse_name::<PNorm>)]
    norm: PNorm,
    #[arg(long, default_value = "equal-width", value_parser = parse_name::<BinScheme>)]
    scheme: BinScheme,
}

impl BinningArgs {
    fn config(&self) -> BinningConfig {
        BinningConfig::new(self.bins)
            .with_norm(self.norm)
            .with_scheme(self.scheme)
    }
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[command(flatten)]
    data: DatasetArgs,
    #[command(flatten)]
    binning: BinningArgs,
    /// Also report the binned error through this lens.
    #[arg(long, value_parser = parse_name::<LensKind>)]
    lens: Option<LensKind>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ReliabilityArgs {
    #[command(flatten)]
    data: DatasetArgs,
    #[command(flatten)]
    binning: BinningArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BenchmarkArgs {
    #[arg(
        long,
        conflicts_with = "generate",
        required_unless_present = "generate"
    )]
    dataset: Option<PathBuf>,
    /// Generator spec JSON; the dataset is generated in memory.
    #[arg(long)]
    generate: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "beta,isotonic,histogram,temperature", value_parser = parse_name::<Method>)]
    methods: Vec<Method>,
    #[arg(long, value_delimiter = ',', default_value = "baseline,reduced,classwise,classwise-reduced", value_parser = parse_name::<Wrapper>)]
    wrappers: Vec<Wrapper>,
    #[arg(long, default_value = "confidence", value_parser = parse_name::<LensKind>)]
    lens: LensKind,
    /// Defaults to 6, or 4 with --cifar-style.
    #[arg(long)]
    folds: Option<usize>,
    /// Defaults to 25, or 20 with --cifar-style.
    #[arg(long)]
    bins: Option<usize>,
    #[arg(long, default_value = "1", value_parser = parse_name::<PNorm>)]
    norm: PNorm,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_MIN_SECTOR_SAMPLES)]
    min_sector_samples: usize,
    #[arg(long, default_value_t = DEFAULT_HISTOGRAM_BINS)]
    histogram_bins: usize,
    #[arg(long)]
    argmax_preserving: bool,
    /// Four folds and 20 bins.
    #[arg(long)]
    cifar_style: bool,
    #[arg(long, default_value = "markdown", value_parser = parse_name::<ReportFormat>)]
    format: ReportFormat,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_name<T: FromStr>(s: &str) -> Result<T, String>
where
    T::Err: std::fmt::Display,
{
    s.parse::<T>().map_err(|e| e.to_string())
}

/// A saved calibrator together with how it was configured.
#[derive(Debug, Serialize, serde::Deserialize)]
struct ModelFile {
    spec: CalibratorSpec,
    calibrator: FittedCalibrator,
}

#[derive(Debug, Serialize)]
struct EvaluateOutput {
    n_samples: usize,
    n_classes: usize,
    bins: usize,
    norm: String,
    ece: f64,
    /// ℓ2 binned ECE with the per-bin variance correction.
    debiased_ece_l2: f64,
    cwece: f64,
    cwece_per_class: Vec<f64>,
    accuracy: f64,
    nll: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    lens: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    lens_ece: Option<f64>,
    accuracy_bound: AccuracyBoundReport,
}

fn write_output(out: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn per_class(name: &str, values: &[f64], k: usize) -> anyhow::Result<Vec<f64>> {
    match values.len() {
        1 => Ok(vec![values[0]; k]),
        n if n == k => Ok(values.to_vec()),
        n => Err(CalibError::InvalidArgument(format!(
            "--{name} has {n} values; give one value or k = {k}"
        ))
        .into()),
    }
}

fn generator_from_args(a: &GenerateArgs) -> anyhow::Result<GeneratorSpec> {
    if let Some(path) = &a.spec {
        let text =
            fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        return serde_json::from_str(&text)
            .with_context(|| format!("parsing generator spec {}", path.display()));
    }
    if a.etf == a.dirichlet {
        return Err(CalibError::InvalidArgument(
            "choose exactly one of --etf, --dirichlet or --spec".into(),
        )
        .into());
    }
    Ok(if a.etf {
        let class_weights = if a.weights.is_empty() {
            vec![1.0 / a.k as f64; a.k]
        } else {
            a.weights.clone()
        };
        GeneratorSpec::Etf(EtfSpec {
            n: a.n,
            k: a.k,
            class_weights,
            radii: per_class("radii", &a.radii, a.k)?,
            noise_sigma: a.noise,
            seed: a.seed,
        })
    } else {
        GeneratorSpec::Dirichlet(DirichletSpec {
            n: a.n,
            k: a.k,
            alpha: per_class("alpha", &a.alpha, a.k)?,
            sharpen_t: a.sharpen,
            seed: a.seed,
        })
    })
}

fn cmd_generate(a: &GenerateArgs) -> anyhow::Result<()> {
    let spec = generator_from_args(a)?;
    let dataset = spec.generate()?;
    let format = a
        .format
        .unwrap_or_else(|| DatasetFormat::infer(&a.out, a.logits));
    save_dataset(&dataset, &a.out, format)
        .with_context(|| format!("writing {}", a.out.display()))?;
    Ok(())
}

fn calibrator_spec(a: &CalibratorArgs) -> CalibratorSpec {
    let mut cfg = MethodConfig::new(a.method);
    cfg.histogram_bins = a.histogram_bins;
    cfg.argmax_preserving = a.argmax_preserving;
    CalibratorSpec::new(a.wrapper, cfg)
        .with_lens(a.lens)
        .with_min_sector_samples(a.min_sector_samples)
}

fn cmd_fit(a: &FitArgs) -> anyhow::Result<()> {
    let dataset = a.data.load()?;
    let spec = calibrator_spec(&a.calibrator);
    let calibrator = spec.fit(&dataset).context("fitting calibrator")?;
    let text = serde_json::to_string_pretty(&ModelFile { spec, calibrator })? + "\n";
    write_output(Some(&a.out), &text)
}

fn cmd_apply(a: &ApplyArgs) -> anyhow::Result<()> {
    let text =
        fs::read_to_string(&a.model).with_context(|| format!("reading {}", a.model.display()))?;
    let model: ModelFile = serde_json::from_str(&text)
        .with_context(|| format!("parsing model {}", a.model.display()))?;
    let dataset = a.data.load()?;
    let out = model.calibrator.transform_dataset(&dataset)?;
    let format = a
        .format
        .unwrap_or_else(|| DatasetFormat::infer(&a.out, false));
    save_dataset(&out, &a.out, format).with_context(|| format!("writing {}", a.out.display()))?;
    Ok(())
}

fn cmd_evaluate(a: &EvaluateArgs) -> anyhow::Result<()> {
    let dataset = a.data.load()?;
    let cfg = a.binning.config();
    cfg.validate()?;
    if let Some(lens) = a.lens {
        lens.validate(dataset.n_classes())?;
    }
    let (cwece, cwece_per_class) = classwise_ece(&dataset, &cfg);
    let l2 = cfg.with_norm(PNorm::Finite(2.0));
    let report = EvaluateOutput {
        n_samples: dataset.len(),
        n_classes: dataset.n_classes(),
        bins: cfg.n_bins,
        norm: cfg.p_norm.to_string(),
        ece: binned_ece(&dataset, &cfg),
        debiased_ece_l2: debiased_ece(&dataset, &l2)?,
        cwece,
        cwece_per_class,
        accuracy: accuracy(&dataset),
        nll: nll(&dataset),
        lens: a.lens.map(|l| l.to_string()),
        lens_ece: a.lens.map(|l| lens_ece(l, &dataset, &cfg)),
        accuracy_bound: accuracy_bound_check(&dataset, &cfg),
    };
    write_output(
        a.out.as_deref(),
        &(serde_json::to_string_pretty(&report)? + "\n"),
    )
}

fn cmd_reliability(a: &ReliabilityArgs) -> anyhow::Result<()> {
    let dataset = a.data.load()?;
    let cfg = a.binning.config();
    cfg.validate()?;
    write_output(
        a.out.as_deref(),
        &reliability_curve(&dataset, &cfg).to_csv(),
    )
}

fn cmd_benchmark(a: &BenchmarkArgs) -> anyhow::Result<()> {
    let dataset = match (&a.dataset, &a.generate) {
        (Some(path), _) => load_dataset(path, DatasetFormat::infer(path, false))
            .with_context(|| format!("loading {}", path.display()))?,
        (None, Some(path)) => {
            let text =
                fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let spec: GeneratorSpec = serde_json::from_str(&text)
                .with_context(|| format!("parsing generator spec {}", path.display()))?;
            spec.generate()?
        }
        (None, None) => bail!("give --dataset or --generate"),
    };
    let mut spec = BenchmarkSpec {
        methods: a.methods.clone(),
        wrappers: a.wrappers.clone(),
        lens: a.lens,
        seed: a.seed,
        min_sector_samples: a.min_sector_samples,
        histogram_bins: a.histogram_bins,
        argmax_preserving: a.argmax_preserving,
        ..BenchmarkSpec::default()
    };
    if a.cifar_style {
        spec = spec.cifar_style();
    }
    if let Some(f) = a.folds {
        spec.folds = f;
    }
    if let Some(b) = a.bins {
        spec.binning.n_bins = b;
    }
    spec.binning.p_norm = a.norm;
    let report = cross_validate(&spec, &dataset)?;
    write_output(a.out.as_deref(), &render_report(&report, a.format)?)
}

/// Runs the CLI on `args` (including the program name) and returns the exit
/// code. Errors are printed to stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    let result = match &cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Fit(a) => cmd_fit(a),
        Command::Apply(a) => cmd_apply(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Benchmark(a) => cmd_benchmark(a),
        Command::Reliability(a) => cmd_reliability(a),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.chain().any(|c| c.downcast_ref::<CalibError>().is_some()) {
                EXIT_USAGE
            } else {
                EXIT_FAILURE
            }
        }
    }
}

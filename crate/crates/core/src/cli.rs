//! Command-line front end. `run` parses arguments, dispatches a subcommand
//! and maps the outcome to an exit status:
//!
//! | status | meaning |
//! |--------|---------|
//! | 0 | success (including `--help`) |
//! | 1 | usage error |
//! | 2 | data or validation error |
//! | 3 | solver failure |
//!
//! Progress goes to standard error; standard output only carries results.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn, LevelFilter};

use crate::error::{Error, Result};
use crate::eval::{
    cross_validate, parse_grid, results_csv, CvConfig, CvReport, FeatureSpace, Method, NmfBaseline,
};
use crate::inference::{fold_in, predict_labels, predict_proba};
use crate::io::{
    export_embeddings, export_trace, format_number, load_dataset, load_model, read_manifest,
    save_dataset, save_model,
};
use crate::model::{validate, BlockDims, FitStatus, Hyperparams, LossMode};
use crate::solver::fit;
use crate::synthetic::{generate_synthetic, SyntheticSpec};

#[derive(Debug, Parser)]
#[command(
    name = "mvdlcsl",
    version,
    about = "Multi-view discriminant NMF with softmax supervision"
)]
struct Cli {
    /// Only log warnings and errors.
    #[arg(short, long, global = true)]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit a model to a labeled (or partially labeled) dataset.
    Fit(FitArgs),
    /// Predict classes of new instances with a fitted model.
    Predict(PredictArgs),
    /// Repeated stratified cross-validation.
    Eval(EvalArgs),
    /// Write a dataset drawn from the planted block model.
    Synth(SynthArgs),
    /// Check a dataset, and optionally a model against it.
    Validate(ValidateArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Loss {
    Ce,
    Mse,
}

#[derive(Debug, Args)]
struct ModelArgs {
    /// Width of the common discriminative block.
    #[arg(long, default_value_t = 4)]
    k1: usize,
    /// Width of the common non-discriminative block.
    #[arg(long, default_value_t = 2)]
    k2: usize,
    /// Width of each view-specific discriminative block.
    #[arg(long, default_value_t = 4)]
    k3: usize,
    /// Width of each view-specific non-discriminative block.
    #[arg(long, default_value_t = 2)]
    k4: usize,
    /// Orthogonality penalty weight.
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
    /// Sparsity penalty weight.
    #[arg(long, default_value_t = 0.1)]
    beta: f64,
    /// Label loss weight.
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    /// Ridge term of the projection solves.
    #[arg(long, default_value_t = 1e-6)]
    lambda: f64,
    #[arg(long, value_enum, default_value_t = Loss::Ce)]
    loss: Loss,
    #[arg(long, default_value_t = 300)]
    max_iters: usize,
    /// Relative objective change that stops the solver.
    #[arg(long, default_value_t = 1e-5)]
    tol: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl ModelArgs {
    fn hyperparams(&self) -> Result<Hyperparams> {
        let mut hp = Hyperparams::new(BlockDims::new(self.k1, self.k2, self.k3, self.k4)?);
        hp.alpha = self.alpha;
        hp.beta = self.beta;
        hp.gamma = self.gamma;
        hp.lambda_ridge = self.lambda;
        hp.loss_mode = match self.loss {
            Loss::Ce => LossMode::CrossEntropy,
            Loss::Mse => LossMode::SquaredError,
        };
        hp.max_iters = self.max_iters;
        hp.rel_tol = self.tol;
        hp.seed = self.seed;
        hp.validate()?;
        Ok(hp)
    }
}

#[derive(Debug, Args)]
struct FitArgs {
    /// Dataset manifest.
    #[arg(long)]
    data: PathBuf,
    /// Where to write the fitted model.
    #[arg(long)]
    out: PathBuf,
    /// Convergence trace CSV [default: <out>.trace.csv].
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Also write discriminative features per instance.
    #[arg(long)]
    embeddings: Option<PathBuf>,
    #[command(flatten)]
    model: ModelArgs,
}

#[derive(Debug, Args)]
struct PredictArgs {
    /// Fitted model file.
    #[arg(long)]
    model: PathBuf,
    /// Manifest of the instances to predict; labels, if present, are scored.
    #[arg(long)]
    data: PathBuf,
    /// Predictions CSV [default: standard output].
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    #[arg(long, default_value_t = 10)]
    repeats: usize,
    /// File of hyperparameter settings, one `name=value,...` line per run.
    #[arg(long)]
    grid: Option<PathBuf>,
    /// Worker threads; results do not depend on it.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Also evaluate the 1-NN and plain-NMF baselines.
    #[arg(long)]
    baselines: bool,
    /// Results CSV [default: standard output].
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    model: ModelArgs,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 200)]
    instances: usize,
    #[arg(long, default_value_t = 4)]
    classes: usize,
    /// Feature count of each view, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "30,40")]
    view_dims: Vec<usize>,
    #[arg(long, default_value_t = 4)]
    k1: usize,
    #[arg(long, default_value_t = 2)]
    k2: usize,
    #[arg(long, default_value_t = 4)]
    k3: usize,
    #[arg(long, default_value_t = 2)]
    k4: usize,
    /// Standard deviation of the additive noise.
    #[arg(long, default_value_t = 0.01)]
    noise: f64,
    /// Offset of a class's own discriminative components.
    #[arg(long, default_value_t = 1.0)]
    separation: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out_dir: PathBuf,
    /// Dataset name written into the manifest.
    #[arg(long, default_value = "planted")]
    name: String,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    #[arg(long)]
    data: PathBuf,
    /// Model to check against the dataset.
    #[arg(long)]
    model: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Run(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Run(e)
    }
}

fn init_logging(quiet: bool) {
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .try_init();
    if quiet {
        log::set_max_level(LevelFilter::Warn);
    }
}

/// Runs the command line `argv` (program name first) and returns the exit
/// status.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    init_logging(cli.quiet);
    let outcome = match cli.command {
        Command::Fit(a) => cmd_fit(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Validate(a) => cmd_validate(a),
    };
    match outcome {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            1
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e}");
            if e.is_solver_failure() {
                3
            } else {
                2
            }
        }
    }
}

fn write_output(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| Error::Io {
            path: p.to_path_buf(),
            source: e,
        }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn default_trace_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".trace.csv");
    out.with_file_name(name)
}

fn cmd_fit(a: FitArgs) -> std::result::Result<(), Failure> {
    let hp = a.model.hyperparams()?;
    let dataset = load_dataset(&a.data)?;
    info!(
        "{} instances ({} labeled), views {:?}, {} classes",
        dataset.num_instances(),
        dataset.num_labeled(),
        dataset.view_dims(),
        dataset.num_classes()
    );
    let (model, trace) = fit(&dataset, &hp)?;
    if trace.status == FitStatus::Stalled {
        warn!("solver stalled: no block could make progress");
    }
    save_model(&model, &a.out)?;
    let trace_path = a.trace.unwrap_or_else(|| default_trace_path(&a.out));
    export_trace(&trace, &trace_path)?;
    if let Some(p) = &a.embeddings {
        export_embeddings(&model, &dataset, p)?;
    }
    let last = trace.final_objective();
    println!(
        "status={:?} iterations={} objective={:.10e}",
        trace.status,
        trace.records.len(),
        last.total
    );
    Ok(())
}

fn cmd_predict(a: PredictArgs) -> std::result::Result<(), Failure> {
    let model = load_model(&a.model)?;
    let hp = model
        .hyperparams
        .clone()
        .ok_or_else(|| Error::InvalidData("model file carries no hyperparameters".into()))?;
    let dataset = load_dataset(&a.data)?;
    if dataset.num_classes() != model.num_classes {
        return Err(Error::DimensionMismatch(format!(
            "model has {} classes, dataset declares {}",
            model.num_classes,
            dataset.num_classes()
        ))
        .into());
    }
    let folded = fold_in(&model, dataset.views(), &hp)?;
    let probs = predict_proba(&model, &folded.coefficients);
    let labels = predict_labels(&model, &folded.coefficients);

    let mut out = String::from("instance,predicted");
    for c in 0..model.num_classes {
        write!(out, ",p{c}").unwrap();
    }
    out.push('\n');
    for (j, l) in labels.iter().enumerate() {
        write!(out, "{j},{l}").unwrap();
        for &p in probs.column(j) {
            write!(out, ",{}", format_number(p)).unwrap();
        }
        out.push('\n');
    }
    write_output(a.out.as_deref(), &out)?;

    let scored: Vec<(usize, usize)> = labels
        .iter()
        .zip(dataset.labels())
        .filter_map(|(&p, t)| t.map(|t| (p, t)))
        .collect();
    if !scored.is_empty() {
        let hits = scored.iter().filter(|(p, t)| p == t).count();
        info!(
            "accuracy on {} labeled instances: {:.4}",
            scored.len(),
            hits as f64 / scored.len() as f64
        );
    }
    Ok(())
}

fn cmd_eval(a: EvalArgs) -> std::result::Result<(), Failure> {
    let base = a.model.hyperparams()?;
    let manifest = read_manifest(&a.data)?;
    let dataset = load_dataset(&a.data)?;
    if a.jobs == 0 {
        return Err(Failure::Usage("--jobs must be at least 1".into()));
    }
    let cfg = CvConfig {
        folds: a.folds,
        repeats: a.repeats,
        seed: a.model.seed,
        jobs: a.jobs,
    };

    let mut methods = Vec::new();
    match &a.grid {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Error::Io {
                path: path.clone(),
                source: e,
            })?;
            for point in parse_grid(&text)? {
                methods.push((
                    Some(point.label()),
                    Method::Factorization(point.apply(&base)?),
                ));
            }
        }
        None => methods.push((None, Method::Factorization(base.clone()))),
    }
    if a.baselines {
        methods.push((None, Method::Knn(FeatureSpace::Concatenated)));
        for v in 0..dataset.num_views() {
            methods.push((None, Method::Knn(FeatureSpace::View(v))));
        }
        let mut nmf = NmfBaseline::new(0, base.dims.total());
        nmf.seed = a.model.seed;
        for v in 0..dataset.num_views() {
            methods.push((
                None,
                Method::Nmf(NmfBaseline {
                    view: v,
                    ..nmf.clone()
                }),
            ));
        }
    }

    let mut reports: Vec<CvReport> = Vec::new();
    for (label, method) in &methods {
        info!("evaluating {}", label.as_deref().unwrap_or(&method.name()));
        let mut report = cross_validate(&dataset, method, &cfg)?;
        if let Some(l) = label {
            report.method = format!("{}[{l}]", report.method);
        }
        info!(
            "{}: accuracy {:.4} +- {:.4} (population std over {} folds)",
            report.method,
            report.mean,
            report.std,
            report.scores.len()
        );
        reports.push(report);
    }
    write_output(a.out.as_deref(), &results_csv(&manifest.name, &reports))?;
    Ok(())
}

fn cmd_synth(a: SynthArgs) -> std::result::Result<(), Failure> {
    let spec = SyntheticSpec {
        num_instances: a.instances,
        num_classes: a.classes,
        view_dims: a.view_dims.clone(),
        dims: BlockDims::new(a.k1, a.k2, a.k3, a.k4)?,
        noise: a.noise,
        separation: a.separation,
        seed: a.seed,
    };
    let syn = generate_synthetic(&spec)?;
    let manifest = save_dataset(&syn.dataset, &a.out_dir, &a.name)?;
    info!("wrote {}", manifest.display());
    println!("{}", manifest.display());
    Ok(())
}

fn cmd_validate(a: ValidateArgs) -> std::result::Result<(), Failure> {
    let dataset = load_dataset(&a.data)?;
    println!(
        "instances={} views={:?} classes={} labeled={} class_counts={:?}",
        dataset.num_instances(),
        dataset.view_dims(),
        dataset.num_classes(),
        dataset.num_labeled(),
        dataset.class_counts()
    );
    if let Some(path) = &a.model {
        let model = load_model(path)?;
        let violations = validate(&model, &dataset);
        for v in &violations {
            println!("violation: {v}");
        }
        if !violations.is_empty() {
            return Err(
                Error::InvalidData(format!("{} model violations", violations.len())).into(),
            );
        }
        println!("model ok");
    }
    Ok(())
}

//! `ortho` command-line front end.
//!
//! Exit codes: 0 success, 2 bad input, 3 the fixed point was not reached.
//! `ORTHO_THREADS` caps the worker pool used for parallel kernels.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ortho_core::datagen::SyntheticSpec;
use ortho_core::io::{self, InputKind};
use ortho_core::kernel::BandwidthChoice;
use ortho_core::orthogonalize::{C2Mode, Truncation, Variant};
use ortho_core::pipeline::{self, ClusterCount, PipelineConfig};
use ortho_core::Error;

#[derive(Parser)]
#[command(name = "ortho", version, about = "Diffusion maps with orthogonalizing kernel refinement")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a noisy-block affinity matrix with truth labels.
    Gen(GenArgs),
    /// Build the kernel, orthogonalize, embed, cluster and export.
    Run(RunArgs),
    /// Export the spectrum (and optionally diffusion coordinates) of the prior kernel.
    Spectrum(SpectrumArgs),
    /// Score a label file against truth labels.
    Eval(EvalArgs),
    /// Render an embedding CSV as an SVG scatter plot.
    Plot(PlotArgs),
}

#[derive(Args)]
struct GenArgs {
    /// JSON with block_size, num_blocks, noise_scale, seed.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Points per block (required unless given in --config).
    #[arg(long)]
    block_size: Option<usize>,
    /// Number of blocks [default: 3].
    #[arg(long)]
    num_blocks: Option<usize>,
    /// Scale of the additive uniform noise [default: 10].
    #[arg(long)]
    noise_scale: Option<f64>,
    /// Random seed [default: 0].
    #[arg(long)]
    seed: Option<u64>,
    /// Affinity matrix output.
    #[arg(long)]
    out: PathBuf,
    /// Truth label output.
    #[arg(long)]
    truth: PathBuf,
}

#[derive(Args)]
struct KernelArgs {
    /// Points, distance or affinity CSV.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Input interpretation: points, distance (squared distances) or affinity; a `#kind=` first line is also honoured.
    #[arg(long)]
    kind: Option<InputKind>,
    /// Adaptive bandwidth from the given neighbor count.
    #[arg(long, conflicts_with = "epsilon")]
    neighbors: Option<usize>,
    /// Fixed bandwidth `exp(−d²/ε)`.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Density normalization exponent [default: 0].
    #[arg(long)]
    alpha: Option<f64>,
    /// Keep the affinity as computed instead of averaging it with its transpose.
    #[arg(long)]
    no_symmetrize: bool,
}

#[derive(Args)]
struct RunArgs {
    /// Pipeline configuration JSON; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    kernel: KernelArgs,
    /// Truth labels; enables metrics.json.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Directory for all run outputs [default: out].
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Orthogonality weight [default: 1].
    #[arg(long)]
    c2: Option<f64>,
    /// `relative` (scaled by the median diffusion distance of the prior) or `absolute`.
    #[arg(long, value_parser = parse_c2_mode)]
    c2_mode: Option<C2Mode>,
    /// `row_stochastic` or `doubly_stochastic` (symmetric Sinkhorn projection).
    #[arg(long, value_parser = parse_variant)]
    variant: Option<Variant>,
    /// `full` or a number of leading eigenpairs.
    #[arg(long)]
    truncation: Option<Truncation>,
    /// Residual tolerance [default: 1e-8].
    #[arg(long)]
    tol: Option<f64>,
    /// Iteration cap [default: 200].
    #[arg(long)]
    max_iter: Option<usize>,
    /// `auto` or a cluster count.
    #[arg(long)]
    k: Option<ClusterCount>,
    /// Diffusion time of the embedding [default: 1].
    #[arg(long)]
    t: Option<f64>,
    /// Nontrivial diffusion coordinates exported [default: 10].
    #[arg(long)]
    embed_dims: Option<usize>,
    /// Coordinates used for k-means [default: k − 1].
    #[arg(long)]
    cluster_dims: Option<usize>,
    /// k-means seed [default: 0].
    #[arg(long)]
    seed: Option<u64>,
    /// k-means restarts [default: 10].
    #[arg(long)]
    kmeans_restarts: Option<usize>,
    /// Write the kernel iterate to `snapshots/` every this many steps.
    #[arg(long)]
    snapshot_every: Option<usize>,
}

#[derive(Args)]
struct SpectrumArgs {
    /// Pipeline configuration JSON supplying input and kernel settings.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    kernel: KernelArgs,
    /// Spectrum output.
    #[arg(long)]
    out: PathBuf,
    /// Optional diffusion coordinate output (trivial column dropped).
    #[arg(long)]
    coords: Option<PathBuf>,
    /// Nontrivial coordinates exported with --coords.
    #[arg(long, default_value_t = 10)]
    dims: usize,
    /// Diffusion time of the coordinates.
    #[arg(long, default_value_t = 1.0)]
    t: f64,
}

#[derive(Args)]
struct EvalArgs {
    /// Predicted labels, one per line.
    #[arg(long)]
    pred: PathBuf,
    /// Truth labels, one per line.
    #[arg(long)]
    truth: PathBuf,
    /// Write the report here as well as to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PlotArgs {
    /// Embedding CSV; the first two columns are plotted.
    #[arg(long)]
    embedding: PathBuf,
    /// Optional labels used to colour points.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// SVG output.
    #[arg(long)]
    out: PathBuf,
}

fn parse_c2_mode(s: &str) -> Result<C2Mode, String> {
    match s {
        "absolute" => Ok(C2Mode::Absolute),
        "relative" => Ok(C2Mode::Relative),
        _ => Err(format!("expected absolute or relative, got {s:?}")),
    }
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    match s {
        "row_stochastic" | "row" => Ok(Variant::RowStochastic),
        "doubly_stochastic" | "ds" => Ok(Variant::DoublyStochastic),
        _ => Err(format!("expected row_stochastic or doubly_stochastic, got {s:?}")),
    }
}

fn load_config(path: Option<&PathBuf>) -> ortho_core::Result<PipelineConfig> {
    match path {
        Some(p) => PipelineConfig::from_json_file(p),
        None => Ok(PipelineConfig::default()),
    }
}

fn apply_kernel_args(cfg: &mut PipelineConfig, a: &KernelArgs) {
    if let Some(v) = &a.input {
        cfg.input = v.clone();
    }
    if let Some(v) = a.kind {
        cfg.kind = v;
    }
    if let Some(v) = a.neighbors {
        cfg.bandwidth = BandwidthChoice::Neighbors(v);
    }
    if let Some(v) = a.epsilon {
        cfg.bandwidth = BandwidthChoice::Epsilon(v);
    }
    if let Some(v) = a.alpha {
        cfg.alpha = v;
    }
    if a.no_symmetrize {
        cfg.symmetrize = false;
    }
}

fn run(a: RunArgs) -> ortho_core::Result<ExitCode> {
    let mut cfg = load_config(a.config.as_ref())?;
    apply_kernel_args(&mut cfg, &a.kernel);
    macro_rules! set {
        ($($field:ident).+ = $value:expr) => {
            if let Some(v) = $value {
                cfg.$($field).+ = v;
            }
        };
    }
    set!(truth = a.truth.map(Some));
    set!(output_dir = a.output_dir);
    set!(ortho.c2 = a.c2);
    set!(ortho.c2_mode = a.c2_mode);
    set!(ortho.variant = a.variant);
    set!(ortho.truncation = a.truncation);
    set!(ortho.tol = a.tol);
    set!(ortho.max_iter = a.max_iter);
    set!(k = a.k);
    set!(t = a.t);
    set!(embed_dims = a.embed_dims);
    set!(cluster_dims = a.cluster_dims.map(Some));
    set!(seed = a.seed);
    set!(kmeans_restarts = a.kmeans_restarts);
    set!(snapshot_every = a.snapshot_every.map(Some));

    let report = pipeline::run_pipeline(&cfg)?;
    if let Some(m) = &report.metrics {
        println!("{}", serde_json::to_string(m)?);
    }
    if report.converged {
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!(
            "ortho: fixed point not reached within {} iterations; outputs written from the last iterate",
            report.resolved.iterations
        );
        Ok(ExitCode::from(3))
    }
}

fn dispatch(cmd: Command) -> ortho_core::Result<ExitCode> {
    match cmd {
        Command::Gen(a) => {
            let mut spec: SyntheticSpec = match &a.config {
                Some(p) => io::read_json(p)?,
                None => SyntheticSpec::new(0, 0),
            };
            if let Some(v) = a.block_size {
                spec.block_size = v;
            }
            if let Some(v) = a.num_blocks {
                spec.num_blocks = v;
            }
            if let Some(v) = a.noise_scale {
                spec.noise_scale = v;
            }
            if let Some(v) = a.seed {
                spec.seed = v;
            }
            pipeline::gen(&spec, &a.out, &a.truth)?;
        }
        Command::Run(a) => return run(a),
        Command::Spectrum(a) => {
            let mut cfg = load_config(a.config.as_ref())?;
            apply_kernel_args(&mut cfg, &a.kernel);
            if cfg.input.as_os_str().is_empty() {
                return Err(Error::InvalidInput("no input file given".into()));
            }
            let coords = a.coords.as_deref().map(|p| (p, a.dims, a.t));
            pipeline::spectrum(&cfg.input, cfg.kind, &cfg.kernel_options(), &a.out, coords)?;
        }
        Command::Eval(a) => {
            let report = pipeline::eval(&a.pred, &a.truth, a.out.as_deref())?;
            println!("{}", serde_json::to_string(&report)?);
        }
        Command::Plot(a) => pipeline::plot(&a.embedding, a.labels.as_deref(), &a.out)?,
    }
    Ok(ExitCode::SUCCESS)
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::ConvergenceFailure { .. } | Error::RowUnderflow { .. } => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Ok(v) = std::env::var("ORTHO_THREADS") {
        match v.parse::<usize>() {
            Ok(n) if n > 0 => {
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                    log::warn!("could not configure thread pool: {e}");
                }
            }
            _ => {
                eprintln!("ortho: ORTHO_THREADS must be a positive integer, got {v:?}");
                return ExitCode::from(2);
            }
        }
    }
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("ortho: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

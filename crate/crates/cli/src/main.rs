use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;

#[derive(Parser, Debug)]
#[command(name = "l1sketch", version, about = "Oblivious l1 sketches, streaming l1 estimation and independence testing")]
pub struct Cli {
    /// Seed for every random choice; `L1SKETCH_SEED` takes precedence.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Sketch a matrix file and report subspace distortion.
    Subspace(SubspaceArgs),
    /// Estimate the entrywise l1 norm of a matrix file.
    Entrywise(EntrywiseArgs),
    /// Estimate the l1 norm of an `i delta` stream.
    #[command(name = "estimate-l1")]
    EstimateL1(EstimateL1Args),
    /// Estimate the distance between a joint distribution and the product of its marginals.
    Independence(IndependenceArgs),
    /// Per-trial distortion of the i.i.d. design embeddings.
    #[command(name = "bench-iid")]
    BenchIid(BenchIidArgs),
    /// Benchmarks, spelled `bench iid`.
    Bench {
        #[command(subcommand)]
        which: BenchKind,
    },
    /// Run the acceptance suite.
    Suite(SuiteArgs),
}

#[derive(Subcommand, Debug)]
pub enum BenchKind {
    Iid(BenchIidArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SketchChoice {
    Msketch,
    DenseCauchy,
    Identity,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ScaleChoice {
    Paper,
    Calibrated,
}

#[derive(Args, Debug)]
pub struct SubspaceArgs {
    /// Matrix file: CSV for `.csv`/`.txt`, the binary layout otherwise.
    #[arg(long)]
    pub input: PathBuf,
    /// Where to write the sketched matrix (same format rules).
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = SketchChoice::Msketch)]
    pub sketch: SketchChoice,
    #[arg(long, value_enum, default_value_t = ScaleChoice::Calibrated)]
    pub scale: ScaleChoice,
    #[arg(long, default_value_t = 0.5)]
    pub eps: f64,
    #[arg(long, default_value_t = 0.1)]
    pub delta: f64,
    #[arg(long, default_value_t = 2.0)]
    pub branching: f64,
    #[arg(long, default_value_t = 1)]
    pub n0: usize,
    #[arg(long, default_value_t = 4096)]
    pub n_level: usize,
    #[arg(long, default_value_t = 1)]
    pub h_max: usize,
    /// Rows of the dense Cauchy sketch.
    #[arg(long, default_value_t = 64)]
    pub rows: usize,
    /// Gaussian directions used for the distortion report.
    #[arg(long, default_value_t = 100)]
    pub directions: usize,
}

#[derive(Args, Debug)]
pub struct EntrywiseArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = ScaleChoice::Calibrated)]
    pub scale: ScaleChoice,
    #[arg(long, default_value_t = 0.5)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0.1)]
    pub delta: f64,
    #[arg(long, default_value_t = 2.0)]
    pub branching: f64,
    #[arg(long, default_value_t = 64)]
    pub n0: usize,
    #[arg(long, default_value_t = 64)]
    pub n_level: usize,
}

#[derive(Args, Debug)]
pub struct EstimateL1Args {
    /// Lines `i delta` with 1-based `i`.
    #[arg(long)]
    pub stream: PathBuf,
    #[arg(long, default_value_t = 0.2)]
    pub epsilon: f64,
    /// Ratio bound of the supplied or rough `M_hat`; a power of two.
    #[arg(long = "K", default_value_t = 4)]
    pub k: u64,
    /// Dimension; defaults to the largest index in the stream.
    #[arg(long)]
    pub n: Option<usize>,
    /// Upper bound `M <= M_hat <= K M`; a rough sketch supplies it when absent.
    #[arg(long)]
    pub m_hat: Option<f64>,
    /// Repetitions per `K'` of the boosted estimator; 1 runs the plain estimator.
    #[arg(long, default_value_t = 1)]
    pub boost: usize,
    #[arg(long, default_value_t = 1 << 14)]
    pub buckets: usize,
    #[arg(long, default_value_t = 7)]
    pub hh_reps: usize,
}

#[derive(Args, Debug)]
pub struct IndependenceArgs {
    #[arg(long)]
    pub q: usize,
    #[arg(long)]
    pub d: usize,
    #[arg(long, default_value_t = 0.3)]
    pub eps: f64,
    #[arg(long, default_value_t = 0.1)]
    pub delta: f64,
    /// Lines `i1 .. iq` or `i1 .. iq delta` with 1-based indices.
    #[arg(long)]
    pub stream: PathBuf,
    /// Use the closed-form sketch sizes instead of the desk-scale ones.
    #[arg(long)]
    pub paper_sizes: bool,
    /// Drop `elapsed_ms` so that reruns are byte-identical.
    #[arg(long)]
    pub omit_timing: bool,
}

#[derive(Args, Debug)]
pub struct BenchIidArgs {
    #[arg(long)]
    pub p: f64,
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub d: usize,
    /// Rows; the method's formula is used when absent.
    #[arg(long)]
    pub r: Option<usize>,
    #[arg(long, default_value_t = 10)]
    pub trials: usize,
    #[arg(long, default_value_t = 0.3)]
    pub eps: f64,
    #[arg(long, default_value_t = 1.0)]
    pub c_rows: f64,
    #[arg(long, default_value_t = 1.0)]
    pub c_kappa: f64,
    /// Skip the validity range check of `r`.
    #[arg(long)]
    pub force: bool,
    /// Directions per kind and trial.
    #[arg(long, default_value_t = 20)]
    pub directions: usize,
}

#[derive(Args, Debug)]
pub struct SuiteArgs {
    /// Run a single criterion by name, e.g. `boundary-lemma`.
    #[arg(long)]
    pub only: Option<String>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(cli) {
        Ok(out) => {
            print!("{}", out.text);
            ExitCode::from(out.code)
        }
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use filterprune::harness::{
    approach, cmd_generate, cmd_prune, cmd_report, cmd_run_matrix, cmd_saliency, cmd_train_baseline, CellStatus, ExperimentSpec, HarnessError,
};
use filterprune::saliency::Metric;
use filterprune::schedules::Strategy;

#[derive(Parser)]
#[command(name = "filterprune", version, about = "Structured filter pruning experiments on synthetic radar spectrograms")]
struct Cli {
    /// Experiment spec (TOML). Defaults apply when omitted.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,
    /// Override `output_dir`.
    #[arg(short, long, global = true)]
    output_dir: Option<PathBuf>,
    /// Override `dataset.per_class`.
    #[arg(long, global = true)]
    per_class: Option<usize>,
    /// Override `dataset.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override `dataset.snr_set` (repeatable).
    #[arg(long, global = true)]
    snr: Vec<f64>,
    /// Override `workers`.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the effective experiment spec as TOML.
    Config,
    /// Synthesize the dataset.
    Generate {
        /// Also write graymap images of every TF map.
        #[arg(long)]
        pgm: bool,
    },
    /// Train and save the baseline model.
    Train,
    /// Score the baseline's filters and write table and histogram.
    Saliency {
        #[arg(long, default_value = "l1")]
        metric: Metric,
    },
    /// Run a single pruning cell.
    Prune {
        #[arg(long)]
        metric: Metric,
        #[arg(long)]
        strategy: Strategy,
        #[arg(long)]
        p: f64,
    },
    /// Run every metric x strategy x p cell.
    Matrix,
    /// Validate results and print them as a table.
    Report,
}

fn spec(cli: &Cli) -> Result<ExperimentSpec, HarnessError> {
    let mut spec = match &cli.config {
        Some(path) => ExperimentSpec::load(path)?,
        None => ExperimentSpec::default(),
    };
    if let Some(dir) = &cli.output_dir {
        spec.output_dir = dir.clone();
    }
    if let Some(n) = cli.per_class {
        spec.dataset.per_class = n;
    }
    if let Some(seed) = cli.seed {
        spec.dataset.seed = seed;
    }
    if !cli.snr.is_empty() {
        spec.dataset.snr_set = cli.snr.clone();
    }
    if let Some(w) = cli.workers {
        spec.workers = w;
    }
    spec.validate()?;
    Ok(spec)
}

fn run(cli: &Cli) -> Result<bool, HarnessError> {
    let mut spec = spec(cli)?;
    match &cli.command {
        Command::Config => print!("{}", spec.to_toml()?),
        Command::Generate { pgm } => {
            spec.pgm |= pgm;
            let s = cmd_generate(&spec)?;
            println!("wrote {} train, {} val, {} test examples to {}", s.train, s.val, s.test, spec.data_dir().display());
        }
        Command::Train => {
            let r = cmd_train_baseline(&spec)?;
            println!("baseline test accuracy {:.4}, {} params, {} FLOPs", r.test_accuracy, r.params, r.flops);
        }
        Command::Saliency { metric } => {
            let t = cmd_saliency(&spec, *metric)?;
            let filters: usize = t.per_layer.values().map(Vec::len).sum();
            println!("scored {filters} filters in {} layers into {}", t.per_layer.len(), spec.saliency_dir().display());
        }
        Command::Prune { metric, strategy, p } => {
            let row = cmd_prune(&spec, *metric, *strategy, *p)?;
            println!(
                "{} p={}: compression {:.2}%, speedup {:.2}x, accuracy {:.4}",
                approach(*metric, *strategy),
                p,
                row.model_compression_pct,
                row.speedup,
                row.top1_acc
            );
        }
        Command::Matrix => {
            let m = cmd_run_matrix(&spec)?;
            for c in m.cells.iter().filter(|c| c.status == CellStatus::Failed) {
                eprintln!("failed: {} p={}: {}", approach(c.metric, c.strategy), c.p, c.error.as_deref().unwrap_or(""));
            }
            println!("{} of {} cells done; results in {}", m.cells.len() - m.failed(), m.cells.len(), spec.results_path().display());
            return Ok(m.all_done());
        }
        Command::Report => print!("{}", cmd_report(&spec)?),
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

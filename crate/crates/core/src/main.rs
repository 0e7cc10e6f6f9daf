use std::fs::{self, File};
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use standin::harness::config::ExperimentConfig;
use standin::harness::{experiment, verify};
use standin::Error;

#[derive(Parser)]
#[command(name = "standin", version, about = "Stand-in gradient defense: training, attacks and checks")]
struct Cli {
    /// Configuration file (`section.key = value` lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides `run.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Overrides `run.output`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Federated training; writes history.csv.
    Train,
    /// Writes the round-one message of a batch-one client plus the model and sample.
    DumpGrads,
    /// Attacks a dump directory; writes attack.csv and reconstructions.
    Attack {
        /// Directory written by dump-grads (defaults to `attack.input`, then the output dir).
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Defense-efficacy table; writes results.csv.
    Experiment,
    /// Numeric checks of the stand-in derivative; exits 1 if any fails.
    Verify,
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, Error> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn create(path: PathBuf) -> Result<BufWriter<File>, Error> {
    Ok(BufWriter::new(File::create(path)?))
}

fn run(cli: &Cli) -> Result<bool, Error> {
    if let Command::Verify = cli.command {
        let report = verify::verify_derivatives()?;
        for check in &report.checks {
            println!("{check}");
        }
        return Ok(report.passed());
    }

    let cfg = load_config(cli)?;
    fs::create_dir_all(&cfg.output)?;
    match &cli.command {
        Command::Train => {
            let history = experiment::run_training(&cfg)?;
            experiment::write_history_csv(&history, &cfg, create(cfg.output.join("history.csv"))?)?;
            if let Some(last) = history.records.last() {
                println!(
                    "round {}: train loss {:.4}, test accuracy {:.4}",
                    last.round, last.train_loss, last.test_accuracy
                );
            }
        }
        Command::DumpGrads => {
            experiment::dump_round_one(&cfg, &cfg.output)?;
            println!("wrote dumps to {}", cfg.output.display());
        }
        Command::Attack { input } => {
            let input = input.clone().or_else(|| cfg.attack_input.clone()).unwrap_or_else(|| cfg.output.clone());
            let rows = experiment::attack_dumps(&cfg, &input, &cfg.output)?;
            experiment::write_attack_csv(&rows, create(cfg.output.join("attack.csv"))?)?;
            for r in &rows {
                match r.quality {
                    Some(q) => println!("{}: label {} (true {}), mse {:.6e}, psnr {:.2}, ssim {:.4}",
                        r.method, r.inferred_label, r.true_label, q.mse, q.psnr, q.ssim),
                    None => println!("{}: label {} (true {})", r.method, r.inferred_label, r.true_label),
                }
            }
        }
        Command::Experiment => {
            let rows = experiment::run_experiment(&cfg)?;
            experiment::write_experiment_csv(&rows, create(cfg.output.join("results.csv"))?)?;
            println!("wrote {} rows to {}", rows.len(), cfg.output.join("results.csv").display());
        }
        Command::Verify => unreachable!(),
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e @ Error::Config(_)) => {
            eprintln!("{e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fedsim::harness::{
    check_lemmas, compare_runs, default_seed, diagnose_weights, emit_csv, run_experiment, seed_path, ExperimentPreset,
    RunConfigFile,
};
use fedsim::{run, FedError};

#[derive(Parser)]
#[command(name = "fedsim", version, about = "Federated shuffling simulator")]
struct Cli {
    /// Master seed; overrides config seeds and FEDSIM_SEED.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a JSON configuration and write one CSV per seed.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output path when the config has none.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a named experiment preset.
    Experiment {
        #[arg(long)]
        preset: String,
        #[arg(long, default_value = "results")]
        out: PathBuf,
        /// Number of seeds, counted up from the master seed.
        #[arg(long, default_value_t = 1)]
        seeds: u64,
    },
    /// Print objective weights and effective weights for a configuration.
    DiagnoseWeights {
        #[arg(long)]
        config: PathBuf,
    },
    /// Exact-enumeration checks of the sampling variance bounds.
    CheckLemmas {
        #[arg(long, default_value_t = 5)]
        n: usize,
        #[arg(long, default_value_t = 100)]
        trials: usize,
    },
    /// Summarize CSV outputs per method.
    Compare {
        #[arg(required = true, num_args = 2..)]
        csv: Vec<PathBuf>,
        /// Check the ordering expected for this preset.
        #[arg(long)]
        assert: Option<String>,
    },
}

fn exit_code(e: &FedError) -> u8 {
    match e {
        FedError::Config(_) | FedError::Io { .. } | FedError::Argument(_) => 2,
        FedError::Divergence { .. } => 3,
        _ => 1,
    }
}

fn execute(cli: Cli) -> Result<(), FedError> {
    match cli.command {
        Command::Run { config, out } => {
            let prepared = RunConfigFile::load(&config)?.prepare(cli.seed)?;
            let base = prepared
                .output_path
                .clone()
                .or(out)
                .unwrap_or_else(|| PathBuf::from("run.csv"));
            let multiple = prepared.configs.len() > 1;
            for c in &prepared.configs {
                let log = run(c, &prepared.problem)?;
                let path = seed_path(&base, c.seed, multiple);
                emit_csv(&log, &path)?;
                let last = log.rows.last();
                println!(
                    "{} seed {}: {} rounds, final f_gap {:.6e} -> {}",
                    c.name,
                    c.seed,
                    log.rows.len(),
                    last.map_or(f64::NAN, |r| r.f_gap),
                    path.display()
                );
            }
        }
        Command::Experiment { preset, out, seeds } => {
            let preset: ExperimentPreset = preset.parse()?;
            let start = cli.seed.unwrap_or_else(default_seed);
            let seeds: Vec<u64> = (0..seeds).map(|k| start + k).collect();
            let mut paths = run_experiment(preset, &out, &seeds)?;
            paths.sort();
            for p in paths {
                println!("{}", p.display());
            }
        }
        Command::DiagnoseWeights { config } => {
            let prepared = RunConfigFile::load(&config)?.prepare(cli.seed)?;
            println!("client_id,w,w_hat");
            for (i, w, wh) in diagnose_weights(&prepared)? {
                println!("{i},{w:.16e},{wh:.16e}");
            }
        }
        Command::CheckLemmas { n, trials } => {
            let reports = check_lemmas(n, trials, cli.seed.unwrap_or_else(default_seed))?;
            let mut ok = true;
            for r in &reports {
                ok &= r.passed();
                println!(
                    "{} {}: {} cases, {} failures, worst {:.3e}",
                    if r.passed() { "PASS" } else { "FAIL" },
                    r.name,
                    r.cases,
                    r.failures,
                    r.worst
                );
            }
            if !ok {
                return Err(FedError::Protocol("lemma checks failed".into()));
            }
        }
        Command::Compare { csv, assert } => {
            let table = compare_runs(&csv)?;
            print!("{}", table.render());
            if let Some(name) = assert {
                let preset: ExperimentPreset = name.parse()?;
                table.check(preset)?;
                println!("PASS ordering for {preset}");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

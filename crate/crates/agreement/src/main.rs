use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use agreement::experiments::{run_config, resolve, validate_config, Overrides, PRESETS};

#[derive(Parser)]
#[command(name = "agreement", version, about = "Agreement-testing experiments")]
struct Cli {
    /// Worker threads; 0 uses every available core.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a named preset and write report.json, timing.json and metrics.csv.
    Run {
        preset: String,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override one key, e.g. `--set tester.k=6`. Repeatable.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Check a config file and print it with every default filled in.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    ListPresets,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match cli.command {
        Command::ListPresets => {
            for p in PRESETS {
                println!("{:<22} {}", p.name(), p.description());
            }
            ExitCode::SUCCESS
        }
        Command::Validate { config } => match validate_config(&config) {
            Ok(cfg) => {
                print!("{}", cfg.to_toml());
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(2)
            }
        },
        Command::Run {
            preset,
            config,
            seed,
            out,
            set,
        } => {
            let overrides = Overrides { config, seed, out, set };
            let cfg = match resolve(Some(&preset), &overrides) {
                Ok(cfg) => cfg,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(2);
                }
            };
            let record = run_config(&cfg);
            for v in &record.verdicts {
                println!("{}", v.line());
            }
            if let Err(e) = record.write(&cfg.run.out) {
                eprintln!("error: cannot write {}: {e}", cfg.run.out.display());
                return ExitCode::from(2);
            }
            println!("wrote {} ({:.2} s)", cfg.run.out.display(), record.wall_seconds);
            if record.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
    }
}

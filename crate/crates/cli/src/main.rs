use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use qnd_cli::config::Scenario;
use qnd_cli::output::Artifacts;
use qnd_cli::{execute, load_config, read_file, RunError, EXIT_OK};
use qnd_core::decoder::{decode, DecoderParams};
use qnd_core::detection::read_atoms_csv;

#[derive(Parser)]
#[command(name = "qnd", version, about = "Simulate QND counting of cavity photons")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a named scenario and write its artifacts.
    Run {
        #[arg(value_enum)]
        scenario: Scenario,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Override one configuration key, `key=value`. Repeatable.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        /// Output directory (default `out/<scenario>`).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Decode a recorded atom stream (time_s,true_n,detected).
    Decode {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 8)]
        window: usize,
        /// Write decoded.csv and decoded_jumps.json here instead of printing the samples.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a configuration file and print it fully resolved.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), RunError> {
    match cli.command {
        Command::Run { scenario, config, mut set, out, seed } => {
            set.push(format!("scenario={scenario}"));
            if let Some(s) = seed {
                set.push(format!("base_seed={s}"));
            }
            let raw = load_config(config.as_deref(), &set)?;
            let cfg = raw.resolve()?;
            let dir = out.or(cfg.output_dir.clone()).unwrap_or_else(|| PathBuf::from("out").join(scenario.name()));
            let artifacts = execute(&cfg)?;
            for path in artifacts.write_all(&dir)? {
                println!("{}", path.display());
            }
            Ok(())
        }
        Command::Decode { input, window, out } => {
            let atoms = read_atoms_csv(read_file(&input)?.as_bytes())?;
            let trace = decode(&atoms, &DecoderParams::with_window(window))?;
            let mut samples = Vec::new();
            trace.write_samples_csv(&mut samples)?;
            match out {
                Some(dir) => {
                    let mut a = Artifacts::default();
                    a.add("decoded.csv", samples);
                    a.add_json("decoded_jumps.json", &trace.jumps)?;
                    for p in a.write_all(&dir)? {
                        println!("{}", p.display());
                    }
                }
                None => {
                    use std::io::Write;
                    std::io::stdout().write_all(&samples)?;
                }
            }
            Ok(())
        }
        Command::Validate { config } => {
            let mut raw = load_config(Some(&config), &[])?;
            if raw.scenario.is_none() {
                // A file without a scenario is still checkable; report the telegraph defaults.
                raw.scenario = Some(Scenario::Telegraph);
            }
            print!("{}", raw.resolve()?.to_text());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::from(EXIT_OK),
        Err(e) => {
            eprintln!("qnd: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}


use clap::Parser;
use std::path::PathBuf;
use std::process::ExitCode;

use horolab::experiments::NAMES;

/// Experiments on diagonal flows over the space of unimodular lattices.
#[derive(Parser, Debug)]
#[command(name = "horolab", version)]
struct Cli {
    /// Experiment to run.
    #[arg(value_parser = clap::builder::PossibleValuesParser::new(NAMES))]
    experiment: String,

    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Overrides as `--key value` pairs, applied after the file.
    #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
    overrides: Vec<String>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let text = match &cli.config {
        Some(p) => match std::fs::read_to_string(p) {
            Ok(t) => Some(t),
            Err(e) => {
                eprintln!("error: cannot read {}: {e}", p.display());
                return ExitCode::from(2);
            }
        },
        None => None,
    };
    let code = horolab::main_with(&cli.experiment, text.as_deref(), &cli.overrides);
    ExitCode::from(code as u8)
}

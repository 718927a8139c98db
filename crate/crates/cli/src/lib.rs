//! Command-line front end for the persist toolkit.

pub mod config;
pub mod run;

use std::path::PathBuf;

use clap::Parser;

use config::{Command, FlagValues};

#[derive(Debug, Parser)]
#[command(name = "persist", version, about = "Numerical persistence certificates for perturbed ODE equilibria")]
pub struct Cli {
    /// Command to run; may come from the config file instead.
    #[arg(value_enum)]
    pub command: Option<Command>,
    /// Model file path or `builtin:NAME`.
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long, allow_hyphen_values = true, conflicts_with = "eps_range")]
    pub eps: Option<f64>,
    #[arg(long)]
    pub eps_range: Option<f64>,
    /// Output directory [default: out].
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// JSON or TOML run configuration; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub emit_plot_data: bool,
    /// Initial state for `simulate`, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub x0: Option<Vec<f64>>,
    /// End time for `simulate`.
    #[arg(long)]
    pub t_end: Option<f64>,
}

impl Cli {
    pub fn flags(&self) -> FlagValues {
        FlagValues {
            command: self.command,
            model: self.model.clone(),
            eta: self.eta,
            eps: self.eps,
            eps_range: self.eps_range,
            output_dir: self.out.clone(),
            emit_plot_data: self.emit_plot_data,
            x0: self.x0.clone(),
            t_end: self.t_end,
            config: self.config.clone(),
        }
    }
}

/// Parses arguments, runs, and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let cfg = match config::load_config(&cli.flags()) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("persist: {e}");
            return 1;
        }
    };
    match run::run(&cfg) {
        Ok(outcome) => outcome.exit_code(),
        Err(e) => {
            eprintln!("persist: {e}");
            1
        }
    }
}

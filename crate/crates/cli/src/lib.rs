//! Driver behind the `tfim-lightcone` binary.
//!
//! ```text
//! tfim-lightcone simulate   --L 51 --h 0.6 --order 1 --t-end 500 --out run
//! tfim-lightcone analyze    run --epsilon 1e-4 --out run/eps1e-4
//! tfim-lightcone sweep      --h-list 0.3,0.4,0.5,0.6 --order 1 --out sweep
//! tfim-lightcone pt-compare --h 0.1 --order 1 --t-end 3 --out pt
//! ```
//!
//! Exit codes: 0 success, 1 usage, 2 numerical failure, 3 analysis failure.

pub mod config;
pub mod run;

pub use config::{parse_args, Command, RunConfig};
pub use run::run_command;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Clap(#[from] clap::Error),
    #[error(transparent)]
    Core(#[from] tfim_lightcone::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        use tfim_lightcone::Error as E;
        match self {
            CliError::Usage(_) => 1,
            CliError::Clap(e) if !e.use_stderr() => 0,
            CliError::Clap(_) => 1,
            CliError::Core(e) => match e {
                E::InvalidParams { .. } | E::Io(_) => 1,
                E::IntegrationBlowup { .. } | E::OrderMismatch { .. } => 2,
                E::Mismatch(_) | E::Fit(_) | E::Analysis(_) | E::Format { .. } | E::Csv(_) => 3,
            },
        }
    }
}

/// Parses `args` (program name first), runs, and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let result = parse_args(args).and_then(|cfg| run_command(&cfg));
    match result {
        Ok(()) => 0,
        Err(CliError::Clap(e)) => {
            let _ = e.print();
            CliError::Clap(e).exit_code()
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

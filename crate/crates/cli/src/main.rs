use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(tfim_lightcone_cli::main_with_args(std::env::args_os()))
}

use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(pps_cli::run(std::env::args_os()) as u8)
}

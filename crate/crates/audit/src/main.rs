use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(score_audit::cli::run_from(std::env::args_os()))
}

use std::process::ExitCode;

fn main() -> ExitCode {
    rebalance::cli::run_from(std::env::args_os())
}

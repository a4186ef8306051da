use std::process::ExitCode;

fn main() -> ExitCode {
    cscausal::cli::main_with_args(std::env::args_os())
}

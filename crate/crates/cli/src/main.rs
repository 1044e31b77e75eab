use std::process::ExitCode;

fn main() -> ExitCode {
    p2va_cli::run(std::env::args_os())
}

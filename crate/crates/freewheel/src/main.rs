use std::process::ExitCode;

fn main() -> ExitCode {
    freewheel::cli::run()
}

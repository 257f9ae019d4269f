use std::process::ExitCode;

fn main() -> ExitCode {
    gridflex::cli::run()
}

use std::process::ExitCode;

fn main() -> ExitCode {
    bess_market::cli::main()
}

use std::process::ExitCode;

fn main() -> ExitCode {
    sheetfrag_cli::cli::main()
}

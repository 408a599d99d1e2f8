use std::process::ExitCode;

fn main() -> ExitCode {
    let code = dysaug_cli::run(std::env::args().skip(1).collect());
    ExitCode::from(code as u8)
}

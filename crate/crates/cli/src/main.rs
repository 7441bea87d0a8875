use std::process::ExitCode;

fn main() -> ExitCode {
    let code = capaboost_cli::run_cli(
        std::env::args_os(),
        std::env::var_os(capaboost_cli::OUT_DIR_ENV),
        &mut std::io::stdout(),
        &mut std::io::stderr(),
    );
    ExitCode::from(code)
}

use std::process::ExitCode;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match multirank::cli::run_from_args(std::env::args()) {
        Ok(status) if status.clean() => ExitCode::SUCCESS,
        Ok(status) => {
            eprintln!(
                "warning: {} unconverged walk(s), {} skipped query(ies)",
                status.unconverged, status.skipped
            );
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

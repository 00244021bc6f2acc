use clap::Parser;

use meyers_cli::{run, CliError, RunConfig};

fn init_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("MEYERS_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::validation(format!("MEYERS_THREADS must be a positive integer, got {v:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::validation(format!("cannot start {n} worker threads: {e}")))
}

fn main() {
    let config = RunConfig::parse();
    let status = init_threads().and_then(|_| run(&config)).unwrap_or_else(|e| {
        eprintln!("{}", e.to_json());
        e.exit_code()
    });
    std::process::exit(status);
}

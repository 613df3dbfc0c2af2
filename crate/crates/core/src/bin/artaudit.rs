use std::process::ExitCode;

use clap::Parser;

use artaudit::cli::{run, Cli};

// glibc malloc fragments badly when small cached vectors interleave with
// per-image buffers; long experiments grew by ~1 GB per seed.
#[global_allocator]
static ALLOC: mimalloc::MiMalloc = mimalloc::MiMalloc;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use rbmo_core::scenario::{run, Scenario};
use rbmo_core::Error;

/// Runs one scenario file and writes report.json, series.csv and timings.json.
#[derive(Parser, Debug)]
#[command(name = "rbmo", version)]
struct Args {
    /// scenario JSON
    #[arg(long)]
    scenario: PathBuf,
    /// output directory
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// worker threads (results do not depend on it)
    #[arg(long)]
    threads: Option<usize>,
    /// overrides the scenario seed
    #[arg(long)]
    seed: Option<u64>,
}

fn fail(e: &Error) -> ExitCode {
    let dbg = format!("{e:?}");
    let kind = dbg.split(|c: char| !c.is_alphanumeric()).next().unwrap_or("Error");
    eprintln!("{}", serde_json::json!({"error": kind, "message": e.to_string()}));
    match e {
        Error::Certificate(_) => ExitCode::from(2),
        _ => ExitCode::from(1),
    }
}

fn main() -> ExitCode {
    let args = Args::parse();
    let mut sc = match Scenario::load(&args.scenario) {
        Ok(s) => s,
        Err(e) => return fail(&e),
    };
    if let Some(seed) = args.seed {
        sc.seed = seed;
    }
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(t) = args.threads {
        pool = pool.num_threads(t.max(1));
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => return fail(&Error::InvalidArgument(e.to_string())),
    };
    let out = match pool.install(|| run(&sc)) {
        Ok(o) => o,
        Err(e) => return fail(&e),
    };
    if let Err(e) = out.write(&args.out, &sc.outputs) {
        return fail(&e);
    }
    if out.valid {
        ExitCode::SUCCESS
    } else {
        eprintln!("{}", serde_json::json!({"error": "ValidationFailed", "message": "a check in the report failed"}));
        ExitCode::from(2)
    }
}

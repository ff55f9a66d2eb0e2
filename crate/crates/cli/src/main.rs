use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use qtherm_cli::config::{self, Experiment};
use qtherm_cli::experiments::{self, RunError, RunOptions};

#[derive(Parser)]
#[command(name = "qtherm", version, about = "Run quantum statistical mechanics experiments from a TOML config")]
struct Cli {
    /// Experiment to run (see --list).
    experiment: Option<String>,
    /// Path to the TOML configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; overrides `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Random seed; overrides `run.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Exit with status 3 if any check fails.
    #[arg(long)]
    assert: bool,
    /// Largest Hilbert-space dimension allowed.
    #[arg(long, default_value_t = qtherm::linalg::DEFAULT_MAX_DIM)]
    max_dim: usize,
    /// List the available experiments and exit.
    #[arg(long)]
    list: bool,
    /// Print the normalized configuration and exit without running.
    #[arg(long)]
    validate: bool,
}

fn fail(code: u8, msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.list {
        for e in Experiment::ALL {
            println!("{:<15} {}", e.name(), e.summary());
        }
        return ExitCode::SUCCESS;
    }
    if let Ok(n) = std::env::var("QTHERM_THREADS") {
        match n.trim().parse::<usize>() {
            Ok(n) if n > 0 => {
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                    return fail(1, format!("cannot size the thread pool: {e}"));
                }
            }
            _ => return fail(2, format!("QTHERM_THREADS must be a positive integer, got {n:?}")),
        }
    }
    let Some(name) = cli.experiment else {
        return fail(2, "missing experiment name (see --list)");
    };
    let Some(requested) = Experiment::parse(&name) else {
        return fail(2, format!("unknown experiment {name:?} (see --list)"));
    };
    let Some(path) = cli.config else {
        return fail(2, "missing --config PATH");
    };
    let text = match std::fs::read_to_string(&path) {
        Ok(t) => t,
        Err(e) => return fail(2, format!("cannot read {}: {e}", path.display())),
    };
    let mut cfg = match config::validate(&text) {
        Ok(c) => c,
        Err(errors) => {
            for e in &errors {
                eprintln!("config error: {e}");
            }
            return ExitCode::from(2);
        }
    };
    if cfg.experiment != requested {
        return fail(
            2,
            format!("config declares experiment {:?}, not {name:?}", cfg.experiment.name()),
        );
    }
    if let Some(seed) = cli.seed {
        cfg.run.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output.dir = out.to_string_lossy().into_owned();
    }
    if cli.validate {
        print!("{}", cfg.to_toml());
        return ExitCode::SUCCESS;
    }

    let rs = match experiments::run(&cfg, &RunOptions { max_dim: cli.max_dim }) {
        Ok(rs) => rs,
        Err(RunError::Config(errors)) => {
            for e in &errors {
                eprintln!("config error: {e}");
            }
            return ExitCode::from(2);
        }
        Err(e) => return fail(e.exit_code() as u8, e),
    };
    let dir = PathBuf::from(&cfg.output.dir);
    let written = match rs.write(&dir, &cfg.output.name) {
        Ok(w) => w,
        Err(e) => return fail(1, format!("writing results to {}: {e}", dir.display())),
    };
    let normalized = dir.join(format!("{}.config.toml", cfg.output.name));
    if let Err(e) = qtherm_cli::output::write_atomic(&normalized, cfg.to_toml().as_bytes()) {
        return fail(1, format!("writing {}: {e}", normalized.display()));
    }
    for c in &rs.checks {
        println!(
            "{} {:<36} value {:<24} threshold {}",
            if c.pass { "PASS" } else { "FAIL" },
            c.name,
            qtherm_cli::output::fmt_f64(c.value),
            qtherm_cli::output::fmt_f64(c.threshold)
        );
    }
    for p in written.iter().chain(std::iter::once(&normalized)) {
        println!("wrote {}", p.display());
    }
    if cli.assert && !rs.all_pass() {
        eprintln!("error: at least one check failed");
        return ExitCode::from(3);
    }
    ExitCode::SUCCESS
}

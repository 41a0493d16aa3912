use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use gcflow::config::RunConfig;
use gcflow::run::{EXIT_ERROR, run};

/// Curvature-flow solver for convex bodies given by their support function.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    /// key = value config file; flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Sphere dimension (1 or 2).
    #[arg(long)]
    n: Option<usize>,
    /// Grid resolution (latitudes for n=2, angles for n=1); even, >= 8.
    #[arg(long)]
    res: Option<usize>,
    /// Flow exponent; admissible range p > -(n+1).
    #[arg(long, allow_hyphen_values = true)]
    p: Option<f64>,
    /// Weight expression in u1, u2, u3, e.g. "1+0.5*u3^2".
    #[arg(long)]
    phi: Option<String>,
    /// Initial body: ball:r | ellipsoid:a,b[,c] | perturbed_ball:r,amp,deg[,seed]
    /// | translate:<inner>,v...
    #[arg(long)]
    init: Option<String>,
    /// unnormalized | normalized | solve
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    tol: Option<f64>,
    /// Normalized-flow time budget.
    #[arg(long = "max-tau")]
    max_tau: Option<f64>,
    /// Unnormalized-flow horizon (clamped by the blow-up policy for p < n+1).
    #[arg(long = "t-end")]
    t_end: Option<f64>,
    /// Fixed upper clamp on the step size.
    #[arg(long = "dt-max")]
    dt_max: Option<f64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for random initial perturbations.
    #[arg(long)]
    seed: Option<u64>,
}

fn build_config(cli: Cli) -> gcflow::Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &cli.config {
        cfg.apply_file(path)?;
    }
    if let Some(v) = cli.n {
        cfg.n = v;
    }
    if let Some(v) = cli.res {
        cfg.resolution = v;
    }
    if let Some(v) = cli.p {
        cfg.p = v;
    }
    if let Some(v) = cli.phi {
        cfg.phi = v;
    }
    if let Some(v) = cli.init {
        cfg.init = v;
    }
    if let Some(v) = &cli.mode {
        cfg.mode = v.parse()?;
    }
    if let Some(v) = cli.tol {
        cfg.tol = v;
    }
    if let Some(v) = cli.max_tau {
        cfg.max_tau = v;
    }
    if let Some(v) = cli.t_end {
        cfg.t_end = Some(v);
    }
    if let Some(v) = cli.dt_max {
        cfg.dt_max = Some(v);
    }
    if let Some(v) = cli.out {
        cfg.out = v;
    }
    if let Some(v) = cli.seed {
        cfg.seed = v;
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let status = build_config(cli).and_then(|cfg| run(&cfg));
    match status {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_ERROR as u8)
        }
    }
}

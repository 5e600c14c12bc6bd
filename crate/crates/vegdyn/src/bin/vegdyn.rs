use clap::Parser;
use std::path::PathBuf;
use vegdyn::cli::{Invocation, main_entry};

/// Experiment runner for spatially extended stochastic vegetation models:
/// exact finite-size simulation, mean-field equation solvers, and
/// quasi-stationary analysis, with CSV artifacts.
#[derive(Parser)]
#[command(name = "vegdyn", version)]
struct Cli {
    /// Task (simulate | gke | meanfield | qsd | equilibria | converge |
    /// chaos | fronts | endstates) or recipe (fig2_bistability | fig3_qsd |
    /// fig4_periodic | fig5_waves | fig5_pinning)
    what: String,

    /// JSON configuration (required for tasks; recipes are preconfigured)
    #[arg(long)]
    config: Option<PathBuf>,

    /// Output directory for CSV artifacts and manifest.json
    #[arg(long)]
    out: PathBuf,

    /// Base RNG seed (shorthand for --set sim.seed=S)
    #[arg(long)]
    seed: Option<u64>,

    /// Configuration overrides as dotted key=value paths,
    /// e.g. --set sim.n_sites=500
    #[arg(long = "set")]
    set: Vec<String>,
}

fn main() {
    let cli = Cli::parse();
    let code = main_entry(&Invocation {
        name: cli.what,
        config_path: cli.config,
        out_dir: cli.out,
        seed: cli.seed,
        overrides: cli.set,
    });
    std::process::exit(code);
}

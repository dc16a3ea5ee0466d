use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use schur_dd_cli::config::RunConfig;

#[derive(Parser)]
#[command(name = "schur-dd", version, about = "Domain-decomposition solver for sound-soft scattering clouds")]
struct Cli {
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads for assembly and dense kernels.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Replaces the random-cloud seed of the configuration.
    #[arg(long, global = true)]
    seed_override: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Full pipeline: far field, near field, interfaces and metadata.
    Run,
    /// Mie series against the global solver on one circle.
    MieCheck {
        #[arg(long, default_value_t = 8.0)]
        k: f64,
        #[arg(long, default_value_t = 1.0)]
        radius: f64,
        #[arg(long, default_value_t = 128)]
        nodes: usize,
    },
    /// Runs the pipeline and the global solver, and reports the far-field error.
    OracleCompare,
    /// Point-source reproduction by the merged map of empty boxes.
    MergeCheck {
        #[arg(long, default_value_t = 2)]
        cols: usize,
        #[arg(long, default_value_t = 2)]
        rows: usize,
        #[arg(long, default_value_t = 5.0)]
        k: f64,
        #[arg(long, default_value_t = 32)]
        n_per_edge: usize,
    },
    /// Writes the generated scatterer cloud as JSON.
    CloudGen,
}

fn load(cli: &Cli) -> Result<RunConfig> {
    let Some(path) = &cli.config else {
        bail!("this command needs --config");
    };
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    RunConfig::from_json(&text).with_context(|| format!("in {}", path.display()))
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        schur_dd_cli::set_threads(t)?;
    }
    match &cli.command {
        Command::Run => {
            let cfg = load(&cli)?;
            let s = schur_dd_cli::run(&cfg, &cli.out, cli.seed_override, false)?;
            println!("wrote {} far-field files to {}", s.far_field_files.len(), cli.out.display());
            println!("content hash {}", s.content_hash);
        }
        Command::OracleCompare => {
            let cfg = load(&cli)?;
            let s = schur_dd_cli::oracle_compare(&cfg, &cli.out, cli.seed_override)?;
            for (i, e) in s.oracle_errors.iter().enumerate() {
                println!("incidence {i}: relative far-field error {e:.3e}");
            }
        }
        Command::MieCheck { k, radius, nodes } => {
            let v = schur_dd_cli::mie_check(*k, *radius, *nodes, Some(&cli.out))?;
            println!("{}", serde_json::to_string_pretty(&v)?);
        }
        Command::MergeCheck { cols, rows, k, n_per_edge } => {
            let v = schur_dd_cli::merge_check(*cols, *rows, *k, *n_per_edge)?;
            println!("{}", serde_json::to_string_pretty(&v)?);
        }
        Command::CloudGen => {
            let cfg = load(&cli)?;
            let grid = cfg.build_grid(cli.seed_override).context("stage geometry")?;
            fs::create_dir_all(&cli.out)?;
            let path = cli.out.join("cloud.json");
            fs::write(&path, serde_json::to_string_pretty(&grid)?)?;
            println!("{} scatterers in {} boxes -> {}", grid.total_scatterers(), grid.num_boxes(), path.display());
        }
    }
    Ok(())
}

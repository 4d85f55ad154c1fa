use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use pcd_cli::ablate::{cmd_ablate, Axis};
use pcd_cli::pipeline::{cmd_eval, cmd_sample, cmd_train};
use pcd_cli::{cmd_gen_data, cmd_run, CliError, RunConfig};

#[derive(Parser)]
#[command(name = "pcd", version, about = "Offline multi-objective optimization with Pareto-conditioned diffusion")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Config file of `block.key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set sampler.gamma=5`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the offline dataset.
    GenData(Common),
    /// Train a denoiser.
    Train(Common),
    /// Sample candidates from a checkpoint.
    Sample {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Evaluate a samples CSV with the true objectives.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        samples: PathBuf,
    },
    /// Train, sample and evaluate over all configured seeds.
    Run(Common),
    /// Sweep one hyperparameter.
    Ablate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        axis: String,
        /// Comma-separated grid; defaults to the axis's standard grid.
        #[arg(long, value_delimiter = ',')]
        values: Vec<String>,
    },
}

fn load(c: &Common) -> Result<RunConfig, CliError> {
    let mut cfg = match &c.config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    for pair in &c.set {
        cfg.set_pair(pair)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::GenData(c) => {
            let cfg = load(&c)?;
            let (ds, s) = cmd_gen_data(&cfg, &c.out)?;
            println!("{}: N = {}, d = {}, m = {}", ds.task_name, ds.n(), ds.d(), ds.m());
            println!("normalized dominance number: min {:.4}, median {:.4}, max {:.4}", s.min, s.median, s.max);
            for (k, count) in s.histogram.iter().enumerate() {
                println!("  [{:.1}, {:.1}) {count}", k as f64 / 10.0, (k + 1) as f64 / 10.0);
            }
        }
        Command::Train(c) => {
            let cfg = load(&c)?;
            cmd_train(&cfg, &c.out)?;
            println!("wrote {}", c.out.join("model.ckpt").display());
        }
        Command::Sample { common, checkpoint } => {
            let cfg = load(&common)?;
            let x = cmd_sample(&cfg, &checkpoint, &common.out)?;
            println!("wrote {} samples to {}", x.nrows(), common.out.join("samples.csv").display());
        }
        Command::Eval { common, samples } => {
            let cfg = load(&common)?;
            let hv = cmd_eval(&cfg, &samples, &common.out)?;
            println!("HV 100/75/50: {:.6} {:.6} {:.6}", hv.hv_100, hv.hv_75, hv.hv_50);
        }
        Command::Run(c) => {
            let cfg = load(&c)?;
            let r = cmd_run(&cfg, Some(&c.out))?;
            for s in &r.seeds {
                println!(
                    "seed {}: HV100 {:.6}, D(best) {:.6}, ratio {:.4}",
                    s.seed_index, s.hv.hv_100, s.dbest_hv_100, s.relative_improvement
                );
            }
            let a = &r.aggregate;
            println!(
                "HV100 {:.6} ± {:.6}, ratio {:.4} ± {:.4}",
                a.hv_100.mean, a.hv_100.std, a.relative_improvement.mean, a.relative_improvement.std
            );
        }
        Command::Ablate { common, axis, values } => {
            let cfg = load(&common)?;
            let axis: Axis = axis.parse()?;
            let values: Vec<String> = if values.is_empty() {
                axis.default_grid().iter().map(|s| s.to_string()).collect()
            } else {
                values
            };
            let rows = cmd_ablate(&cfg, axis, &values, Some(&common.out))?;
            print!("{}", pcd_cli::ablate::sweep_csv(&rows));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    pcd_cli::runtime::pin_blas_kernel();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

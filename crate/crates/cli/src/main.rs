use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use cofc_cli::{cmd_evaluate, cmd_train, cmd_verify, CliError, RunConfig, EXIT_DIVERGED, EXIT_VERIFY_FAILED};

#[derive(Parser)]
#[command(name = "cofc", version, about = "Train, attack-evaluate and certify constrained HEV energy-management policies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// TOML run configuration; omitted keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seeds to run, overriding the configuration (comma separated).
    #[arg(long = "seeds", alias = "seed", value_delimiter = ',')]
    seeds: Vec<u64>,
    /// Output root, overriding `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Concurrent runs.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Train the configured method once per seed.
    Train {
        #[command(flatten)]
        common: Common,
        /// Reuse an existing output directory.
        #[arg(long)]
        force: bool,
    },
    /// Evaluate checkpoints under the configured attack conditions.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Checkpoint files; defaults to the configured seeds' training outputs.
        #[arg(long = "checkpoint")]
        checkpoints: Vec<PathBuf>,
        /// Overwrite an existing evaluation.
        #[arg(long)]
        force: bool,
    },
    /// Certify the attack theorems on random tabular CMDPs.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Random instances per seed.
        #[arg(long)]
        instances: Option<usize>,
        #[arg(long)]
        states: Option<usize>,
        #[arg(long)]
        actions: Option<usize>,
        /// Scale applied to the exact Lipschitz constant (below 1 forces violations).
        #[arg(long)]
        l_scale: Option<f64>,
    },
    /// Print the full default configuration.
    PrintDefaults,
}

fn load(common: &Common) -> Result<RunConfig, CliError> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if !common.seeds.is_empty() {
        cfg.seeds = common.seeds.clone();
    }
    if let Some(out) = &common.out {
        cfg.output.dir = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<i32, CliError> {
    match cli.command {
        Command::PrintDefaults => {
            print!("{}", RunConfig::default().to_toml());
            Ok(0)
        }
        Command::Train { common, force } => {
            let cfg = load(&common)?;
            let outcome = cmd_train(&cfg, &cfg.output.dir.clone(), common.jobs, force)?;
            for r in &outcome.manifest.runs {
                println!(
                    "{} seed {}: {} epochs, reward {:.2}, cost {:.3}{}",
                    cfg.method,
                    r.seed,
                    r.epochs,
                    r.final_reward,
                    r.final_cost,
                    r.diverged.as_deref().map(|d| format!(" [diverged: {d}]")).unwrap_or_default()
                );
            }
            println!("artifacts in {}", outcome.dir.display());
            Ok(if outcome.diverged() { EXIT_DIVERGED } else { 0 })
        }
        Command::Evaluate {
            common,
            checkpoints,
            force,
        } => {
            let cfg = load(&common)?;
            let outcome = cmd_evaluate(&cfg, &checkpoints, &cfg.output.dir.clone(), common.jobs, force)?;
            print!("{}", outcome.table);
            Ok(0)
        }
        Command::Verify {
            common,
            instances,
            states,
            actions,
            l_scale,
        } => {
            let cfg = load(&common)?;
            let mut v = cfg.verify.clone();
            v.instances = instances.unwrap_or(v.instances);
            v.instance.n_states = states.unwrap_or(v.instance.n_states);
            v.instance.n_actions = actions.unwrap_or(v.instance.n_actions);
            v.l_scale = l_scale.unwrap_or(v.l_scale);
            let seeds = if common.seeds.is_empty() { vec![0, 1, 2] } else { common.seeds.clone() };
            let out = common.out.as_deref();
            let outcome = cmd_verify(&cfg, &v, &seeds, out, common.jobs)?;
            print!("{}", outcome.table);
            Ok(if outcome.passed() { 0 } else { EXIT_VERIFY_FAILED })
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

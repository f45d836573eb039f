use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use tvsplit_lab::{run_and_write, Experiment, ExperimentConfig, LabError};

#[derive(Parser, Debug)]
#[command(name = "tvsplit-lab", version, about = "Run a tvsplit experiment and write CSV results")]
struct Cli {
    /// lipschitz | gap | rank1 | concentration | tvo-gen
    experiment: String,
    /// TOML configuration file
    #[arg(long)]
    config: PathBuf,
    /// Overrides the seed from the config
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides output_dir from the config
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write SVG charts built from the CSV files
    #[arg(long)]
    plots: bool,
}

fn configure_threads() -> Result<(), String> {
    let Ok(v) = std::env::var("TVSPLIT_THREADS") else {
        return Ok(());
    };
    let n: usize = v.trim().parse().map_err(|_| format!("TVSPLIT_THREADS must be a positive integer, got '{v}'"))?;
    if n == 0 {
        return Err("TVSPLIT_THREADS must be at least 1".into());
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| format!("thread pool: {e}"))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    let result = (|| -> Result<PathBuf, LabError> {
        let experiment: Experiment = cli.experiment.parse()?;
        let mut cfg = ExperimentConfig::load(&cli.config)?;
        if cfg.experiment != experiment {
            return Err(tvsplit_lab::ConfigError::Invalid {
                key: "experiment".into(),
                reason: format!("config is for '{}', command asked for '{experiment}'", cfg.experiment),
            }
            .into());
        }
        if let Some(s) = cli.seed {
            cfg.seed = s;
        }
        if let Some(o) = &cli.out {
            cfg.output_dir = o.clone();
        }
        log::info!("running {experiment} (seed {}, config {})", cfg.seed, cfg.hash());
        let files = run_and_write(&cfg, &cfg.output_dir, cli.plots)?;
        for f in &files {
            log::info!("wrote {}", f.display());
        }
        Ok(cfg.output_dir.clone())
    })();
    match result {
        Ok(dir) => {
            println!("{}", dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

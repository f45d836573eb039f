//! Experiment runners, configuration and result persistence for `tvsplit-core`.

pub mod config;
pub mod dataset;
pub mod plot;
pub mod runners;
pub mod stats;
pub mod table;

use std::path::{Path, PathBuf};
use std::time::Instant;

pub use config::{ConfigError, Experiment, ExperimentConfig};
pub use table::{Cell, Metadata, ResultTable, TableError};

#[derive(Debug, thiserror::Error)]
pub enum LabError {
    #[error("config: {0}")]
    Config(#[from] ConfigError),
    #[error("memory guard: h·p = {h}·{p} = {} exceeds the cap {cap}", h * p)]
    MemoryGuard { h: usize, p: usize, cap: usize },
    #[error("numerical failure (seed {seed}{}): {message}", alpha.as_deref().map(|a| format!(", alpha {a}")).unwrap_or_default())]
    Numerical {
        seed: u64,
        alpha: Option<String>,
        message: String,
    },
    #[error("dataset: {0}")]
    Dataset(#[from] dataset::DatasetError),
    #[error(transparent)]
    Table(#[from] TableError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl LabError {
    pub fn exit_code(&self) -> i32 {
        match self {
            LabError::Config(_) | LabError::MemoryGuard { .. } | LabError::Dataset(_) => 2,
            LabError::Numerical { .. } => 3,
            LabError::Table(_) | LabError::Io(_) => 1,
        }
    }

    pub(crate) fn numerical(seed: u64, alpha: Option<&dyn std::fmt::Display>, e: impl std::fmt::Display) -> Self {
        LabError::Numerical {
            seed,
            alpha: alpha.map(|a| a.to_string()),
            message: e.to_string(),
        }
    }
}

/// Named tables produced by one run. The first table carries the
/// experiment's name; the others append a suffix.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub experiment: Experiment,
    pub tables: Vec<(String, ResultTable)>,
}

impl RunOutput {
    pub fn table(&self, name: &str) -> Option<&ResultTable> {
        self.tables.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn main(&self) -> &ResultTable {
        &self.tables[0].1
    }

    /// Value of a metric from the `<experiment>_summary` table.
    pub fn summary(&self, metric: &str) -> Option<f64> {
        let t = self.table(&format!("{}_summary", self.experiment))?;
        t.lookup("metric", metric, "value").ok().flatten()
    }
}

pub fn run(cfg: &ExperimentConfig) -> Result<RunOutput, LabError> {
    cfg.validate()?;
    match cfg.experiment {
        Experiment::Lipschitz => runners::lipschitz::run_lipschitz(cfg),
        Experiment::Gap => runners::gap::run_gap(cfg),
        Experiment::Rank1 => runners::rank1::run_rank1(cfg),
        Experiment::Concentration => runners::concentration::run_concentration(cfg),
        Experiment::TvoGen => runners::tvo_gen::run_tvo_generalization(cfg),
    }
}

/// Runs the experiment and writes `<name>.csv` for every table plus a
/// `metadata.json` sidecar (and SVG charts when `plots` is set).
pub fn run_and_write(cfg: &ExperimentConfig, out_dir: &Path, plots: bool) -> Result<Vec<PathBuf>, LabError> {
    let start = Instant::now();
    let output = run(cfg)?;
    std::fs::create_dir_all(out_dir)?;
    let mut files = Vec::new();
    for (name, t) in &output.tables {
        let path = out_dir.join(format!("{name}.csv"));
        t.write_csv(&path)?;
        files.push(path);
    }
    if plots {
        for spec in runners::plot_specs(cfg.experiment) {
            // charts are rebuilt from the written CSV only
            let src = out_dir.join(format!("{}.csv", spec.0));
            let table = ResultTable::read_csv(&src)?;
            let series = match plot::series_from_table(&table, &spec.1) {
                Ok(s) => s,
                Err(TableError::UnknownColumn(c)) => {
                    log::warn!("skipping chart '{}': no column {c}", spec.1.title);
                    continue;
                }
                Err(e) => return Err(e.into()),
            };
            let path = out_dir.join(format!("{}.svg", spec.1.title.replace(' ', "_")));
            std::fs::write(&path, plot::render_svg(&spec.1, &series))?;
            files.push(path);
        }
    }
    let meta = Metadata {
        experiment: cfg.experiment.to_string(),
        config_hash: cfg.hash(),
        seed: cfg.seed,
        version: env!("CARGO_PKG_VERSION").to_string(),
        wall_clock_secs: start.elapsed().as_secs_f64(),
        files: files.iter().filter_map(|p| p.file_name()).map(|f| f.to_string_lossy().into_owned()).collect(),
    };
    let meta_path = out_dir.join("metadata.json");
    meta.write(&meta_path)?;
    files.push(meta_path);
    Ok(files)
}

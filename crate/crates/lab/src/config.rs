//! Experiment configuration files.
//!
//! A config is a TOML document with a handful of top-level keys and one
//! section per experiment. Sections other than the selected experiment may be
//! present, so a single file can drive every runner.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("unsupported schema_version {found} (expected {SCHEMA_VERSION})")]
    Schema { found: u32 },
    #[error("unknown experiment '{0}'")]
    UnknownExperiment(String),
    #[error("missing [{0}] section")]
    MissingSection(&'static str),
    #[error("invalid value for {key}: {reason}")]
    Invalid { key: String, reason: String },
}

fn invalid(key: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key: key.to_string(),
        reason: reason.into(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Experiment {
    #[serde(rename = "lipschitz")]
    Lipschitz,
    #[serde(rename = "gap")]
    Gap,
    #[serde(rename = "rank1")]
    Rank1,
    #[serde(rename = "concentration")]
    Concentration,
    #[serde(rename = "tvo-gen")]
    TvoGen,
}

impl Experiment {
    pub const ALL: [Experiment; 5] = [
        Experiment::Lipschitz,
        Experiment::Gap,
        Experiment::Rank1,
        Experiment::Concentration,
        Experiment::TvoGen,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Lipschitz => "lipschitz",
            Experiment::Gap => "gap",
            Experiment::Rank1 => "rank1",
            Experiment::Concentration => "concentration",
            Experiment::TvoGen => "tvo-gen",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| ConfigError::UnknownExperiment(s.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub experiment: Experiment,
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lipschitz: Option<LipschitzParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gap: Option<GapParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rank1: Option<Rank1Params>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub concentration: Option<ConcentrationParams>,
    #[serde(default, rename = "tvo-gen", skip_serializing_if = "Option::is_none")]
    pub tvo_gen: Option<TvoGenParams>,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("results")
}

/// Paired-network stability sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LipschitzParams {
    pub widths: Vec<usize>,
    pub deltas: Vec<f64>,
    pub trials: usize,
    /// Probe the deep-net Jacobian gram instead of training shallow nets.
    pub deep: bool,
    pub depth: usize,
    pub family: String,
    /// Base point on the segment `(t, 1 − t)`.
    pub base_t: f64,
    pub d: usize,
    pub n_train: usize,
    pub n_holdout: usize,
    pub steps: usize,
}

impl Default for LipschitzParams {
    fn default() -> Self {
        LipschitzParams {
            widths: vec![256, 1024],
            deltas: vec![0.01, 0.02, 0.04, 0.08, 0.16],
            trials: 3,
            deep: false,
            depth: 2,
            family: "relu-sigmoid".into(),
            base_t: 0.5,
            d: 32,
            n_train: 32,
            n_holdout: 500,
            steps: 500,
        }
    }
}

/// Test-validation gap against validation size on a linear feature-map task.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GapParams {
    pub n_val: Vec<usize>,
    pub seeds: usize,
    /// Number of candidate feature maps.
    pub h: usize,
    pub d: usize,
    pub p: usize,
    pub grid_m: usize,
    pub n_train: usize,
    pub lambda: f64,
    pub noise: f64,
    pub mc_test: usize,
}

impl Default for GapParams {
    fn default() -> Self {
        GapParams {
            n_val: vec![50, 200, 800, 3200],
            seeds: 20,
            h: 3,
            d: 8,
            p: 24,
            grid_m: 5,
            n_train: 40,
            lambda: 1e-3,
            noise: 0.25,
            mc_test: 100_000,
        }
    }
}

/// Correlation sweep of the spectral estimator over (γ, h) with `p = γn²/h`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Rank1Params {
    pub gammas: Vec<f64>,
    pub hs: Vec<usize>,
    pub n: usize,
    pub seeds: usize,
    pub noise_sigma: f64,
    /// Skip the min-norm stage and record only the correlation.
    pub spectral_only: bool,
    /// Largest admissible `h·p`.
    pub max_entries: usize,
}

impl Default for Rank1Params {
    fn default() -> Self {
        Rank1Params {
            gammas: vec![0.1, 0.2, 0.4],
            hs: vec![10, 20, 40],
            n: 500,
            seeds: 20,
            noise_sigma: 0.0,
            spectral_only: false,
            max_entries: 50_000_000,
        }
    }
}

/// Deviation of the finite-width gram from a Monte-Carlo reference kernel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConcentrationParams {
    pub widths: Vec<usize>,
    /// Grid of `t` values for `α = (t, 1 − t)`.
    pub alpha_t: Vec<f64>,
    pub family: String,
    pub n: usize,
    pub d: usize,
    pub trials: usize,
    pub mc_samples: usize,
}

impl Default for ConcentrationParams {
    fn default() -> Self {
        ConcentrationParams {
            widths: vec![64, 128, 256, 512, 1024, 2048, 4096],
            alpha_t: vec![0.0, 0.5, 1.0],
            family: "relu-sigmoid".into(),
            n: 32,
            d: 8,
            trials: 4,
            mc_samples: 200_000,
        }
    }
}

/// Activation search on the shallow binary task.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TvoGenParams {
    pub k: usize,
    pub d: usize,
    pub family: String,
    pub grid_m: usize,
    pub n_train: usize,
    pub n_val: usize,
    pub mc_test: usize,
    pub steps: usize,
    /// Overrides the default step size when set.
    pub eta: Option<f64>,
    /// Selection tolerance on validation error.
    pub delta: f64,
    /// Optional external data: rows of floats, one sample per line.
    pub features_path: Option<PathBuf>,
    /// Labels matching `features_path`, one per line.
    pub labels_path: Option<PathBuf>,
}

impl Default for TvoGenParams {
    fn default() -> Self {
        TvoGenParams {
            k: 2048,
            d: 16,
            family: "relu-sigmoid".into(),
            grid_m: 5,
            n_train: 64,
            n_val: 1000,
            mc_test: 100_000,
            steps: 2000,
            eta: None,
            delta: 0.0,
            features_path: None,
            labels_path: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: ExperimentConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text)
    }

    /// A config for `experiment` with its section at default values.
    pub fn with_defaults(experiment: Experiment, seed: u64) -> Self {
        let mut cfg = ExperimentConfig {
            schema_version: SCHEMA_VERSION,
            experiment,
            seed,
            output_dir: default_output_dir(),
            lipschitz: None,
            gap: None,
            rank1: None,
            concentration: None,
            tvo_gen: None,
        };
        match experiment {
            Experiment::Lipschitz => cfg.lipschitz = Some(Default::default()),
            Experiment::Gap => cfg.gap = Some(Default::default()),
            Experiment::Rank1 => cfg.rank1 = Some(Default::default()),
            Experiment::Concentration => cfg.concentration = Some(Default::default()),
            Experiment::TvoGen => cfg.tvo_gen = Some(Default::default()),
        }
        cfg
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// First 16 hex digits of the SHA-256 of the canonical TOML form.
    /// `output_dir` is left out, so moving a run does not change its identity.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.output_dir = PathBuf::new();
        let digest = Sha256::digest(canonical.to_toml().as_bytes());
        format!("{digest:x}")[..16].to_string()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(ConfigError::Schema {
                found: self.schema_version,
            });
        }
        match self.experiment {
            Experiment::Lipschitz => self.lipschitz()?.validate(),
            Experiment::Gap => self.gap()?.validate(),
            Experiment::Rank1 => self.rank1()?.validate(),
            Experiment::Concentration => self.concentration()?.validate(),
            Experiment::TvoGen => self.tvo_gen()?.validate(),
        }
    }

    pub fn lipschitz(&self) -> Result<&LipschitzParams, ConfigError> {
        self.lipschitz.as_ref().ok_or(ConfigError::MissingSection("lipschitz"))
    }

    pub fn gap(&self) -> Result<&GapParams, ConfigError> {
        self.gap.as_ref().ok_or(ConfigError::MissingSection("gap"))
    }

    pub fn rank1(&self) -> Result<&Rank1Params, ConfigError> {
        self.rank1.as_ref().ok_or(ConfigError::MissingSection("rank1"))
    }

    pub fn concentration(&self) -> Result<&ConcentrationParams, ConfigError> {
        self.concentration.as_ref().ok_or(ConfigError::MissingSection("concentration"))
    }

    pub fn tvo_gen(&self) -> Result<&TvoGenParams, ConfigError> {
        self.tvo_gen.as_ref().ok_or(ConfigError::MissingSection("tvo-gen"))
    }
}

fn sizes(key: &str, v: &[usize]) -> Result<(), ConfigError> {
    if v.is_empty() {
        return Err(invalid(key, "list must not be empty"));
    }
    if v.contains(&0) {
        return Err(invalid(key, "sizes must be at least 1"));
    }
    Ok(())
}

fn size(key: &str, v: usize) -> Result<(), ConfigError> {
    if v == 0 {
        return Err(invalid(key, "must be at least 1"));
    }
    Ok(())
}

fn family(key: &str, name: &str) -> Result<(), ConfigError> {
    tvsplit_core::activations::ActivationFamily::by_name(name)
        .map(|_| ())
        .map_err(|e| invalid(key, e.to_string()))
}

fn unit_interval(key: &str, v: f64) -> Result<(), ConfigError> {
    if !(0.0..=1.0).contains(&v) {
        return Err(invalid(key, "must lie in [0, 1]"));
    }
    Ok(())
}

impl LipschitzParams {
    fn validate(&self) -> Result<(), ConfigError> {
        sizes("lipschitz.widths", &self.widths)?;
        if self.deltas.is_empty() {
            return Err(invalid("lipschitz.deltas", "list must not be empty"));
        }
        for &dl in &self.deltas {
            if !(dl > 0.0) || !dl.is_finite() {
                return Err(invalid("lipschitz.deltas", "every Δα must be positive"));
            }
            unit_interval("lipschitz.base_t + delta", self.base_t + dl)?;
        }
        unit_interval("lipschitz.base_t", self.base_t)?;
        size("lipschitz.trials", self.trials)?;
        size("lipschitz.depth", self.depth)?;
        size("lipschitz.d", self.d)?;
        size("lipschitz.n_train", self.n_train)?;
        size("lipschitz.n_holdout", self.n_holdout)?;
        family("lipschitz.family", &self.family)?;
        if self.deep {
            // probe points have l1 norm at most 0.9; keep perturbations inside the ball
            let h = tvsplit_core::activations::ActivationFamily::by_name(&self.family).map_or(1, |f| f.len());
            let reach = ((h * self.depth) as f64).sqrt();
            if self.deltas.iter().any(|d| d * reach > 0.1) {
                return Err(invalid("lipschitz.deltas", format!("deep probes need Δα ≤ {:.4}", 0.1 / reach)));
            }
        }
        if !self.deep && self.widths.iter().any(|k| k % 2 == 1) {
            return Err(invalid("lipschitz.widths", "shallow widths must be even"));
        }
        Ok(())
    }
}

impl GapParams {
    fn validate(&self) -> Result<(), ConfigError> {
        sizes("gap.n_val", &self.n_val)?;
        for (key, v) in [
            ("gap.seeds", self.seeds),
            ("gap.h", self.h),
            ("gap.d", self.d),
            ("gap.p", self.p),
            ("gap.grid_m", self.grid_m),
            ("gap.n_train", self.n_train),
            ("gap.mc_test", self.mc_test),
        ] {
            size(key, v)?;
        }
        if !(self.lambda >= 0.0) {
            return Err(invalid("gap.lambda", "must be non-negative"));
        }
        if self.lambda == 0.0 && self.n_train > self.p {
            return Err(invalid("gap.lambda", "zero ridge needs n_train ≤ p"));
        }
        if !(0.0..=0.25).contains(&self.noise) {
            return Err(invalid("gap.noise", "must lie in [0, 0.25]"));
        }
        Ok(())
    }
}

impl Rank1Params {
    fn validate(&self) -> Result<(), ConfigError> {
        if self.gammas.is_empty() || self.gammas.iter().any(|g| !(*g > 0.0) || !g.is_finite()) {
            return Err(invalid("rank1.gammas", "need at least one positive γ"));
        }
        sizes("rank1.hs", &self.hs)?;
        size("rank1.n", self.n)?;
        size("rank1.seeds", self.seeds)?;
        size("rank1.max_entries", self.max_entries)?;
        if !(self.noise_sigma >= 0.0) || !self.noise_sigma.is_finite() {
            return Err(invalid("rank1.noise_sigma", "must be non-negative"));
        }
        if !self.spectral_only {
            for &g in &self.gammas {
                for &h in &self.hs {
                    if self.p_for(g, h) <= self.n {
                        return Err(invalid(
                            "rank1.gammas",
                            format!("γ = {g}, h = {h} gives p ≤ n; the interpolating second stage needs p > n"),
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    /// `p = round(γn²/h)`, at least 1.
    pub fn p_for(&self, gamma: f64, h: usize) -> usize {
        let n = self.n as f64;
        ((gamma * n * n / h as f64).round() as usize).max(1)
    }
}

impl ConcentrationParams {
    fn validate(&self) -> Result<(), ConfigError> {
        sizes("concentration.widths", &self.widths)?;
        if self.widths.iter().any(|k| k % 2 == 1) {
            return Err(invalid("concentration.widths", "widths must be even"));
        }
        if self.alpha_t.is_empty() {
            return Err(invalid("concentration.alpha_t", "list must not be empty"));
        }
        for &t in &self.alpha_t {
            unit_interval("concentration.alpha_t", t)?;
        }
        family("concentration.family", &self.family)?;
        size("concentration.n", self.n)?;
        size("concentration.d", self.d)?;
        size("concentration.trials", self.trials)?;
        size("concentration.mc_samples", self.mc_samples)?;
        Ok(())
    }
}

impl TvoGenParams {
    fn validate(&self) -> Result<(), ConfigError> {
        size("tvo-gen.k", self.k)?;
        if self.k % 2 == 1 {
            return Err(invalid("tvo-gen.k", "width must be even"));
        }
        size("tvo-gen.d", self.d)?;
        size("tvo-gen.grid_m", self.grid_m)?;
        size("tvo-gen.n_train", self.n_train)?;
        size("tvo-gen.n_val", self.n_val)?;
        size("tvo-gen.mc_test", self.mc_test)?;
        family("tvo-gen.family", &self.family)?;
        if let Some(eta) = self.eta {
            if !(eta > 0.0) || !eta.is_finite() {
                return Err(invalid("tvo-gen.eta", "must be positive"));
            }
        }
        if !(self.delta >= 0.0) {
            return Err(invalid("tvo-gen.delta", "must be non-negative"));
        }
        if self.features_path.is_some() != self.labels_path.is_some() {
            return Err(invalid("tvo-gen.features_path", "features and labels must be given together"));
        }
        Ok(())
    }
}

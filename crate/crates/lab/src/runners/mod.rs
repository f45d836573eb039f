pub mod concentration;
pub mod gap;
pub mod lipschitz;
pub mod rank1;
pub mod tvo_gen;

use tvsplit_core::activations::{ActivationFamily, HyperPoint};
use tvsplit_core::numcore::RngStream;

use crate::config::Experiment;
use crate::plot::PlotSpec;
use crate::table::{Cell, ResultTable};
use crate::LabError;

/// Root stream of a run: one per (seed, experiment).
pub(crate) fn root_stream(seed: u64, experiment: Experiment) -> RngStream {
    RngStream::new(seed, 0).derive_named(experiment.name())
}

/// `t·e₁ + (1 − t)·e₂` (or `t·e₁` for single-base families).
pub(crate) fn segment_point(fam: &ActivationFamily, t: f64) -> Result<HyperPoint, LabError> {
    let mut v = vec![0.0; fam.len()];
    v[0] = t;
    if v.len() > 1 {
        v[1] = 1.0 - t;
    }
    HyperPoint::new(v).map_err(|e| LabError::Config(crate::ConfigError::Invalid {
        key: "alpha".into(),
        reason: e.to_string(),
    }))
}

pub(crate) fn family(name: &str) -> Result<ActivationFamily, LabError> {
    ActivationFamily::by_name(name).map_err(|e| {
        LabError::Config(crate::ConfigError::Invalid {
            key: "family".into(),
            reason: e.to_string(),
        })
    })
}

pub(crate) fn summary_table(hash: &str, items: Vec<(String, f64)>) -> ResultTable {
    let mut t = ResultTable::new(["metric", "value"], hash);
    for (k, v) in items {
        t.push(vec![Cell::Text(k), Cell::Num(v)]).expect("two columns");
    }
    t
}

fn spec(title: &str, x: &str, y: &str, group: Option<&str>, log_x: bool, log_y: bool) -> PlotSpec {
    PlotSpec {
        title: title.into(),
        x: x.into(),
        y: y.into(),
        group: group.map(Into::into),
        log_x,
        log_y,
    }
}

/// Default charts per experiment, as (source table, spec).
pub fn plot_specs(experiment: Experiment) -> Vec<(String, PlotSpec)> {
    match experiment {
        Experiment::Lipschitz => vec![
            ("lipschitz".into(), spec("lipschitz weight distance", "delta", "weight_ratio_mean", Some("k"), true, false)),
            ("lipschitz".into(), spec("lipschitz output variability", "delta", "max_output_ratio_mean", Some("k"), true, false)),
        ],
        Experiment::Gap => vec![("gap".into(), spec("gap vs validation size", "n_val", "max_gap_mean", None, true, true))],
        Experiment::Rank1 => vec![
            ("rank1".into(), spec("rank1 correlation vs h", "h", "rho_mean", Some("gamma"), false, false)),
            ("rank1".into(), spec("rank1 correlation vs dims", "dims_over_n", "rho_mean", Some("gamma"), false, false)),
        ],
        Experiment::Concentration => vec![(
            "concentration".into(),
            spec("kernel deviation vs width", "k", "deviation_mean", Some("alpha_t"), true, true),
        )],
        Experiment::TvoGen => vec![("tvo-gen".into(), spec("test error across grid", "index", "test_error", None, false, false))],
    }
}

//! Activation search on the shallow binary task: every candidate is trained to
//! interpolation and the validation split picks among them.

use tvsplit_core::activations::HyperPoint;
use tvsplit_core::featmap::SampleSet;
use tvsplit_core::numcore::{min_eigenvalue, solve_psd};
use tvsplit_core::shallownet::{
    default_c0, default_eta, empirical_gram, gd_train, init, BinaryTask, ShallowConfig, ShallowError, ShallowModel,
};
use tvsplit_core::tvo::{tvo_search, Loss, SearchData, SearchSpace};

use super::{family, root_stream, summary_table};
use crate::dataset::{load_samples, split_consecutive};
use crate::stats::spearman;
use crate::table::ResultTable;
use crate::{ConfigError, ExperimentConfig, LabError, RunOutput};

/// Test errors this close to the grid minimum count as a successful selection.
pub const SELECTION_TOLERANCE: f64 = 0.03;
/// Training 0-1 error at or below this counts as interpolation.
pub const INTERPOLATION_TOLERANCE: f64 = 0.01;

fn datasets(cfg: &ExperimentConfig) -> Result<(SampleSet, SampleSet, SampleSet), LabError> {
    let p = cfg.tvo_gen()?;
    if let (Some(f), Some(l)) = (&p.features_path, &p.labels_path) {
        let all = load_samples(f, l, true)?;
        if all.dim() != p.d {
            return Err(ConfigError::Invalid {
                key: "tvo-gen.d".into(),
                reason: format!("dataset has dimension {}", all.dim()),
            }
            .into());
        }
        let mut parts = split_consecutive(&all, &[p.n_train, p.n_val])?.into_iter();
        let (a, b, c) = (parts.next(), parts.next(), parts.next());
        return Ok((a.expect("three parts"), b.expect("three parts"), c.expect("three parts")));
    }
    let root = root_stream(cfg.seed, cfg.experiment);
    let task = BinaryTask::new(p.d, root.derive_named("task"));
    Ok((
        task.sample(root.derive_named("train"), p.n_train),
        task.sample(root.derive_named("val"), p.n_val),
        task.sample(root.derive_named("test"), p.mc_test),
    ))
}

/// `2B·√(yᵀK̂⁻¹y / n)` with `K̂` the gram at initialization.
fn excess_form(gram: &tvsplit_core::numcore::DenseMatrix, y: &[f64], bound_b: f64) -> Result<f64, ShallowError> {
    let sol = solve_psd(gram, y, 0.0)?;
    let quad: f64 = sol.iter().zip(y).map(|(a, b)| a * b).sum();
    Ok(2.0 * bound_b * (quad.max(0.0) / y.len() as f64).sqrt())
}

pub fn run_tvo_generalization(cfg: &ExperimentConfig) -> Result<RunOutput, LabError> {
    let p = cfg.tvo_gen()?;
    let fam = family(&p.family)?;
    let root = root_stream(cfg.seed, cfg.experiment);
    let (train, val, test) = datasets(cfg)?;
    let space = SearchSpace::simplex(fam.len(), p.grid_m, p.delta).map_err(|e| LabError::numerical(cfg.seed, None, e))?;
    let c0 = default_c0(train.len());
    let eta = p.eta.unwrap_or_else(|| default_eta(c0, fam.bound_b(), train.inputs()));
    let sc = ShallowConfig {
        k: p.k,
        d: p.d,
        c0,
        eta,
        steps: p.steps,
        seed: root.derive_named("w0"),
    };

    let trainer = |a: &HyperPoint| -> Result<ShallowModel, ShallowError> {
        let st = init(&sc, &fam, a)?;
        let form = excess_form(&empirical_gram(&st, &train)?, train.labels(), fam.bound_b()).ok();
        let st = gd_train(st, &train, eta, p.steps, fam.bound_b())?;
        Ok(ShallowModel { state: st, excess_form: form })
    };
    let data = SearchData {
        train: Some(&train),
        val: &val,
        test: Some(&test),
    };
    let outcome = tvo_search(trainer, &space, data, Loss::ZeroOne).map_err(|e| LabError::numerical(cfg.seed, None, e))?;
    if let Some((_, a, msg)) = outcome.failures.first() {
        return Err(LabError::numerical(cfg.seed, Some(a), msg));
    }

    let hash = cfg.hash();
    let mut table = ResultTable::new(
        ["index", "alpha", "train_error", "val_error", "test_error", "excess_form", "gram_min_eig", "selected"],
        &hash,
    );
    let mut tests = Vec::new();
    let mut forms = Vec::new();
    for r in &outcome.table {
        let st = init(&sc, &fam, &r.alpha).map_err(|e| LabError::numerical(cfg.seed, Some(&r.alpha), e))?;
        let lmin = empirical_gram(&st, &train)
            .map_err(|e| LabError::numerical(cfg.seed, Some(&r.alpha), e))
            .and_then(|g| min_eigenvalue(&g).map_err(|e| LabError::numerical(cfg.seed, Some(&r.alpha), e)))?;
        let test_err = r.test_risk.unwrap_or(f64::NAN);
        let form = r.excess_form.unwrap_or(f64::NAN);
        tests.push(test_err);
        forms.push(form);
        table.push(vec![
            r.index.into(),
            r.alpha.to_string().into(),
            r.train_risk.into(),
            r.val_risk.into(),
            test_err.into(),
            form.into(),
            lmin.into(),
            (r.index == outcome.index).into(),
        ])?;
    }
    let min_test = tests.iter().cloned().fold(f64::INFINITY, f64::min);
    let max_test = tests.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let hat_test = tests[outcome.index];
    let max_train = outcome.table.iter().map(|r| r.train_risk).fold(0.0, f64::max);
    let min_val = outcome.table.iter().map(|r| r.val_risk).fold(f64::INFINITY, f64::min);
    let flag = |b: bool| if b { 1.0 } else { 0.0 };
    let summary = vec![
        ("alpha_hat_index".to_string(), outcome.index as f64),
        ("test_at_hat".to_string(), hat_test),
        ("test_min".to_string(), min_test),
        ("test_spread".to_string(), max_test - min_test),
        ("max_train_error".to_string(), max_train),
        ("min_val_error".to_string(), min_val),
        ("all_interpolate".to_string(), flag(max_train <= INTERPOLATION_TOLERANCE)),
        ("hat_within_tolerance".to_string(), flag(hat_test <= min_test + SELECTION_TOLERANCE)),
        ("spearman_form_vs_test".to_string(), spearman(&forms, &tests)),
        ("eta".to_string(), eta),
        ("c0".to_string(), c0),
    ];
    Ok(RunOutput {
        experiment: cfg.experiment,
        tables: vec![
            ("tvo-gen".into(), table),
            ("tvo-gen_summary".into(), summary_table(&hash, summary)),
        ],
    })
}

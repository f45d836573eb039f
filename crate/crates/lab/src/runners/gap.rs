//! Test-validation gap of the selected and the worst grid point as the
//! validation set grows.

use std::sync::Arc;

use rayon::prelude::*;
use tvsplit_core::featmap::{fit_from_matrix, FeatureFamily, MapMatrices, PlantedTask};
use tvsplit_core::tvo::{select, AlphaRecord, Loss, SearchSpace};

use super::{root_stream, summary_table};
use crate::stats::{log_log_slope, mean, std_dev};
use crate::table::ResultTable;
use crate::{ExperimentConfig, LabError, RunOutput};

struct SeedResult {
    max_gap: Vec<f64>,
    hat_gap: Vec<f64>,
    hat_index: Vec<usize>,
    hat_test: Vec<f64>,
    min_test: f64,
}

fn run_seed(cfg: &ExperimentConfig, seed: usize) -> Result<SeedResult, LabError> {
    let p = cfg.gap()?;
    let s = root_stream(cfg.seed, cfg.experiment).derive(seed as u64);
    let num = |e: &dyn std::fmt::Display| LabError::numerical(cfg.seed, None, format!("replicate {seed}: {e}"));
    let fam = Arc::new(FeatureFamily::random_tanh(p.h, p.d, p.p, s.derive_named("features")));
    let space = SearchSpace::simplex(p.h, p.grid_m, 0.0).map_err(|e| num(&e))?;
    let star_index = s.derive_named("alpha_star").cursor().next_below(space.len() as u64) as usize;
    let task = PlantedTask::new(fam.clone(), space.grid()[star_index].clone(), p.noise, s.derive_named("theta")).map_err(|e| num(&e))?;
    let n_val_max = *p.n_val.iter().max().expect("validated non-empty");
    let train = task.sample(s.derive_named("train"), p.n_train);
    let val = task.sample(s.derive_named("val"), n_val_max);
    let test = task.sample(s.derive_named("test"), p.mc_test);
    let maps_train = MapMatrices::new(&fam, &train).map_err(|e| num(&e))?;
    let maps_val = MapMatrices::new(&fam, &val).map_err(|e| num(&e))?;
    let maps_test = MapMatrices::new(&fam, &test).map_err(|e| num(&e))?;

    // cumulative validation loss per grid point, plus population risk
    let mut prefix = Vec::with_capacity(space.len());
    let mut test_risk = Vec::with_capacity(space.len());
    for a in space.grid() {
        let fit = fit_from_matrix(&maps_train.combine(a), a, train.labels(), p.lambda)
            .map_err(|e| LabError::numerical(cfg.seed, Some(a), format!("replicate {seed}: {e}")))?;
        let pv = maps_val.predict(a, &fit.theta);
        let mut acc = 0.0;
        let cum: Vec<f64> = pv
            .iter()
            .zip(val.labels())
            .map(|(f, y)| {
                acc += Loss::Squared.value(*y, *f);
                acc
            })
            .collect();
        prefix.push(cum);
        let pt = maps_test.predict(a, &fit.theta);
        test_risk.push(pt.iter().zip(test.labels()).map(|(f, y)| Loss::Squared.value(*y, *f)).sum::<f64>() / pt.len() as f64);
    }

    let mut out = SeedResult {
        max_gap: Vec::new(),
        hat_gap: Vec::new(),
        hat_index: Vec::new(),
        hat_test: Vec::new(),
        min_test: test_risk.iter().cloned().fold(f64::INFINITY, f64::min),
    };
    for &nv in &p.n_val {
        let table: Vec<AlphaRecord> = space
            .grid()
            .iter()
            .enumerate()
            .map(|(i, a)| AlphaRecord {
                index: i,
                alpha: a.clone(),
                train_risk: f64::NAN,
                val_risk: prefix[i][nv - 1] / nv as f64,
                test_risk: Some(test_risk[i]),
                excess_form: None,
            })
            .collect();
        let gaps: Vec<f64> = table.iter().map(|r| (r.test_risk.unwrap_or(f64::NAN) - r.val_risk).abs()).collect();
        let outcome = select(table, Vec::new(), space.delta()).map_err(|e| num(&e))?;
        out.max_gap.push(gaps.iter().cloned().fold(0.0, f64::max));
        out.hat_gap.push(gaps[outcome.index]);
        out.hat_index.push(outcome.index);
        out.hat_test.push(test_risk[outcome.index]);
    }
    Ok(out)
}

/// For each validation size, the largest `|test − val|` over the grid and
/// the gap at the selected point, averaged over independent replicates.
pub fn run_gap(cfg: &ExperimentConfig) -> Result<RunOutput, LabError> {
    let p = cfg.gap()?;
    let results: Vec<Result<SeedResult, LabError>> = (0..p.seeds).into_par_iter().map(|s| run_seed(cfg, s)).collect();
    let mut per_seed = Vec::with_capacity(p.seeds);
    for r in results {
        per_seed.push(r?);
    }
    let hash = cfg.hash();
    let mut trials = ResultTable::new(
        ["replicate", "n_val", "max_gap", "hat_gap", "alpha_hat_index", "test_at_hat", "min_test"],
        &hash,
    );
    for (s, r) in per_seed.iter().enumerate() {
        for (j, &nv) in p.n_val.iter().enumerate() {
            trials.push(vec![
                s.into(),
                nv.into(),
                r.max_gap[j].into(),
                r.hat_gap[j].into(),
                r.hat_index[j].into(),
                r.hat_test[j].into(),
                r.min_test.into(),
            ])?;
        }
    }
    let mut table = ResultTable::new(
        ["n_val", "max_gap_mean", "max_gap_std", "hat_gap_mean", "hat_gap_std", "excess_test_at_hat_mean"],
        &hash,
    );
    let mut means = Vec::new();
    for (j, &nv) in p.n_val.iter().enumerate() {
        let mg: Vec<f64> = per_seed.iter().map(|r| r.max_gap[j]).collect();
        let hg: Vec<f64> = per_seed.iter().map(|r| r.hat_gap[j]).collect();
        let ex: Vec<f64> = per_seed.iter().map(|r| r.hat_test[j] - r.min_test).collect();
        means.push(mean(&mg));
        table.push(vec![
            nv.into(),
            mean(&mg).into(),
            std_dev(&mg).into(),
            mean(&hg).into(),
            std_dev(&hg).into(),
            mean(&ex).into(),
        ])?;
    }
    let nv: Vec<f64> = p.n_val.iter().map(|&v| v as f64).collect();
    let (lo, hi) = extreme_indices(&p.n_val);
    let decreasing = per_seed.iter().filter(|r| r.max_gap[lo] > r.max_gap[hi]).count();
    let summary = vec![
        ("log_log_slope".to_string(), log_log_slope(&nv, &means)),
        ("replicates_decreasing".to_string(), decreasing as f64),
        ("replicates".to_string(), p.seeds as f64),
    ];
    Ok(RunOutput {
        experiment: cfg.experiment,
        tables: vec![
            ("gap".into(), table),
            ("gap_trials".into(), trials),
            ("gap_summary".into(), summary_table(&hash, summary)),
        ],
    })
}

fn extreme_indices(v: &[usize]) -> (usize, usize) {
    let lo = (0..v.len()).min_by_key(|&i| v[i]).unwrap_or(0);
    let hi = (0..v.len()).max_by_key(|&i| v[i]).unwrap_or(0);
    (lo, hi)
}

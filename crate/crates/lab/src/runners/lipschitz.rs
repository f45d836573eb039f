//! Stability of trained solutions under small changes of the activation mix.

use rayon::prelude::*;
use tvsplit_core::deepnet::gram_lipschitz_probe;
use tvsplit_core::featmap::{sphere_points, SampleSet};
use tvsplit_core::shallownet::{default_c0, default_eta, gd_train, init, predict_all, BinaryTask, ShallowConfig};

use super::{family, root_stream, segment_point, summary_table};
use crate::stats::{mean, std_dev};
use crate::table::ResultTable;
use crate::{ExperimentConfig, LabError, RunOutput};

struct PairMeasure {
    weight_ratio: f64,
    max_output_ratio: f64,
    avg_output_ratio: f64,
}

/// Trains a base net and one perturbed net per Δα from a shared `W₀`.
///
/// Without the `deep` flag each row reports `‖W_α − W_{α+Δα}‖_F / ‖Δα‖` and
/// the max / mean of `|f_α(x) − f_{α+Δα}(x)| / ‖Δα‖` on a held-out set. With
/// it, the deep-net gram sensitivity `‖K̂_α − K̂_ᾱ‖ / ‖α − ᾱ‖` is probed
/// instead, since deep nets are not trained.
pub fn run_lipschitz(cfg: &ExperimentConfig) -> Result<RunOutput, LabError> {
    let p = cfg.lipschitz()?;
    if p.deep {
        return run_deep(cfg);
    }
    let fam = family(&p.family)?;
    let root = root_stream(cfg.seed, cfg.experiment);
    let base = segment_point(&fam, p.base_t)?;
    let moved: Vec<_> = p.deltas.iter().map(|d| segment_point(&fam, p.base_t + d)).collect::<Result<_, _>>()?;
    let jobs: Vec<(usize, usize)> = p.widths.iter().flat_map(|&k| (0..p.trials).map(move |t| (k, t))).collect();

    let results: Vec<Result<Vec<PairMeasure>, LabError>> = jobs
        .par_iter()
        .map(|&(k, trial)| {
            let task_stream = root.derive_named("task").derive(trial as u64);
            let task = BinaryTask::new(p.d, task_stream);
            let train = task.sample(task_stream.derive_named("train"), p.n_train);
            let holdout = task.sample(task_stream.derive_named("holdout"), p.n_holdout);
            let c0 = default_c0(p.n_train);
            let eta = default_eta(c0, fam.bound_b(), train.inputs());
            let sc = ShallowConfig {
                k,
                d: p.d,
                c0,
                eta,
                steps: p.steps,
                seed: root.derive_named("w0").derive(k as u64).derive(trial as u64),
            };
            let fail = |a: &dyn std::fmt::Display, e: &dyn std::fmt::Display| LabError::numerical(cfg.seed, Some(a), e);
            let train_at = |a| -> Result<_, LabError> {
                let st = init(&sc, &fam, a).map_err(|e| fail(a, &e))?;
                gd_train(st, &train, eta, p.steps, fam.bound_b()).map_err(|e| fail(a, &e))
            };
            let s0 = train_at(&base)?;
            let f0 = predict_all(&s0, holdout.inputs()).map_err(|e| fail(&base, &e))?;
            moved
                .iter()
                .map(|a1| {
                    let dist = base.distance(a1);
                    let s1 = train_at(a1)?;
                    let f1 = predict_all(&s1, holdout.inputs()).map_err(|e| fail(a1, &e))?;
                    let dw = s0.w.sub(&s1.w).map_err(|e| fail(a1, &e))?.frobenius_norm();
                    let diffs: Vec<f64> = f0.iter().zip(&f1).map(|(a, b)| (a - b).abs()).collect();
                    Ok(PairMeasure {
                        weight_ratio: dw / dist,
                        max_output_ratio: diffs.iter().fold(0.0, |m: f64, v| m.max(*v)) / dist,
                        avg_output_ratio: mean(&diffs) / dist,
                    })
                })
                .collect()
        })
        .collect();

    let mut per_job = Vec::with_capacity(results.len());
    for r in results {
        per_job.push(r?);
    }
    let hash = cfg.hash();
    let mut trials = ResultTable::new(
        ["k", "trial", "delta", "alpha_distance", "weight_ratio", "max_output_ratio", "avg_output_ratio"],
        &hash,
    );
    for (&(k, trial), ms) in jobs.iter().zip(&per_job) {
        for ((d, a1), m) in p.deltas.iter().zip(&moved).zip(ms) {
            trials.push(vec![
                k.into(),
                trial.into(),
                (*d).into(),
                base.distance(a1).into(),
                m.weight_ratio.into(),
                m.max_output_ratio.into(),
                m.avg_output_ratio.into(),
            ])?;
        }
    }

    let mut table = ResultTable::new(
        [
            "k",
            "delta",
            "weight_ratio_mean",
            "weight_ratio_std",
            "max_output_ratio_mean",
            "avg_output_ratio_mean",
        ],
        &hash,
    );
    let mut summary = Vec::new();
    for &k in &p.widths {
        let mut means = Vec::new();
        for (j, &d) in p.deltas.iter().enumerate() {
            let pick = |f: fn(&PairMeasure) -> f64| -> Vec<f64> {
                jobs.iter().zip(&per_job).filter(|((kk, _), _)| *kk == k).map(|(_, ms)| f(&ms[j])).collect()
            };
            let w = pick(|m| m.weight_ratio);
            means.push(mean(&w));
            table.push(vec![
                k.into(),
                d.into(),
                mean(&w).into(),
                std_dev(&w).into(),
                mean(&pick(|m| m.max_output_ratio)).into(),
                mean(&pick(|m| m.avg_output_ratio)).into(),
            ])?;
        }
        let hi = means.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lo = means.iter().cloned().fold(f64::INFINITY, f64::min);
        summary.push((format!("weight_ratio_spread_k{k}"), hi / lo));
    }
    Ok(RunOutput {
        experiment: cfg.experiment,
        tables: vec![
            ("lipschitz".into(), table),
            ("lipschitz_trials".into(), trials),
            ("lipschitz_summary".into(), summary_table(&hash, summary)),
        ],
    })
}

fn run_deep(cfg: &ExperimentConfig) -> Result<RunOutput, LabError> {
    let p = cfg.lipschitz()?;
    let fam = family(&p.family)?;
    let root = root_stream(cfg.seed, cfg.experiment);
    let x = sphere_points(root.derive_named("inputs"), p.n_train, p.d);
    let data = SampleSet::normalized(x, vec![0.0; p.n_train]).map_err(|e| LabError::numerical(cfg.seed, None, e))?;
    let hash = cfg.hash();
    let mut table = ResultTable::new(
        ["k", "delta", "gram_ratio_mean", "gram_ratio_std", "bound", "violations"],
        &hash,
    );
    let mut summary = Vec::new();
    for &k in &p.widths {
        let mut means = Vec::new();
        for &d in &p.deltas {
            let rep = gram_lipschitz_probe(k, 1.0, root.derive(k as u64), &fam, &data, &[p.depth], p.trials, d)
                .map_err(|e| LabError::numerical(cfg.seed, None, e))?;
            let measured: Vec<f64> = rep.rows.iter().map(|r| r.measured).collect();
            means.push(mean(&measured));
            table.push(vec![
                k.into(),
                d.into(),
                mean(&measured).into(),
                std_dev(&measured).into(),
                rep.rows.first().map_or(f64::NAN, |r| r.bound).into(),
                rep.violations.into(),
            ])?;
        }
        let hi = means.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lo = means.iter().cloned().fold(f64::INFINITY, f64::min);
        summary.push((format!("gram_ratio_spread_k{k}"), hi / lo));
    }
    Ok(RunOutput {
        experiment: cfg.experiment,
        tables: vec![
            ("lipschitz".into(), table),
            ("lipschitz_summary".into(), summary_table(&hash, summary)),
        ],
    })
}

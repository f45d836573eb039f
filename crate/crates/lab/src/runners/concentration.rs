//! Finite-width gram against a Monte-Carlo tangent kernel.

use rayon::prelude::*;
use tvsplit_core::featmap::{sphere_points, SampleSet};
use tvsplit_core::numcore::spectral_norm_sym;
use tvsplit_core::shallownet::{empirical_gram, init, ntk_gram_mc, ShallowConfig};

use super::{family, root_stream, segment_point, summary_table};
use crate::stats::{log_log_slope, mean, std_dev};
use crate::table::ResultTable;
use crate::{ExperimentConfig, LabError, RunOutput};

/// Kernels use `c₀ = 1`, so both sides are `E[σ′σ′]·(xᵢ·xⱼ)` up to sampling error.
pub fn run_concentration(cfg: &ExperimentConfig) -> Result<RunOutput, LabError> {
    let p = cfg.concentration()?;
    let fam = family(&p.family)?;
    let root = root_stream(cfg.seed, cfg.experiment);
    let x = sphere_points(root.derive_named("inputs"), p.n, p.d);
    let data = SampleSet::normalized(x, vec![0.0; p.n]).map_err(|e| LabError::numerical(cfg.seed, None, e))?;
    let alphas = p.alpha_t.iter().map(|&t| segment_point(&fam, t)).collect::<Result<Vec<_>, _>>()?;

    let mut references = Vec::with_capacity(alphas.len());
    for (i, a) in alphas.iter().enumerate() {
        let est = ntk_gram_mc(&fam, a, &data, 1.0, p.mc_samples, root.derive_named("reference").derive(i as u64))
            .map_err(|e| LabError::numerical(cfg.seed, Some(a), e))?;
        references.push(est);
    }

    let jobs: Vec<(usize, usize, usize)> = (0..alphas.len())
        .flat_map(|i| p.widths.iter().flat_map(move |&k| (0..p.trials).map(move |t| (i, k, t))))
        .collect();
    let results: Vec<Result<f64, LabError>> = jobs
        .par_iter()
        .map(|&(i, k, t)| {
            let a = &alphas[i];
            let fail = |e: &dyn std::fmt::Display| LabError::numerical(cfg.seed, Some(a), e);
            let sc = ShallowConfig {
                k,
                d: p.d,
                c0: 1.0,
                eta: 1.0,
                steps: 1,
                seed: root.derive_named("w0").derive(k as u64).derive(t as u64),
            };
            let st = init(&sc, &fam, a).map_err(|e| fail(&e))?;
            let g = empirical_gram(&st, &data).map_err(|e| fail(&e))?;
            spectral_norm_sym(&g.sub(&references[i].mean).map_err(|e| fail(&e))?).map_err(|e| fail(&e))
        })
        .collect();
    let mut devs = Vec::with_capacity(results.len());
    for r in results {
        devs.push(r?);
    }

    let hash = cfg.hash();
    let mut table = ResultTable::new(["alpha_t", "k", "deviation_mean", "deviation_std", "reference_floor"], &hash);
    let mut summary = Vec::new();
    let widths: Vec<f64> = p.widths.iter().map(|&k| k as f64).collect();
    let mut pooled = vec![0.0; p.widths.len()];
    let mut monotone = 0usize;
    for (i, &t) in p.alpha_t.iter().enumerate() {
        // spectral norm of the reference's standard-error matrix bounds its own noise
        let floor = spectral_norm_sym(&references[i].std_err).map_err(|e| LabError::numerical(cfg.seed, Some(&alphas[i]), e))?;
        let mut per_k = Vec::new();
        for (j, &k) in p.widths.iter().enumerate() {
            let sel: Vec<f64> = jobs.iter().zip(&devs).filter(|((ii, kk, _), _)| *ii == i && *kk == k).map(|(_, d)| *d).collect();
            per_k.push(mean(&sel));
            pooled[j] += mean(&sel) / p.alpha_t.len() as f64;
            table.push(vec![t.into(), k.into(), mean(&sel).into(), std_dev(&sel).into(), floor.into()])?;
        }
        summary.push((format!("slope_alpha_t{t}"), log_log_slope(&widths, &per_k)));
        let (lo, hi) = (argmin(&p.widths), argmax(&p.widths));
        if per_k[hi] < per_k[lo] {
            monotone += 1;
        }
    }
    summary.push(("slope".into(), log_log_slope(&widths, &pooled)));
    summary.push(("alphas_decreasing".into(), monotone as f64));
    summary.push(("alphas".into(), p.alpha_t.len() as f64));
    Ok(RunOutput {
        experiment: cfg.experiment,
        tables: vec![
            ("concentration".into(), table),
            ("concentration_summary".into(), summary_table(&hash, summary)),
        ],
    })
}

fn argmin(v: &[usize]) -> usize {
    (0..v.len()).min_by_key(|&i| v[i]).unwrap_or(0)
}

fn argmax(v: &[usize]) -> usize {
    (0..v.len()).max_by_key(|&i| v[i]).unwrap_or(0)
}

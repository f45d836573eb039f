//! Correlation of the spectral estimate over a (γ, h) sweep with `p = γn²/h`.

use rayon::prelude::*;
use tvsplit_core::lowrank::{asymptotic_risk, correlation, correlation_bound, spectral_estimate, two_stage, Rank1Instance};

use super::{root_stream, summary_table};
use crate::stats::{mean, std_dev};
use crate::table::ResultTable;
use crate::{ExperimentConfig, LabError, RunOutput};

struct Trial {
    rho: f64,
    risk: f64,
    ideal_risk: f64,
    asymptotic: f64,
}

pub fn run_rank1(cfg: &ExperimentConfig) -> Result<RunOutput, LabError> {
    let p = cfg.rank1()?;
    let root = root_stream(cfg.seed, cfg.experiment);
    let mut configs = Vec::new();
    for &gamma in &p.gammas {
        for &h in &p.hs {
            let dim = p.p_for(gamma, h);
            if h.saturating_mul(dim) > p.max_entries {
                return Err(LabError::MemoryGuard {
                    h,
                    p: dim,
                    cap: p.max_entries,
                });
            }
            configs.push((gamma, h, dim));
        }
    }
    let jobs: Vec<(usize, usize)> = (0..configs.len()).flat_map(|c| (0..p.seeds).map(move |s| (c, s))).collect();
    let results: Vec<Result<Trial, LabError>> = jobs
        .par_iter()
        .map(|&(c, s)| {
            let (gamma, h, dim) = configs[c];
            let fail = |e: &dyn std::fmt::Display| {
                LabError::numerical(cfg.seed, None, format!("gamma {gamma}, h {h}, replicate {s}: {e}"))
            };
            let stream = root.derive_named(&format!("{gamma}:{h}")).derive(s as u64);
            let inst = Rank1Instance::new(h, dim, p.n, p.noise_sigma, stream).map_err(|e| fail(&e))?;
            let p_bar = inst.p_bar();
            if p.spectral_only {
                let (a, _) = spectral_estimate(&inst).map_err(|e| fail(&e))?;
                let rho = correlation(inst.alpha_star(), &a);
                return Ok(Trial {
                    rho,
                    risk: f64::NAN,
                    ideal_risk: f64::NAN,
                    asymptotic: asymptotic_risk(rho, p_bar).unwrap_or(f64::NAN),
                });
            }
            let r = two_stage(&inst).map_err(|e| fail(&e))?;
            Ok(Trial {
                rho: r.rho,
                risk: r.risk,
                ideal_risk: r.ideal_feature_risk,
                asymptotic: asymptotic_risk(r.rho, p_bar).unwrap_or(f64::NAN),
            })
        })
        .collect();
    let mut trials_out = Vec::with_capacity(results.len());
    for r in results {
        trials_out.push(r?);
    }

    let hash = cfg.hash();
    let mut trials = ResultTable::new(
        ["gamma", "h", "p", "replicate", "rho", "rho_sq", "risk", "ideal_feature_risk", "asymptotic_risk"],
        &hash,
    );
    for (&(c, s), t) in jobs.iter().zip(&trials_out) {
        let (gamma, h, dim) = configs[c];
        trials.push(vec![
            gamma.into(),
            h.into(),
            dim.into(),
            s.into(),
            t.rho.into(),
            (t.rho * t.rho).into(),
            t.risk.into(),
            t.ideal_risk.into(),
            t.asymptotic.into(),
        ])?;
    }

    let mut table = ResultTable::new(
        [
            "gamma",
            "h",
            "p",
            "dims_over_n",
            "rho_mean",
            "rho_std",
            "rho_sq_mean",
            "risk_mean",
            "ideal_feature_risk_mean",
            "asymptotic_risk_mean",
            "correlation_bound",
        ],
        &hash,
    );
    let mut summary = Vec::new();
    let mut gamma_means = Vec::new();
    for &gamma in &p.gammas {
        let mut per_h = Vec::new();
        for (c, &(g, h, dim)) in configs.iter().enumerate() {
            if g != gamma {
                continue;
            }
            let sel: Vec<&Trial> = jobs.iter().zip(&trials_out).filter(|((cc, _), _)| *cc == c).map(|(_, t)| t).collect();
            let col = |f: fn(&Trial) -> f64| -> Vec<f64> { sel.iter().map(|t| f(t)).collect() };
            let rho = col(|t| t.rho);
            per_h.push(mean(&rho));
            let n = p.n as f64;
            table.push(vec![
                gamma.into(),
                h.into(),
                dim.into(),
                ((dim + h) as f64 / n).into(),
                mean(&rho).into(),
                std_dev(&rho).into(),
                mean(&col(|t| t.rho * t.rho)).into(),
                mean(&col(|t| t.risk)).into(),
                mean(&col(|t| t.ideal_risk)).into(),
                mean(&col(|t| t.asymptotic)).into(),
                correlation_bound(dim as f64 / n, h as f64 / n, p.noise_sigma).into(),
            ])?;
        }
        let hi = per_h.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lo = per_h.iter().cloned().fold(f64::INFINITY, f64::min);
        summary.push((format!("rho_spread_gamma{gamma}"), hi - lo));
        summary.push((format!("rho_mean_gamma{gamma}"), mean(&per_h)));
        gamma_means.push((gamma, mean(&per_h)));
    }
    gamma_means.sort_by(|a, b| a.0.total_cmp(&b.0));
    let decreasing = gamma_means.windows(2).all(|w| w[0].1 > w[1].1);
    summary.push(("rho_decreasing_in_gamma".into(), if decreasing { 1.0 } else { 0.0 }));
    Ok(RunOutput {
        experiment: cfg.experiment,
        tables: vec![
            ("rank1".into(), table),
            ("rank1_trials".into(), trials),
            ("rank1_summary".into(), summary_table(&hash, summary)),
        ],
    })
}

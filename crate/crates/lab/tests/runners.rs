use tvsplit_lab::{run, ExperimentConfig, LabError};

fn cfg(text: &str) -> ExperimentConfig {
    ExperimentConfig::from_toml(text).unwrap()
}

#[test]
fn alpha_invariant_family_gives_zero_ratios() {
    // linear-pair mixes two identical bases, so every α on the segment is the same network
    let c = cfg("schema_version = 1\nexperiment = \"lipschitz\"\nseed = 2\n[lipschitz]\nwidths = [32]\ndeltas = [0.05, 0.1]\ntrials = 2\nfamily = \"linear-pair\"\nd = 4\nn_train = 8\nn_holdout = 50\nsteps = 50\n");
    let out = run(&c).unwrap();
    for col in ["weight_ratio_mean", "max_output_ratio_mean", "avg_output_ratio_mean"] {
        for v in out.main().numeric(col).unwrap() {
            assert!(v.abs() < 1e-10, "{col} = {v}");
        }
    }
}

#[test]
fn normalized_weight_distance_is_stable_across_delta() {
    let c = cfg("schema_version = 1\nexperiment = \"lipschitz\"\nseed = 1\n[lipschitz]\nwidths = [1024]\ntrials = 2\n");
    let out = run(&c).unwrap();
    let spread = out.summary("weight_ratio_spread_k1024").unwrap();
    assert!(spread < 2.0, "spread {spread}");
}

#[test]
fn deep_flag_probes_the_gram() {
    let c = cfg("schema_version = 1\nexperiment = \"lipschitz\"\nseed = 3\n[lipschitz]\nwidths = [6]\ndeltas = [0.01, 0.02]\ntrials = 3\ndeep = true\ndepth = 2\nfamily = \"smooth4\"\nd = 3\nn_train = 5\n");
    let out = run(&c).unwrap();
    let t = out.main();
    assert_eq!(t.len(), 2);
    assert!(t.numeric("violations").unwrap().iter().all(|&v| v == 0.0));
    let (m, b) = (t.numeric("gram_ratio_mean").unwrap(), t.numeric("bound").unwrap());
    assert!(m.iter().zip(&b).all(|(m, b)| m > &0.0 && m <= b));
}

#[test]
fn linear_activation_kernel_is_exact() {
    // σ′ is constant, so the finite-width gram and the reference coincide
    let c = cfg("schema_version = 1\nexperiment = \"concentration\"\nseed = 4\n[concentration]\nwidths = [8, 64]\nalpha_t = [0.3, 1.0]\nfamily = \"linear-pair\"\nn = 6\nd = 3\ntrials = 2\nmc_samples = 2000\n");
    let out = run(&c).unwrap();
    for v in out.main().numeric("deviation_mean").unwrap() {
        assert!(v < 1e-12, "deviation {v}");
    }
}

#[test]
fn kernel_deviation_shrinks_with_width() {
    let c = cfg("schema_version = 1\nexperiment = \"concentration\"\nseed = 5\n[concentration]\nwidths = [64, 4096]\nn = 16\nmc_samples = 100000\n");
    let out = run(&c).unwrap();
    assert_eq!(out.summary("alphas_decreasing"), out.summary("alphas"));
}

#[test]
fn gap_shrinks_on_every_replicate() {
    let c = cfg("schema_version = 1\nexperiment = \"gap\"\nseed = 6\n[gap]\nn_val = [50, 3200]\nseeds = 5\nmc_test = 20000\n");
    let out = run(&c).unwrap();
    assert_eq!(out.summary("replicates_decreasing"), Some(5.0));
    let g = out.main().numeric("max_gap_mean").unwrap();
    assert!(g[1] < g[0]);
}

#[test]
fn validation_on_the_test_set_has_no_gap() {
    use std::sync::Arc;
    use tvsplit_core::featmap::{ridge_fit, FeatureFamily, LinearFeatureModel, PlantedTask};
    use tvsplit_core::numcore::RngStream;
    use tvsplit_core::tvo::{tvo_search, Loss, SearchData, SearchSpace};

    let fam = Arc::new(FeatureFamily::random_tanh(2, 4, 10, RngStream::new(7, 0)));
    let space = SearchSpace::simplex(2, 4, 0.0).unwrap();
    let task = PlantedTask::new(fam.clone(), space.grid()[1].clone(), 0.1, RngStream::new(7, 1)).unwrap();
    let train = task.sample(RngStream::new(7, 2), 8);
    let pop = task.sample(RngStream::new(7, 3), 500);
    let trainer = |a: &tvsplit_core::activations::HyperPoint| {
        ridge_fit(&fam, a, &train, 1e-3).map(|fit| LinearFeatureModel {
            family: fam.clone(),
            fit,
        })
    };
    let data = SearchData {
        train: Some(&train),
        val: &pop,
        test: Some(&pop),
    };
    let out = tvo_search(trainer, &space, data, Loss::Squared).unwrap();
    for r in &out.table {
        assert_eq!(r.test_risk, Some(r.val_risk));
    }
}

#[test]
fn rank1_runs_are_reproducible_and_guarded() {
    let text = "schema_version = 1\nexperiment = \"rank1\"\nseed = 8\n[rank1]\ngammas = [0.2, 0.4]\nhs = [2, 3]\nn = 30\nseeds = 3\n";
    let a = run(&cfg(text)).unwrap();
    let b = run(&cfg(text)).unwrap();
    for ((_, ta), (_, tb)) in a.tables.iter().zip(&b.tables) {
        assert_eq!(ta.to_csv_string().unwrap(), tb.to_csv_string().unwrap());
    }
    let t = a.main();
    assert_eq!(t.len(), 4);
    assert!(t.numeric("rho_mean").unwrap().iter().all(|r| (0.0..=1.0).contains(r)));

    let guarded = cfg(&text.replace("seeds = 3", "seeds = 3\nmax_entries = 50"));
    assert!(matches!(run(&guarded), Err(LabError::MemoryGuard { .. })));
}

#[test]
fn tvo_generalization_on_small_task() {
    let c = cfg("schema_version = 1\nexperiment = \"tvo-gen\"\nseed = 9\n[tvo-gen]\nk = 256\nd = 4\ngrid_m = 2\nn_train = 12\nn_val = 100\nmc_test = 2000\nsteps = 300\n");
    let out = run(&c).unwrap();
    let t = out.main();
    assert_eq!(t.len(), 3);
    assert_eq!(t.numeric("selected").unwrap().iter().sum::<f64>(), 1.0);
    let hat = out.summary("alpha_hat_index").unwrap() as usize;
    let val = t.numeric("val_error").unwrap();
    assert!(val.iter().all(|v| *v >= val[hat]));
    assert!(t.numeric("gram_min_eig").unwrap().iter().all(|v| *v > 0.0));
    assert!(t.numeric("excess_form").unwrap().iter().all(|v| v.is_finite() && *v > 0.0));
}

#[test]
fn diverging_training_is_a_numerical_failure() {
    let c = cfg("schema_version = 1\nexperiment = \"tvo-gen\"\nseed = 9\n[tvo-gen]\nk = 32\nd = 4\ngrid_m = 1\nn_train = 8\nn_val = 10\nmc_test = 10\nsteps = 200\neta = 1e6\n");
    match run(&c) {
        Err(e @ LabError::Numerical { .. }) => {
            assert_eq!(e.exit_code(), 3);
            assert!(e.to_string().contains("alpha"));
        }
        other => panic!("expected a numerical failure, got {other:?}"),
    }
}

#[test]
fn external_dataset_feeds_the_search() {
    let dir = tempfile::tempdir().unwrap();
    let (f, l) = (dir.path().join("x.txt"), dir.path().join("y.txt"));
    let mut xs = String::new();
    let mut ys = String::new();
    for i in 0..40 {
        let t = i as f64 * 0.37;
        xs.push_str(&format!("{} {} {}\n", t.cos(), t.sin(), 0.5));
        ys.push_str(if t.cos() > 0.0 { "1\n" } else { "-1\n" });
    }
    std::fs::write(&f, xs).unwrap();
    std::fs::write(&l, ys).unwrap();
    let text = format!(
        "schema_version = 1\nexperiment = \"tvo-gen\"\nseed = 1\n[tvo-gen]\nk = 64\nd = 3\ngrid_m = 1\nn_train = 10\nn_val = 10\nsteps = 100\nfeatures_path = {:?}\nlabels_path = {:?}\n",
        f.display().to_string(),
        l.display().to_string()
    );
    let out = run(&cfg(&text)).unwrap();
    assert_eq!(out.main().len(), 2);
    let wrong_dim = text.replace("d = 3", "d = 5");
    assert!(matches!(run(&cfg(&wrong_dim)), Err(LabError::Config(_))));
}

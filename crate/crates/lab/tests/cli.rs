use std::path::Path;
use std::process::Command;

const BIN: &str = env!("CARGO_BIN_EXE_tvsplit-lab");

const RANK1: &str = "schema_version = 1\nexperiment = \"rank1\"\nseed = 3\noutput_dir = \"unused\"\n[rank1]\ngammas = [0.2]\nhs = [2, 3]\nn = 30\nseeds = 4\n";

fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn lab(args: &[&str], threads: Option<&str>) -> std::process::Output {
    let mut c = Command::new(BIN);
    c.args(args).env("RUST_LOG", "warn");
    if let Some(t) = threads {
        c.env("TVSPLIT_THREADS", t);
    }
    c.output().unwrap()
}

#[test]
fn successful_run_writes_csv_and_metadata() {
    let dir = tempfile::tempdir().unwrap();
    let conf = write(dir.path(), "c.toml", RANK1);
    let out = dir.path().join("out");
    let o = lab(&["rank1", "--config", conf.to_str().unwrap(), "--out", out.to_str().unwrap(), "--plots"], None);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["rank1.csv", "rank1_trials.csv", "rank1_summary.csv", "metadata.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
    assert!(std::fs::read_dir(&out).unwrap().any(|e| e.unwrap().path().extension().is_some_and(|x| x == "svg")));
    let meta = tvsplit_lab::Metadata::read(&out.join("metadata.json")).unwrap();
    let table = tvsplit_lab::ResultTable::read_csv(&out.join("rank1.csv")).unwrap();
    assert_eq!(meta.config_hash, table.config_hash());
    assert_eq!(meta.seed, 3);
}

#[test]
fn reruns_are_byte_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let conf = write(dir.path(), "c.toml", RANK1);
    let mut csvs = Vec::new();
    for (i, threads) in ["1", "3", "1"].iter().enumerate() {
        let out = dir.path().join(format!("o{i}"));
        let o = lab(&["rank1", "--config", conf.to_str().unwrap(), "--out", out.to_str().unwrap()], Some(threads));
        assert_eq!(o.status.code(), Some(0));
        csvs.push(std::fs::read(out.join("rank1_trials.csv")).unwrap());
    }
    assert_eq!(csvs[0], csvs[1]);
    assert_eq!(csvs[0], csvs[2]);
}

#[test]
fn seed_override_changes_results_and_hash() {
    let dir = tempfile::tempdir().unwrap();
    let conf = write(dir.path(), "c.toml", RANK1);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(lab(&["rank1", "--config", conf.to_str().unwrap(), "--out", a.to_str().unwrap()], None).status.code(), Some(0));
    let o = lab(&["rank1", "--config", conf.to_str().unwrap(), "--out", b.to_str().unwrap(), "--seed", "4"], None);
    assert_eq!(o.status.code(), Some(0));
    let ta = tvsplit_lab::ResultTable::read_csv(&a.join("rank1_trials.csv")).unwrap();
    let tb = tvsplit_lab::ResultTable::read_csv(&b.join("rank1_trials.csv")).unwrap();
    assert_ne!(ta.config_hash(), tb.config_hash());
    assert_ne!(ta.numeric("rho").unwrap(), tb.numeric("rho").unwrap());
    let agg = tvsplit_lab::ResultTable::load_aggregate(&[a.join("rank1_trials.csv"), b.join("rank1_trials.csv")]);
    assert!(matches!(agg, Err(tvsplit_lab::TableError::MixedHash(..))));
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.toml", &RANK1.replace("seeds = 4", "seeds = 4\nwhat = 1"));
    let o = lab(&["rank1", "--config", bad.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(2));
    let good = write(dir.path(), "good.toml", RANK1);
    assert_eq!(lab(&["gap", "--config", good.to_str().unwrap()], None).status.code(), Some(2));
    assert_eq!(lab(&["nonsense", "--config", good.to_str().unwrap()], None).status.code(), Some(2));
    assert_eq!(lab(&["rank1", "--config", "/does/not/exist.toml"], None).status.code(), Some(2));
    let guarded = write(dir.path(), "g.toml", &RANK1.replace("seeds = 4", "seeds = 4\nmax_entries = 10"));
    let o = lab(&["rank1", "--config", guarded.to_str().unwrap(), "--out", dir.path().join("g").to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("memory guard"));
    assert_eq!(lab(&["rank1", "--config", good.to_str().unwrap()], Some("zero")).status.code(), Some(2));
}

#[test]
fn numerical_failure_exits_with_three_and_names_alpha() {
    let dir = tempfile::tempdir().unwrap();
    let conf = write(
        dir.path(),
        "t.toml",
        "schema_version = 1\nexperiment = \"tvo-gen\"\nseed = 2\n[tvo-gen]\nk = 16\nd = 3\ngrid_m = 1\nn_train = 6\nn_val = 6\nmc_test = 6\nsteps = 100\neta = 1e6\n",
    );
    let o = lab(&["tvo-gen", "--config", conf.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(3));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("seed 2") && err.contains("alpha"), "{err}");
}

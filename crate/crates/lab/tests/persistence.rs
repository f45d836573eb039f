use proptest::prelude::*;
use tvsplit_lab::dataset::{load_samples, split_consecutive};
use tvsplit_lab::plot::{render_svg, series_from_table, PlotSpec};
use tvsplit_lab::stats::{log_log_slope, ranks, spearman, std_dev};
use tvsplit_lab::{Cell, Metadata, ResultTable, TableError};

fn sample_table(hash: &str) -> ResultTable {
    let mut t = ResultTable::new(["name", "k", "value"], hash);
    t.push(vec!["a".into(), 3usize.into(), 0.1f64.into()]).unwrap();
    t.push(vec!["b".into(), 4usize.into(), (1.0f64 / 3.0).into()]).unwrap();
    t
}

#[test]
fn csv_layout_and_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.csv");
    let t = sample_table("abc123");
    t.write_csv(&path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("name,k,value,config_hash"));
    assert_eq!(lines.next(), Some("a,3,1.0000000000000001e-1,abc123"));
    let back = ResultTable::read_csv(&path).unwrap();
    assert_eq!(back, t);
}

#[test]
fn ragged_rows_are_rejected() {
    let mut t = ResultTable::new(["x", "y"], "h");
    assert!(matches!(t.push(vec![Cell::Int(1)]), Err(TableError::Ragged { .. })));
}

#[test]
fn mixed_hashes_are_refused() {
    let dir = tempfile::tempdir().unwrap();
    let (p1, p2, p3) = (dir.path().join("1.csv"), dir.path().join("2.csv"), dir.path().join("3.csv"));
    sample_table("aaaa").write_csv(&p1).unwrap();
    sample_table("aaaa").write_csv(&p2).unwrap();
    sample_table("bbbb").write_csv(&p3).unwrap();
    let agg = ResultTable::load_aggregate(&[p1.clone(), p2]).unwrap();
    assert_eq!(agg.len(), 4);
    assert!(matches!(ResultTable::load_aggregate(&[p1, p3]), Err(TableError::MixedHash(..))));

    // a single file with two hashes is refused as well
    let p4 = dir.path().join("4.csv");
    std::fs::write(&p4, "x,config_hash\n1,aaaa\n2,bbbb\n").unwrap();
    assert!(matches!(ResultTable::read_csv(&p4), Err(TableError::MixedHash(..))));
    let p5 = dir.path().join("5.csv");
    std::fs::write(&p5, "x\n1\n").unwrap();
    assert!(matches!(ResultTable::read_csv(&p5), Err(TableError::MissingHash { .. })));
}

#[test]
fn metadata_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let m = Metadata {
        experiment: "gap".into(),
        config_hash: "abc".into(),
        seed: 4,
        version: "0.1.0".into(),
        wall_clock_secs: 1.5,
        files: vec!["gap.csv".into()],
    };
    let p = dir.path().join("metadata.json");
    m.write(&p).unwrap();
    assert_eq!(Metadata::read(&p).unwrap(), m);
}

#[test]
fn lookup_and_numeric_columns() {
    let t = sample_table("h");
    assert_eq!(t.numeric("k").unwrap(), vec![3.0, 4.0]);
    assert_eq!(t.lookup("name", "b", "k").unwrap(), Some(4.0));
    assert_eq!(t.lookup("name", "zzz", "k").unwrap(), None);
    assert!(matches!(t.numeric("name"), Err(TableError::NotNumeric { .. })));
    assert!(matches!(t.numeric("nope"), Err(TableError::UnknownColumn(_))));
}

#[test]
fn chart_is_built_from_table_rows() {
    let mut t = ResultTable::new(["g", "x", "y"], "h");
    for (g, x, y) in [(1usize, 1.0, 2.0), (1, 2.0, 1.0), (2, 1.0, 3.0), (2, 4.0, -1.0)] {
        t.push(vec![g.into(), x.into(), y.into()]).unwrap();
    }
    let spec = PlotSpec {
        title: "demo".into(),
        x: "x".into(),
        y: "y".into(),
        group: Some("g".into()),
        log_x: false,
        log_y: true,
    };
    let series = series_from_table(&t, &spec).unwrap();
    assert_eq!(series.len(), 2);
    // the negative y cannot sit on a log axis
    assert_eq!(series[1].1, vec![(1.0, 3.0)]);
    let svg = render_svg(&spec, &series);
    assert!(svg.starts_with("<svg"));
    assert_eq!(svg.matches("<polyline").count(), 2);
    assert!(svg.trim_end().ends_with("</svg>"));
}

#[test]
fn dataset_hook_reads_and_splits() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("x.txt");
    let l = dir.path().join("y.txt");
    std::fs::write(&f, "# header\n3 4\n1,0\n0 2\n0.6 0.8\n").unwrap();
    std::fs::write(&l, "1\n-1\n1\n-1\n").unwrap();
    let data = load_samples(&f, &l, true).unwrap();
    assert_eq!((data.len(), data.dim()), (4, 2));
    assert!((data.input(0)[0] - 0.6).abs() < 1e-15);
    let parts = split_consecutive(&data, &[2, 1]).unwrap();
    assert_eq!(parts.iter().map(|p| p.len()).collect::<Vec<_>>(), vec![2, 1, 1]);
    assert_eq!(parts[2].label(0), -1.0);
    assert!(split_consecutive(&data, &[2, 2]).is_err());

    std::fs::write(&l, "1\n-1\n").unwrap();
    assert!(load_samples(&f, &l, true).is_err());
    std::fs::write(&f, "1 2\n3\n").unwrap();
    assert!(load_samples(&f, &l, false).is_err());
}

#[test]
fn rank_statistics() {
    assert_eq!(ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    assert!((spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 25.0]) - 1.0).abs() < 1e-15);
    assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]) + 1.0).abs() < 1e-15);
    assert!(spearman(&[1.0, 1.0], &[1.0, 2.0]).is_nan());
    assert!((std_dev(&[1.0, 3.0]) - 2f64.sqrt()).abs() < 1e-15);
    let x = [1.0, 4.0, 16.0];
    let y: Vec<f64> = x.iter().map(|v: &f64| 5.0 * v.powf(-0.5)).collect();
    assert!((log_log_slope(&x, &y) + 0.5).abs() < 1e-12);
}

proptest! {
    #[test]
    fn floats_survive_csv(v in prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.csv");
        let mut t = ResultTable::new(["v"], "h");
        t.push(vec![Cell::Num(v)]).unwrap();
        t.write_csv(&path).unwrap();
        let back = ResultTable::read_csv(&path).unwrap().numeric("v").unwrap()[0];
        prop_assert_eq!(back.to_bits(), v.to_bits());
    }
}

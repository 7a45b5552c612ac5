mod common;

use dyadshift_bench::emit::{csv_bytes, emit, load_summary, paths};
use dyadshift_bench::report::{Cell, Timing};
use dyadshift_bench::{run_suite, Suite, Table};

#[test]
fn empty_table_keeps_its_header() {
    let t = Table::new(&["a", "b"]);
    assert_eq!(csv_bytes(&t).unwrap(), b"a,b\n");
}

#[test]
fn floats_round_trip_through_csv() {
    let mut t = Table::new(&["x"]);
    let vals = [0.1, 4.3e-16, 1.0 / 3.0, 12345.678];
    for v in vals {
        t.push(vec![Cell::float(v)]);
    }
    let text = String::from_utf8(csv_bytes(&t).unwrap()).unwrap();
    let back: Vec<f64> = text.lines().skip(1).map(|l| l.parse().unwrap()).collect();
    assert_eq!(back, vals);
}

#[test]
fn summary_round_trips() {
    let report = run_suite(&common::small(Suite::Stopping51, 5)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let timing = Timing {
        suite: report.suite.clone(),
        seconds: 0.5,
        threads: 1,
    };
    let written = emit(&report, &timing, dir.path()).unwrap();
    assert_eq!(written, paths(dir.path(), "stopping-51"));
    let back = load_summary(&written.summary).unwrap();
    assert_eq!(back.suite, report.suite);
    assert_eq!(back.config, report.config);
    assert_eq!(csv_bytes(&back.table).unwrap(), csv_bytes(&report.table).unwrap());
    assert_eq!(back.criteria.len(), report.criteria.len());
}

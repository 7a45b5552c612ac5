mod common;

use dyadshift_bench::suites::sampling::khintchine_maurey_band;
use dyadshift_bench::{run_suite, Suite};

#[test]
fn every_small_suite_runs_and_passes() {
    for (k, s) in Suite::ALL.into_iter().enumerate() {
        let report = run_suite(&common::small(s, 11 + k as u64)).unwrap_or_else(|e| panic!("{s}: {e}"));
        assert!(!report.table.rows.is_empty(), "{s} produced no rows");
        assert!(!report.criteria.is_empty(), "{s} produced no criteria");
        for c in &report.criteria {
            assert!(c.pass, "{s}: {}", c.line());
        }
        for row in &report.table.rows {
            assert_eq!(row.len(), report.table.columns.len(), "{s} row width");
        }
    }
}

#[test]
fn seed_changes_random_suites() {
    let a = run_suite(&common::small(Suite::KhintchineMaurey, 1)).unwrap();
    let b = run_suite(&common::small(Suite::KhintchineMaurey, 2)).unwrap();
    assert_ne!(a.table, b.table);
}

#[test]
fn khintchine_maurey_bands() {
    assert_eq!(khintchine_maurey_band(2.0), (1.0, 1.0));
    assert_eq!(khintchine_maurey_band(1.5), (std::f64::consts::FRAC_1_SQRT_2, 1.0));
    // Gaussian fourth moment 3 gives (3)^{1/4}.
    let (lo, hi) = khintchine_maurey_band(4.0);
    assert_eq!(lo, 1.0);
    assert!((hi - 3f64.powf(0.25)).abs() < 1e-12);
}

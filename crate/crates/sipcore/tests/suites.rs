mod support;

use std::time::Instant;

use support::*;

#[test]
fn kernels_match_scalar_oracles() {
    let t = Instant::now();
    let r = oracle_suite(200, 1);
    assert!(r.worst() <= 1e-10, "{r:?}");
    assert!(t.elapsed().as_secs_f64() < 10.0);
}

#[test]
fn gauss_jordan_oracle_solves_small_systems() {
    // [[2, i], [-i, 3]] x = [1, 0]  =>  x = [3/5, i/5]
    let x = solve(vec![vec![c(2.0, 0.0), c(0.0, 1.0)], vec![c(0.0, -1.0), c(3.0, 0.0)]], vec![c(1.0, 0.0), c(0.0, 0.0)]);
    assert!((x[0] - c(0.6, 0.0)).norm() < 1e-15);
    assert!((x[1] - c(0.0, 0.2)).norm() < 1e-15);
}

#[test]
fn exact_recovery() {
    let t = Instant::now();
    let r = recovery_suite(1000, 2);
    assert!(r.pilot_only_nmse_db <= -200.0, "{r:?}");
    assert_eq!(r.perfect_csi_errors, 0, "{r:?}");
    assert_eq!(r.perfect_csi_symbols, 1000 * 2 * 16);
    assert!(r.genie_nmse_db <= -200.0, "{r:?}");
    assert!(r.raw_nmse_db > -30.0, "{r:?}");
    assert!(t.elapsed().as_secs_f64() < 30.0);
}

#[test]
fn pilots_and_placement() {
    let r = pilot_suite();
    assert!(r.orthogonal, "{r:?}");
    assert!(r.bijection);
}

#[test]
fn embedding_endpoints_and_shape() {
    let r = embedding_suite();
    assert!(r.endpoint_err <= 1e-9, "{r:?}");
    assert!(r.shape_ok && r.zero_exact);
}

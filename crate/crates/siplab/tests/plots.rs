use sipcore::eval::{MetricRecord, NMSE_FLOOR_DB};
use siplab::plots::{curves, plot_pdp_heatmap, plot_sweep};

fn row(scheme: &str, snr_db: f64, nmse_db: f64) -> MetricRecord {
    MetricRecord {
        scheme: scheme.into(),
        snr_db,
        velocity_kmh: 3.0,
        nmse_db,
        symbol_mse: 0.1 / snr_db,
        ser: 0.01,
        ber: 0.003,
        samples: 10,
    }
}

#[test]
fn empty_sweep_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    assert!(plot_sweep(&[], dir.path()).unwrap().is_empty());
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn three_schemes_by_three_snrs() {
    let mut rows = Vec::new();
    for snr in [14.0, 10.0, 12.0] {
        for s in ["TP", "SIP-uniform", "CaSIP"] {
            rows.push(row(s, snr, -snr));
        }
    }
    let series = curves(&rows, |r| Some(r.symbol_mse));
    assert_eq!(series.len(), 3);
    for (name, pts) in &series {
        assert_eq!(pts.len(), 3, "{name}");
        assert_eq!(pts.iter().map(|p| p.0).collect::<Vec<_>>(), [10.0, 12.0, 14.0]);
    }
    assert_eq!(series[0].0, "TP");

    let dir = tempfile::tempdir().unwrap();
    let files = plot_sweep(&rows, dir.path()).unwrap();
    assert_eq!(files.len(), 2);
    let nmse = std::fs::read_to_string(&files[0]).unwrap();
    assert_eq!(nmse.matches("<circle").count(), 9);
    let mse = std::fs::read_to_string(&files[1]).unwrap();
    assert_eq!(mse.matches("<circle").count(), 18);
}

#[test]
fn floor_rows_are_left_out_of_the_nmse_plot() {
    let rows = vec![row("perfect-CSI", 10.0, NMSE_FLOOR_DB), row("TP", 10.0, -12.0)];
    let dir = tempfile::tempdir().unwrap();
    let files = plot_sweep(&rows, dir.path()).unwrap();
    let nmse = std::fs::read_to_string(&files[0]).unwrap();
    assert_eq!(nmse.matches("<circle").count(), 1);
    assert!(!nmse.contains("perfect-CSI"));
}

#[test]
fn heat_map_has_one_panel_per_user() {
    let grid = sipcore::grid::ResourceGrid::new(24, 14).unwrap();
    let rho = sipcore::tx::PdpFactors::new(
        4,
        grid.res(),
        (0..4 * grid.res()).map(|i| 0.2 + 0.2 * (i % 7) as f64 / 7.0).collect(),
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("h.svg");
    plot_pdp_heatmap(&rho, &grid, &path).unwrap();
    let svg = std::fs::read_to_string(&path).unwrap();
    for k in 0..4 {
        assert!(svg.contains(&format!("user {k}")));
    }
    assert!(svg.matches("<rect").count() >= 4 * grid.res());
    let wrong = sipcore::grid::ResourceGrid::new(12, 14).unwrap();
    assert!(plot_pdp_heatmap(&rho, &wrong, &path).is_err());
}

use std::path::Path;

use splitgrow::experiment::{execute, RunConfig};
use splitgrow::Error;

fn rows(path: &Path) -> Vec<Vec<String>> {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# config_hash="));
    lines.skip(1).map(|l| l.split(',').map(str::to_string).collect()).collect()
}

#[test]
fn angle_sweep_writes_one_row_per_angle() {
    let cfg = RunConfig::parse(
        "experiment = ANGLE_SWEEP\nseed = 1\n[data]\npoints = 200\n[optim]\nmax_iters = 500\n[sweep]\nneurons = 3\nangles = 12\npolish_iters = 2000\n",
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let summary = execute(&cfg, dir.path()).unwrap();
    assert!(summary.passed);
    let sweep = rows(&dir.path().join("angle_sweep.csv"));
    assert_eq!(sweep.len(), 12);
    let gains: Vec<f64> = sweep.iter().map(|r| r[2].parse().unwrap()).collect();
    let best = gains.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    assert!(gains[0] == best || gains[6] == best, "{gains:?}");
    assert_eq!(rows(&dir.path().join("final_model.csv")).len(), 3);
}

#[test]
fn eigen_gain_rows_cover_every_neuron_sorted() {
    let cfg = RunConfig::parse(
        "experiment = EIGEN_VS_GAIN\nseed = 2\n[data]\npoints = 200\n[optim]\nmax_iters = 500\n[sweep]\nneurons = 4\npolish_iters = 2000\nretrain_iters = 100\n",
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    execute(&cfg, dir.path()).unwrap();
    let table = rows(&dir.path().join("eigen_gain.csv"));
    assert_eq!(table.len(), 4);
    let lambdas: Vec<f64> = table.iter().map(|r| r[1].parse().unwrap()).collect();
    assert!(lambdas.windows(2).all(|w| w[0] <= w[1]));
}

#[test]
fn mmd_log_decreases_across_rounds() {
    let cfg = RunConfig::parse("experiment = MMD_COMPRESS\nseed = 0\n[optim]\nmax_iters = 3000\n").unwrap();
    let dir = tempfile::tempdir().unwrap();
    execute(&cfg, dir.path()).unwrap();
    let log = rows(&dir.path().join("run.csv"));
    let mut ends = Vec::new();
    for w in log.windows(2) {
        if w[0][0] != w[1][0] {
            ends.push(w[0][3].parse::<f64>().unwrap());
        }
    }
    ends.push(log.last().unwrap()[3].parse().unwrap());
    assert_eq!(ends.len(), 5);
    assert!(ends.windows(2).all(|w| w[1] < w[0]), "{ends:?}");
    let model = rows(&dir.path().join("final_model.csv"));
    let total: f64 = model.iter().map(|r| r[1].parse::<f64>().unwrap()).sum();
    assert!((total - 1.0).abs() < 1e-12);
}

#[test]
fn divergence_fails_but_keeps_logs() {
    let cfg = RunConfig::parse("experiment = RBF_TOY\n[optim]\nlearning_rate = 1e300\nmax_iters = 100\n").unwrap();
    let dir = tempfile::tempdir().unwrap();
    let err = execute(&cfg, dir.path()).unwrap_err();
    assert!(matches!(err, Error::Diverged { .. }), "{err:?}");
    for name in ["config.echo", "run.csv", "splits.csv", "final_model.csv"] {
        assert!(dir.path().join(name).exists(), "{name}");
    }
}

#[test]
fn bad_key_is_reported_by_name() {
    match RunConfig::parse("experiment = RBF_TOY\n[growth]\ntarget = 3\n") {
        Err(Error::Config { key, .. }) => assert_eq!(key, "growth.target"),
        other => panic!("{other:?}"),
    }
}

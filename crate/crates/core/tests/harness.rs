use std::path::PathBuf;

use semival::exact::concentration_bound;
use semival::experiment::{
    compare_paired, run_experiment, sweep_gamma, verify_bounds, verify_mse, ExperimentConfig, ExperimentKind,
    OneOrMany, Prepared, CSV_HEADER,
};
use semival::Error;

fn voting_file(dir: &tempfile::TempDir) -> String {
    let path: PathBuf = dir.path().join("vote12.txt");
    std::fs::write(&path, "# twelve players\nquota=25\nweights=9 8 7 6 5 4 4 3 3 2 1 1\n").unwrap();
    format!("wvg:@{}", path.display())
}

fn config(game: &str, estimators: &[&str]) -> ExperimentConfig {
    let mut c = ExperimentConfig::new("t", game);
    c.estimators = estimators.iter().map(|s| s.to_string()).collect();
    c
}

#[test]
fn record_count_for_six_estimators() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = config(
        &voting_file(&dir),
        &["base", "adalina", "kernel:modified", "shapiq", "msr", "adalina-all"],
    );
    c.checkpoints = vec![0.1, 0.5, 1.0];
    let out = run_experiment(&c).unwrap();
    assert_eq!(out.records.len(), 10 * 3 * 6);
    assert!(out.records.iter().all(|r| r.rel_err.unwrap().is_finite() && r.sq_err.unwrap().is_finite()));
    assert_eq!(out.summary.len(), 3 * 6);
}

#[test]
fn base_error_tracks_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let c = config(&voting_file(&dir), &["base"]);
    let prepared = Prepared::new(&c).unwrap();
    let norm = prepared.truths[0].as_ref().unwrap().phi_norm_sq.sqrt();
    let out = run_experiment(&c).unwrap();
    let s = &out.summary[0];
    let predicted = s.theory_mse.unwrap().sqrt() / norm;
    let ratio = s.rel_err_mean.unwrap() / predicted;
    assert!(ratio > 1.0 / 1.5 && ratio <= 1.5, "ratio {ratio}");
}

#[test]
fn adalina_beats_base_on_shifted_game() {
    let base_game = "randtable:10,6";
    let probe = Prepared::new(&config(base_game, &["base"])).unwrap();
    let truth = probe.truths[0].as_ref().unwrap();
    let values = semival::games::TableGame::random(10, 6, 0.0, 1.0).unwrap();
    let (lo, hi) = values
        .values()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
    let mut c = config(base_game, &["base", "adalina"]);
    c.shift = 10.0 * (hi - lo) - truth.gamma_star;
    c.budget_per_player = Some(100);
    let out = run_experiment(&c).unwrap();
    let err = |e: &str| out.summary.iter().find(|s| s.estimator == e).unwrap().rel_err_mean.unwrap();
    assert!(err("adalina") <= err("base"));
    let gamma_star = Prepared::new(&c).unwrap().truths[0].as_ref().unwrap().gamma_star;
    assert!((gamma_star - 10.0 * (hi - lo)).abs() < 1e-9);
    let gh = out.records.iter().find(|r| r.estimator == "adalina").unwrap().gamma_hat.unwrap();
    assert!((gh - gamma_star).abs() < 0.1 * gamma_star);
}

#[test]
fn constant_game_sweep_bottoms_out_at_the_constant() {
    let mut c = config("const:8,2.5", &[]);
    c.kind = ExperimentKind::SweepGamma;
    c.budget = Some(64);
    c.trials = 3;
    let rep = sweep_gamma(&c, None).unwrap();
    let best = rep.rows.iter().find(|r| r.argmin).unwrap();
    assert_eq!(best.gamma, 2.5);
    // Only ground-truth rounding remains.
    assert!(best.mse < 1e-24, "{}", best.mse);
    assert!(rep.rows.iter().filter(|r| !r.argmin).all(|r| r.mse > 1e-6));
}

#[test]
fn sweep_curve_matches_parabola() {
    let mut c = config("randtable:9,12", &[]);
    c.budget = Some(202);
    c.trials = 3000;
    let rep = sweep_gamma(&c, None).unwrap();
    assert_eq!(rep.rows.len(), 11);
    for r in &rep.rows {
        let z = (r.mse - r.theory_mse) / r.mse_se;
        assert!(z.abs() <= 3.5, "gamma {}: z {z}", r.gamma);
    }
    assert!(rep.verdicts[0].4);
}

#[test]
fn paired_wins_on_positive_game_at_every_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = config(&voting_file(&dir), &["base"]);
    c.shift = 1.0;
    c.budget_per_player = Some(50);
    c.trials = 200;
    c.checkpoints = vec![0.1, 0.25, 0.5, 1.0];
    let rep = compare_paired(&c).unwrap();
    assert_eq!(rep.rows.len(), 4);
    for r in &rep.rows {
        assert_eq!(r.cross_sign, 1);
        assert!(r.paired_mse < r.unpaired_mse, "{r:?}");
        assert_eq!(r.ordering_matches, Some(true));
    }
}

#[test]
fn paired_requires_symmetry() {
    let mut c = config("randtable:6,1", &["base"]);
    c.semivalue = OneOrMany::One("banzhaf:0.7".into());
    assert!(compare_paired(&c).is_err());
}

#[test]
fn bounds_grid_and_range() {
    let mut c = config("corner:8,1,2", &["base"]);
    c.samples = Some(64);
    c.trials = 2000;
    let rep = verify_bounds(&c, None).unwrap();
    assert_eq!(rep.rows.len(), 10);
    assert_eq!(rep.violations(), 0);
    // Near the vacuous region the bound exceeds any frequency.
    let smallest = verify_bounds(&c, Some(&[1e-3])).unwrap();
    assert!(smallest.rows[0].bound > 1.9 && !smallest.rows[0].violation);
    let max = rep.rows.last().unwrap().epsilon;
    assert!(matches!(
        verify_bounds(&c, Some(&[max * 1.5])),
        Err(Error::OutOfRange { .. })
    ));
    assert!(concentration_bound(64, max * 1.01, 1.0, 3.0 / max).is_err());
    c.estimators = vec!["adalina".into()];
    assert!(verify_bounds(&c, None).is_err());
}

#[test]
fn mse_table_within_noise() {
    let mut c = config("randtable:8,40", &["base", "msr", "shapiq", "kernel:leverage", "base+paired"]);
    c.samples = Some(32);
    c.trials = 4000;
    let rep = verify_mse(&c).unwrap();
    assert_eq!(rep.rows.len(), 5);
    for r in &rep.rows {
        assert!(r.z_score.unwrap().abs() <= 4.0, "{r:?}");
    }
    let mut a = config("randtable:8,40", &["ame:0.4"]);
    a.semivalue = OneOrMany::One("banzhaf:0.4".into());
    a.samples = Some(32);
    a.trials = 4000;
    let rep = verify_mse(&a).unwrap();
    assert!(rep.rows[0].z_score.unwrap().abs() <= 4.0, "{:?}", rep.rows[0]);
}

#[test]
fn ground_truth_limit() {
    let c = config("corner:23,1,0", &["base"]);
    assert!(matches!(run_experiment(&c), Err(Error::TooLarge { .. })));
    let mut c = config("corner:40,1,0", &["base", "msr"]);
    c.truth = false;
    c.budget = Some(500);
    c.trials = 2;
    let out = run_experiment(&c).unwrap();
    assert!(out.records.iter().all(|r| r.rel_err.is_none() && r.theory_mse.is_none()));
    assert_eq!(out.phi.len(), 2 * 2 * 40);
}

#[test]
fn config_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("exp.toml");
    std::fs::write(
        &path,
        "[[experiment]]\nname = \"a\"\ngame = \"corner:6,1,1\"\nestimators = [\"base\", \"shapiq+paired\"]\nbudget = 39\ntrials = 2\noutput = \"a.csv\"\n",
    )
    .unwrap();
    let cfgs = ExperimentConfig::load(&path).unwrap();
    assert_eq!(cfgs[0].output, Some(PathBuf::from("a.csv")));
    let out = run_experiment(&cfgs[0]).unwrap();
    let csv = dir.path().join("a.csv");
    out.write(&csv).unwrap();
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().next().unwrap(), CSV_HEADER);
    assert_eq!(text.lines().count(), 1 + 2 * 2);
    let meta = std::fs::read_to_string(dir.path().join("a.meta.json")).unwrap();
    assert!(meta.contains("odd sample count 37"));
}

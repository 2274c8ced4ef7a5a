use std::path::PathBuf;

use dgvc::experiment::{parse_results_csv, write_outputs, Status, RESULTS_HEADER, SUMMARY_HEADER};
use dgvc::{run_sweep, synthesize_test_image, Algorithm, Error, ExperimentSpec, ImageKind};

fn scratch_dir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("dgvc-pipeline-{name}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn one_trial_per_rate_gives_one_row_per_rate() {
    let spec = ExperimentSpec::parse(
        "image = model-matched\nm = 1024\nrates = 2, 3, 4, 5, 6\ntrials = 1\nalgorithms = dgvc-mdl\nmax_iter = 3\n",
    )
    .unwrap();
    let rows = run_sweep(&spec).unwrap();
    assert_eq!(rows.len(), 5);
    assert!(rows.iter().all(|r| r.algorithm == Algorithm::DgvcMdl && r.status == Status::Ok));
    assert!(rows.windows(2).all(|w| w[0].rate < w[1].rate));
}

#[test]
fn outputs_round_trip_through_csv() {
    let dir = scratch_dir("outputs");
    let spec = ExperimentSpec {
        rows: 8,
        cols: 8,
        rates: vec![2.0, 3.0],
        trials: 3,
        max_iter: 20,
        ..ExperimentSpec::default()
    };
    let rows = run_sweep(&spec).unwrap();
    assert_eq!(rows.len(), 2 * 3 * 3);
    let files = write_outputs(&rows, &dir).unwrap();

    let results = std::fs::read_to_string(&files.results).unwrap();
    assert_eq!(results.lines().next().unwrap(), RESULTS_HEADER);
    let parsed = parse_results_csv(&results).unwrap();
    assert_eq!(parsed.len(), rows.len());
    for (a, b) in parsed.iter().zip(&rows) {
        assert_eq!((a.rate, a.trial, a.algorithm, a.iterations, a.status), (b.rate, b.trial, b.algorithm, b.iterations, b.status));
        assert!((a.snr_db - b.snr_db).abs() <= 5e-7);
    }

    let summary = std::fs::read_to_string(&files.summary).unwrap();
    assert_eq!(summary.lines().next().unwrap(), SUMMARY_HEADER);
    assert_eq!(summary.lines().count(), 1 + 2 * 3);

    let plot = std::fs::read_to_string(&files.plot).unwrap();
    let points = plot.lines().filter(|l| !l.is_empty() && !l.starts_with('#')).count();
    assert_eq!(points, 2 * 3);
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn pgm_source_is_analyzed() {
    let dir = scratch_dir("pgm");
    let path = dir.join("gradient.pgm");
    synthesize_test_image(ImageKind::GradientEdges, 16, 16, 5).unwrap().write_pgm(&path).unwrap();
    let text = format!("image = {}\nrows = 16\ncols = 16\nrates = 3\ntrials = 2\nalgorithms = biht, vb-ablation\nmax_iter = 30\n", path.display());
    let rows = run_sweep(&ExperimentSpec::parse(&text).unwrap()).unwrap();
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|r| r.status == Status::Ok && r.snr_db.is_finite()));

    let missing = ExperimentSpec::parse(&format!("image = {}\nrows = 16\ncols = 16\n", dir.join("absent.pgm").display())).unwrap();
    assert!(matches!(run_sweep(&missing), Err(Error::Io(_))));
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn adding_a_rate_leaves_other_cells_unchanged() {
    let base = ExperimentSpec {
        rows: 8,
        cols: 8,
        rates: vec![3.0],
        trials: 2,
        max_iter: 15,
        algorithms: vec![Algorithm::VbAblation, Algorithm::Biht],
        ..ExperimentSpec::default()
    };
    let alone = run_sweep(&base).unwrap();
    let wider = run_sweep(&ExperimentSpec { rates: vec![2.0, 3.0], ..base.clone() }).unwrap();
    let shared: Vec<_> = wider.iter().filter(|r| r.rate == 3.0).collect();
    assert_eq!(shared.len(), alone.len());
    for (a, b) in alone.iter().zip(shared) {
        assert_eq!((a.trial, a.algorithm, a.snr_db, a.iterations), (b.trial, b.algorithm, b.snr_db, b.iterations));
    }
}

#[test]
fn invalid_specs_are_rejected() {
    assert!(ExperimentSpec::parse("rates = 0.5\n").and_then(|s| s.validate()).is_err());
    assert!(ExperimentSpec::parse("trials = 0\n").and_then(|s| s.validate()).is_err());
    assert!(ExperimentSpec::parse("algorithms = magic\n").is_err());
    assert!(ExperimentSpec::parse("m = 1000\n").is_err());
}

#[test]
fn shipped_spec_files_parse() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../specs");
    let mut count = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "spec") {
            let spec = ExperimentSpec::from_file(&path).unwrap();
            assert!(spec.m() >= 64, "{}", path.display());
            count += 1;
        }
    }
    assert!(count >= 3);
}

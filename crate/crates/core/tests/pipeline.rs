use std::collections::HashSet;

use cpac_core::data::parse_csv;
use cpac_core::pipeline::{
    export_augmented_csv, export_latent, prepare, run_experiment, train_oversampler, Oversampler,
};
use cpac_core::{ExperimentConfig, Matrix, Method};

fn small(method: Method, dir: &std::path::Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.synthetic.rows = 3000;
    cfg.synthetic.minority_fraction = 0.02;
    cfg.method = method;
    cfg.vaegan_epochs = 10;
    cfg.joint_epochs = 3;
    cfg.clf_epochs = 5;
    cfg.output_dir = dir.to_path_buf();
    cfg
}

fn bits(row: &[f64]) -> Vec<u64> {
    row.iter().map(|v| v.to_bits()).collect()
}

#[test]
fn no_oversampling_gives_a_single_cell() {
    let dir = tempfile::tempdir().unwrap();
    let r = run_experiment(&small(Method::None, dir.path())).unwrap();
    assert_eq!(r.cells.len(), 1);
    assert_eq!(r.cells[0].count, 0);
    assert!(r.silhouette.is_none());
    for f in ["normalizer.json", "classifier_0.json", "report.json", "metrics.json"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
}

#[test]
fn every_count_gets_a_cell() {
    let dir = tempfile::tempdir().unwrap();
    let r = run_experiment(&small(Method::Smote, dir.path())).unwrap();
    assert_eq!(r.cells.iter().map(|c| c.count).collect::<Vec<_>>(), vec![50, 75, 100]);
    assert_eq!(r.train_counts.0 + r.train_counts.1, 2100);
}

#[test]
fn reruns_write_identical_metrics() {
    for method in [Method::Smote, Method::VaeGanCpac] {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        run_experiment(&small(method, a.path())).unwrap();
        run_experiment(&small(method, b.path())).unwrap();
        let read = |d: &tempfile::TempDir| std::fs::read(d.path().join("metrics.json")).unwrap();
        assert_eq!(read(&a), read(&b), "{method}");
    }
}

#[test]
fn config_is_echoed_without_the_output_dir() {
    let dir = tempfile::tempdir().unwrap();
    run_experiment(&small(Method::Smote, dir.path())).unwrap();
    let text = std::fs::read_to_string(dir.path().join("metrics.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["config"]["method"], "smote");
    assert_eq!(v["config"]["synthetic"]["rows"], 3000);
    assert!(v["config"].get("output_dir").is_none());
    assert!(v.get("wall_clock_secs").is_none());
}

#[test]
fn oversampler_pool_holds_only_training_frauds() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(Method::Smote, dir.path());
    let prep = prepare(&cfg).unwrap();
    let train: HashSet<usize> = prep.split.train_idx.iter().copied().collect();
    assert!(prep.split.val_idx.iter().all(|i| !train.contains(i)));

    let Oversampler::Smote { pool, .. } = train_oversampler(&cfg, &prep).unwrap() else {
        panic!("expected smote");
    };
    let expected: HashSet<Vec<u64>> = prep.train.minority_rows().iter_rows().map(bits).collect();
    let val: HashSet<Vec<u64>> = prep.val.features.iter_rows().map(bits).collect();
    assert_eq!(pool.rows(), expected.len());
    for row in pool.iter_rows() {
        assert!(expected.contains(&bits(row)));
        assert!(!val.contains(&bits(row)));
    }
}

/// Distance from `s` to the segment between `a` and `b`.
fn segment_residual(s: &[f64], a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| y - x).collect();
    let len2: f64 = d.iter().map(|v| v * v).sum();
    let t = if len2 == 0.0 {
        0.0
    } else {
        (s.iter().zip(a).zip(&d).map(|((si, ai), di)| (si - ai) * di).sum::<f64>() / len2).clamp(0.0, 1.0)
    };
    s.iter()
        .zip(a)
        .zip(&d)
        .map(|((si, ai), di)| (si - ai - t * di).powi(2))
        .sum::<f64>()
        .sqrt()
}

#[test]
fn exported_smote_rows_survive_denormalization() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(Method::Smote, dir.path());
    let prep = prepare(&cfg).unwrap();
    let over = train_oversampler(&cfg, &prep).unwrap();
    let path = dir.path().join("aug.csv");
    let n_train = prep.split.train_idx.len();
    assert_eq!(export_augmented_csv(&path, &prep, &over, 100, 3).unwrap(), n_train + 100);

    let text = std::fs::read_to_string(&path).unwrap();
    let header = text.lines().next().unwrap();
    assert!(header.ends_with("Class,is_synthetic"), "{header}");
    let mut rdr = csv::Reader::from_path(&path).unwrap();
    let frauds = prep.raw.subset(&prep.split.train_idx).minority_rows();
    let mut synthetic = 0;
    for rec in rdr.records() {
        let rec = rec.unwrap();
        let n = rec.len();
        if &rec[n - 1] != "1" {
            continue;
        }
        synthetic += 1;
        assert_eq!(&rec[n - 2], "1");
        let row: Vec<f64> = (0..n - 2).map(|i| rec[i].parse().unwrap()).collect();
        let scale = row.iter().map(|v| v.abs()).fold(1.0, f64::max);
        let best = (0..frauds.rows())
            .flat_map(|i| (0..frauds.rows()).map(move |j| (i, j)))
            .map(|(i, j)| segment_residual(&row, frauds.row(i), frauds.row(j)))
            .fold(f64::INFINITY, f64::min);
        assert!(best < 1e-9 * scale, "residual {best}");
    }
    assert_eq!(synthetic, 100);

    let empty = dir.path().join("plain.csv");
    assert_eq!(export_augmented_csv(&empty, &prep, &over, 0, 3).unwrap(), n_train);
    let back = parse_csv(&empty).unwrap();
    assert_eq!(back.len(), n_train);
}

#[test]
fn latent_export_has_one_column_per_component() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(Method::VaeGanCpac, dir.path());
    let prep = prepare(&cfg).unwrap();
    let over = train_oversampler(&cfg, &prep).unwrap();
    let model = over.encoder().unwrap();
    for dims in [2, 3] {
        let path = dir.path().join(format!("latent{dims}.csv"));
        let coords: Matrix = export_latent(&path, model, &prep.val, dims).unwrap();
        assert_eq!(coords.shape(), (prep.val.len(), dims));
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        let expected: Vec<String> = (1..=dims).map(|i| format!("pc{i}")).chain(["label".into()]).collect();
        assert_eq!(lines.next().unwrap(), expected.join(","));
        assert_eq!(lines.count(), prep.val.len());
    }
}

#[test]
fn failed_runs_leave_no_files_behind() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(Method::Smote, dir.path());
    cfg.data = Some(dir.path().join("missing.csv"));
    let err = run_experiment(&cfg).unwrap_err();
    assert!(err.to_string().contains("ingest"), "{err}");
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
}

use std::fs;
use std::path::Path;

use dflsim_core::learner::{IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC};
use dflsim_core::simulator::{run_experiment, DatasetKind, DatasetSpec, ExperimentConfig, TopologyKind, TopologySpec};

// Two 2x2 "digits": class 0 lights the left column, class 1 the right.
fn write_idx(dir: &Path, stem: &str, count: u32) {
    let mut images = Vec::new();
    let mut labels = Vec::new();
    for v in [IDX_IMAGES_MAGIC, count, 2, 2] {
        images.extend(v.to_be_bytes());
    }
    for v in [IDX_LABELS_MAGIC, count] {
        labels.extend(v.to_be_bytes());
    }
    for i in 0..count {
        let class = (i % 2) as u8;
        let jitter = (i % 7) as u8 * 5;
        let px = if class == 0 { [255 - jitter, 0, 250 - jitter, 10] } else { [0, 255 - jitter, 10, 250 - jitter] };
        images.extend(px);
        labels.push(class);
    }
    fs::write(dir.join(format!("{stem}-images-idx3-ubyte")), images).unwrap();
    fs::write(dir.join(format!("{stem}-labels-idx1-ubyte")), labels).unwrap();
}

#[test]
fn idx_files_drive_a_run() {
    let dir = tempfile::tempdir().unwrap();
    write_idx(dir.path(), "train", 400);
    write_idx(dir.path(), "t10k", 100);
    let cfg = ExperimentConfig {
        rounds: 5,
        master_seed: 2,
        topology: TopologySpec { kind: TopologyKind::Complete, n: 4, ..Default::default() },
        training: dflsim_core::learner::TrainingConfig { samples_per_node: 100, ..Default::default() },
        dataset: DatasetSpec {
            kind: DatasetKind::Mnist,
            train_images: dir.path().join("train-images-idx3-ubyte"),
            train_labels: dir.path().join("train-labels-idx1-ubyte"),
            test_images: dir.path().join("t10k-images-idx3-ubyte"),
            test_labels: dir.path().join("t10k-labels-idx1-ubyte"),
            ..Default::default()
        },
        ..Default::default()
    };
    let metrics = run_experiment(&cfg, 2).unwrap();
    assert_eq!(metrics.len(), 5);
    assert_eq!(metrics[4].honest_mean_accuracy, 1.0);
}

#[test]
fn missing_idx_files_are_a_runtime_error() {
    let cfg = ExperimentConfig {
        dataset: DatasetSpec { kind: DatasetKind::Mnist, train_images: "/nonexistent/x".into(), ..Default::default() },
        ..Default::default()
    };
    let err = run_experiment(&cfg, 1).unwrap_err();
    assert!(!err.is_config_error());
}

mod common;

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use common::*;
use facedim::detector::mock::{MockDetector, MockReply};
use facedim::eval::{read_summary, summary_path};
use facedim::gallery::load_gallery;
use facedim::ingest::{read_image, write_embeddings, write_image};
use facedim::{EmbeddingSet, ImageTensor};

fn facedim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_facedim"))
        .args(args)
        .env_remove("FACEDIM_DETECTOR_TOKEN")
        .output()
        .unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn shots_dir(root: &Path, identities: usize, per_identity: usize) -> PathBuf {
    let dir = root.join("shots");
    for k in 0..identities {
        let id_dir = dir.join(format!("cow{k}"));
        std::fs::create_dir_all(&id_dir).unwrap();
        for j in 0..per_identity {
            let px: Vec<f32> = (0..6 * 5 * 3)
                .map(|i| ((i * 7 + j * 13 + k * 29) % 256) as f32 / 255.0)
                .collect();
            let img = ImageTensor::new(6, 5, 3, px).unwrap();
            write_image(&img, id_dir.join(format!("shot{j}.png"))).unwrap();
        }
    }
    dir
}

#[test]
fn augment_expands_ten_shots_by_hundred() {
    let tmp = tempfile::tempdir().unwrap();
    let shots = shots_dir(tmp.path(), 2, 5);
    let out = tmp.path().join("aug");
    let o = facedim(&["augment", "--images", s(&shots), "--out", s(&out), "--n-augment", "100", "--seed", "7"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let count: usize = ["cow0", "cow1"]
        .iter()
        .map(|id| std::fs::read_dir(out.join(id)).unwrap().count())
        .sum();
    assert_eq!(count, 1000);
    let manifest = std::fs::read_to_string(out.join("manifest.csv")).unwrap();
    assert_eq!(manifest.lines().count(), 1001);
    assert!(manifest.starts_with("source,output,scale,angle_deg"));

    let out2 = tmp.path().join("aug2");
    let o = facedim(&["augment", "--images", s(&shots), "--out", s(&out2), "--n-augment", "100", "--seed", "7"]);
    assert!(o.status.success());
    assert_eq!(std::fs::read(out2.join("manifest.csv")).unwrap(), manifest.as_bytes());
    assert_eq!(
        std::fs::read(out.join("cow1/shot3_042.png")).unwrap(),
        std::fs::read(out2.join("cow1/shot3_042.png")).unwrap()
    );
}

#[test]
fn augment_with_identity_ranges_copies_bytes() {
    let tmp = tempfile::tempdir().unwrap();
    let shots = shots_dir(tmp.path(), 1, 2);
    let out = tmp.path().join("aug");
    let o = facedim(&[
        "augment", "--images", s(&shots), "--out", s(&out), "--n-augment", "1",
        "--scale-range", "1:1", "--angle-range", "0:0", "--translate-range", "0:0",
        "--color-range", "0:0", "--contrast-range", "1:1",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for j in 0..2 {
        assert_eq!(
            std::fs::read(shots.join(format!("cow0/shot{j}.png"))).unwrap(),
            std::fs::read(out.join(format!("cow0/shot{j}_000.png"))).unwrap()
        );
    }
}

#[test]
fn augment_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let empty = tmp.path().join("empty");
    std::fs::create_dir_all(&empty).unwrap();
    let o = facedim(&["augment", "--images", s(&empty), "--out", s(&tmp.path().join("o"))]);
    assert_eq!(o.status.code(), Some(2));
    let shots = shots_dir(tmp.path(), 1, 1);
    let o = facedim(&["augment", "--images", s(&shots), "--out", s(&tmp.path().join("o")), "--scale-range", "2:1"]);
    assert_eq!(o.status.code(), Some(2));
    let o = facedim(&["augment", "--images", s(&shots)]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn augment_crops_with_detector() {
    let mock = MockDetector::start(vec![MockReply::ok(
        r#"[{"x":1,"y":1,"width":3,"height":2,"confidence":0.9}]"#,
    )])
    .unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let shots = shots_dir(tmp.path(), 1, 1);
    let out = tmp.path().join("aug");
    let o = facedim(&[
        "augment", "--images", s(&shots), "--out", s(&out), "--n-augment", "2",
        "--detector-url", &mock.url(), "--min-confidence", "0.5",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let img = read_image(out.join("cow0/shot0_001.png")).unwrap();
    assert_eq!(img.shape(), (2, 3, 3));

    // no detections: whole image is kept
    let mock = MockDetector::start(vec![MockReply::ok("[]")]).unwrap();
    let out = tmp.path().join("aug_empty");
    let o = facedim(&[
        "augment", "--images", s(&shots), "--out", s(&out), "--n-augment", "1",
        "--detector-url", &mock.url(),
    ]);
    assert!(o.status.success());
    assert_eq!(read_image(out.join("cow0/shot0_000.png")).unwrap().shape(), (6, 5, 3));
}

fn write_labeled(path: &Path, rows: &[Vec<f64>], labels: &[String]) {
    let set = set_of(rows, "synthetic").with_labels(labels.to_vec()).unwrap();
    write_embeddings(&set, path).unwrap();
}

#[test]
fn enroll_and_verify() {
    let tmp = tempfile::tempdir().unwrap();
    let emb = tmp.path().join("train.fedm1");
    write_labeled(&emb, &[vec![0.0, 1.0], vec![2.0, 3.0]], &["a".into(), "a".into()]);
    let gallery = tmp.path().join("g.ftpl");
    let o = facedim(&["enroll", "--embeddings", s(&emb), "--gallery", s(&gallery)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout(&o), "a,2\n");
    let g = load_gallery(&gallery).unwrap();
    assert_eq!(g.len(), 1);
    assert_eq!(g.template("a").unwrap().epsilon(), 0.01);

    // probe at the mean (1, 2) is accepted at distance 0
    let probe = tmp.path().join("probe.fedm1");
    write_embeddings(&EmbeddingSet::from_rows(&[[1.0, 2.0]], "synthetic").unwrap(), &probe).unwrap();
    let o = facedim(&["verify", "--gallery", s(&gallery), "--probes", s(&probe), "--identity", "a", "--threshold", "0"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "a,0,true\n");

    let far = tmp.path().join("far.fedm1");
    write_embeddings(&EmbeddingSet::from_rows(&[[50.0, -50.0]], "synthetic").unwrap(), &far).unwrap();
    let o = facedim(&["verify", "--gallery", s(&gallery), "--probes", s(&far), "--identity", "a", "--threshold", "3"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).ends_with(",false\n"));

    let o = facedim(&["verify", "--gallery", s(&gallery), "--probes", s(&probe), "--identity", "zz", "--threshold", "3"]);
    assert_eq!(o.status.code(), Some(2));
    let o = facedim(&["verify", "--gallery", s(&tmp.path().join("missing")), "--probes", s(&probe), "--identity", "a", "--threshold", "3"]);
    assert_eq!(o.status.code(), Some(2));
    let o = facedim(&["verify", "--gallery", s(&gallery), "--probes", s(&probe), "--identity", "a"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn enroll_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let unlabeled = tmp.path().join("u.fedm1");
    write_embeddings(&EmbeddingSet::from_rows(&[[0.0], [1.0]], "m").unwrap(), &unlabeled).unwrap();
    let o = facedim(&["enroll", "--embeddings", s(&unlabeled), "--gallery", s(&tmp.path().join("g"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!tmp.path().join("g").exists());

    let ragged = tmp.path().join("r.csv");
    std::fs::write(&ragged, "e0,e1,label\n1,2,a\n3,a\n").unwrap();
    let o = facedim(&["enroll", "--embeddings", s(&ragged), "--gallery", s(&tmp.path().join("g"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("format error"));
}

#[test]
fn enroll_from_csv_and_identify() {
    let tmp = tempfile::tempdir().unwrap();
    let csv = tmp.path().join("train.csv");
    std::fs::write(&csv, "e0,e1,label\n0,0,a\n1,1,a\n0,1,a\n10,10,b\n11,11,b\n10,11,b\n").unwrap();
    let gallery = tmp.path().join("g.ftpl");
    let o = facedim(&["enroll", "--embeddings", s(&csv), "--gallery", s(&gallery), "--model-id", "m"]);
    assert!(o.status.success());
    let probe = tmp.path().join("p.csv");
    std::fs::write(&probe, "10.2,10.5\n").unwrap();
    let o = facedim(&["identify", "--gallery", s(&gallery), "--probes", s(&probe), "--top", "1"]);
    assert!(o.status.success());
    assert!(stdout(&o).starts_with("0,b,"));
    assert_eq!(stdout(&o).lines().count(), 1);
}

fn enroll_population(tmp: &Path, separation: f64, seed: u64) -> (PathBuf, PathBuf) {
    let pop = synthetic_population(seed, 20, 16, 250, separation);
    let (train, test) = pop.split(200, "synthetic");
    let train_path = tmp.join("train.fedm1");
    let test_path = tmp.join("test.fedm1");
    write_embeddings(&train, &train_path).unwrap();
    write_embeddings(&test, &test_path).unwrap();
    let gallery = tmp.join("g.ftpl");
    let o = facedim(&["enroll", "--embeddings", s(&train_path), "--gallery", s(&gallery)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout(&o).lines().count(), 20);
    (gallery, test_path)
}

#[test]
fn evaluate_then_verify_separable_population() {
    let tmp = tempfile::tempdir().unwrap();
    let (gallery, probes) = enroll_population(tmp.path(), 10.0, 21);
    let report = tmp.path().join("report.csv");
    let o = facedim(&["evaluate", "--gallery", s(&gallery), "--probes", s(&probes), "--report", s(&report)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let line = stdout(&o);
    assert!(line.starts_with("EER="), "{line}");
    let summary = read_summary(summary_path(&report)).unwrap();
    assert!(summary.eer <= 0.01, "{summary:?}");
    assert_eq!(summary.eer, (summary.far + summary.frr) / 2.0);
    assert_eq!(line.trim(), format!("EER={} at threshold={}", summary.eer, summary.threshold));
    assert_eq!((summary.n_genuine, summary.n_impostor), (1000, 19_000));

    // every genuine accepted, every impostor rejected at that threshold
    let test = facedim::ingest::read_embeddings(&probes).unwrap();
    let threshold = summary.threshold.to_string();
    let mut wrong = 0;
    for id in ["id00", "id07", "id19"] {
        let o = facedim(&["verify", "--gallery", s(&gallery), "--probes", s(&probes), "--identity", id, "--threshold", &threshold]);
        assert_eq!(o.status.code(), Some(1));
        for (line, label) in stdout(&o).lines().zip(test.source_labels().unwrap()) {
            let accepted = line.ends_with("true");
            wrong += (accepted != (label == id)) as usize;
        }
    }
    assert_eq!(wrong, 0);
}

#[test]
fn evaluate_same_distribution_is_chance() {
    let tmp = tempfile::tempdir().unwrap();
    let (gallery, probes) = enroll_population(tmp.path(), 0.0, 22);
    let report = tmp.path().join("r.csv");
    let o = facedim(&["evaluate", "--gallery", s(&gallery), "--probes", s(&probes), "--report", s(&report)]);
    assert!(o.status.success());
    let eer = read_summary(summary_path(&report)).unwrap().eer;
    assert!((eer - 0.5).abs() <= 0.05, "{eer}");
}

#[test]
fn evaluate_single_identity_fails() {
    let tmp = tempfile::tempdir().unwrap();
    let emb = tmp.path().join("t.fedm1");
    write_labeled(&emb, &[vec![0.0], vec![1.0], vec![0.5]], &["a".into(), "a".into(), "a".into()]);
    let gallery = tmp.path().join("g.ftpl");
    assert!(facedim(&["enroll", "--embeddings", s(&emb), "--gallery", s(&gallery)]).status.success());
    let o = facedim(&["evaluate", "--gallery", s(&gallery), "--probes", s(&emb), "--report", s(&tmp.path().join("r.csv"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("insufficient scores"));
}

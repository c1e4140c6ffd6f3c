use std::collections::BTreeSet;
use std::path::Path;
use std::process::{Command, Output};

use mmdl::eval::EvalReport;
use mmdl::synth::read_dataset;
use mmdl::train::read_log;

fn mmdl(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mmdl"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

const SMALL: &str = r#"{
  "layer_sizes": [32, 24, 16],
  "n": 16,
  "q": 16,
  "epochs": 3,
  "pretrain_epochs": 2,
  "synth": {"identities": 10, "test_identities": 6, "samples_per_identity_per_domain": 4},
  "paths": {"checkpoint": "m.ckpt", "log": "m.jsonl"}
}"#;

#[test]
fn gen_data_is_deterministic_and_disjoint() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    for (out, seed) in [("a", "3"), ("b", "3"), ("c", "4")] {
        let o = mmdl(p, &["gen-data", "--seed", seed, "--out", out]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    let read = |f: &str| std::fs::read(p.join(f)).unwrap();
    assert_eq!(read("a/train.csv"), read("b/train.csv"));
    assert_eq!(read("a/test.csv"), read("b/test.csv"));
    assert_ne!(read("a/train.csv"), read("c/train.csv"));

    let train = read_dataset(p.join("a/train.csv")).unwrap();
    let test = read_dataset(p.join("a/test.csv")).unwrap();
    // defaults: 40 + 20 identities, 8 samples per identity and domain
    assert_eq!(train.len(), 40 * 2 * 8);
    assert_eq!(test.len(), 20 * 2 * 8);
    let a: BTreeSet<usize> = train.identity_set().into_iter().collect();
    let b: BTreeSet<usize> = test.identity_set().into_iter().collect();
    assert!(a.is_disjoint(&b));
}

#[test]
fn train_then_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    std::fs::write(p.join("c.json"), SMALL).unwrap();

    let o = mmdl(p, &["train", "--config", "c.json"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let log = read_log(p.join("m.jsonl")).unwrap();
    assert!(!log.is_empty());
    let text = std::fs::read_to_string(p.join("m.jsonl")).unwrap();
    for line in text.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        for key in ["epoch", "batch", "l_qml", "l_haml", "l_mml", "lr"] {
            assert!(v.get(key).is_some(), "{key} missing from {line}");
        }
    }

    for out in ["r1.json", "r2.json"] {
        let o = mmdl(p, &["eval", "--config", "c.json", "--out", out]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    let r1 = std::fs::read(p.join("r1.json")).unwrap();
    assert_eq!(r1, std::fs::read(p.join("r2.json")).unwrap());
    let report = EvalReport::read_json(p.join("r1.json")).unwrap();
    assert!((0.0..=1.0).contains(&report.rank1));
    assert_eq!(report.vr_at_far.len(), 3);

    // same config and seed: identical checkpoint bytes
    let first = std::fs::read(p.join("m.ckpt")).unwrap();
    assert_eq!(code(&mmdl(p, &["train", "--config", "c.json"])), 0);
    assert_eq!(first, std::fs::read(p.join("m.ckpt")).unwrap());
    assert_eq!(code(&mmdl(p, &["train", "--config", "c.json", "--seed", "9", "--out", "s9.ckpt"])), 0);
    assert_ne!(first, std::fs::read(p.join("s9.ckpt")).unwrap());

    // the checkpoint holds q = 16; asking for 8 is a data error
    std::fs::write(p.join("q8.json"), SMALL.replace("\"q\": 16", "\"q\": 8")).unwrap();
    let o = mmdl(p, &["eval", "--config", "q8.json"]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("shape mismatch"));
}

#[test]
fn zero_epochs_still_write_a_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    std::fs::write(p.join("c.json"), SMALL.replace("\"epochs\": 3", "\"epochs\": 0")).unwrap();
    let o = mmdl(p, &["train", "--config", "c.json"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(p.join("m.ckpt").exists());
    assert!(read_log(p.join("m.jsonl")).unwrap().is_empty());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let write = |name: &str, text: &str| std::fs::write(p.join(name), text).unwrap();

    write("typo.json", r#"{"epoch": 3}"#);
    assert_eq!(code(&mmdl(p, &["train", "--config", "typo.json"])), 2);
    write("nested.json", r#"{"toggles": {"use_decor": false}}"#);
    assert_eq!(code(&mmdl(p, &["train", "--config", "nested.json"])), 2);
    write("q.json", r#"{"n": 8, "q": 9}"#);
    assert_eq!(code(&mmdl(p, &["train", "--config", "q.json"])), 2);
    assert_eq!(code(&mmdl(p, &["train", "--config", "absent.json"])), 2);

    write("nodata.json", r#"{"paths": {"dataset": "missing.csv"}}"#);
    assert_eq!(code(&mmdl(p, &["train", "--config", "nodata.json"])), 3);
    write("bad.csv", "identity,domain,f0\n0,NIR,0.5\n1,UV,0.1\n");
    write("badcsv.json", r#"{"paths": {"dataset": "bad.csv"}}"#);
    assert_eq!(code(&mmdl(p, &["train", "--config", "badcsv.json"])), 3);

    // logits at scale 1e308 overflow once the weighted sum is formed
    let huge = SMALL.replace("\"epochs\": 3", "\"epochs\": 1, \"haml\": {\"scale\": 1e308}, \"mml\": {\"lambda2\": 10}");
    write("huge.json", &huge);
    let o = mmdl(p, &["train", "--config", "huge.json"]);
    assert_eq!(code(&o), 4, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("non-finite"));
}

#[test]
fn ablate_writes_four_rows() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    std::fs::write(p.join("c.json"), SMALL.replace("\"epochs\": 3", "\"epochs\": 2, \"folds\": 2")).unwrap();
    let o = mmdl(p, &["ablate", "--config", "c.json", "--out", "t.csv"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let mut rdr = csv::Reader::from_path(p.join("t.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    let names: Vec<&str> = rows.iter().map(|r| &r[0]).collect();
    assert_eq!(names, ["baseline", "+haml", "+haml+qml", "+haml+qml+decorr"]);
    // every row scored on the same test folds
    assert!(rows.iter().all(|r| r[8] == rows[0][8]));
}

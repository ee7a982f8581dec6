use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn lrpd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lrpd"))
        .args(args)
        .output()
        .expect("spawn lrpd")
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap_or(-1)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Corpus {
    _tmp: tempfile::TempDir,
    root: PathBuf,
    out: PathBuf,
}

impl Corpus {
    fn new(frames: usize) -> Self {
        let tmp = tempfile::tempdir().unwrap();
        let root = tmp.path().join("data");
        let out = tmp.path().join("out");
        let r = lrpd(&["--root", s(&root), "--seed", "5", "synth", "--frames", &frames.to_string()]);
        assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stderr));
        Self { _tmp: tmp, root, out }
    }

    fn run(&self, extra: &[&str]) -> Output {
        let mut args = vec!["--root", s(&self.root), "--out", s(&self.out), "--seed", "5"];
        args.extend_from_slice(extra);
        lrpd(&args)
    }

    fn json(&self, rel: &str) -> Value {
        serde_json::from_str(&fs::read_to_string(self.out.join(rel)).unwrap()).unwrap()
    }
}

fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    for e in walk(dir) {
        out.insert(e.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&e).unwrap());
    }
    out
}

fn walk(dir: &Path) -> Vec<PathBuf> {
    let mut files = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                files.push(p);
            }
        }
    }
    files
}

fn ap(report: &Value, difficulty: &str, range: &str) -> Value {
    report["cells"]
        .as_array()
        .unwrap()
        .iter()
        .find(|c| c["difficulty"] == difficulty && c["range"] == range)
        .unwrap()["ap"]
        .clone()
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(code(&lrpd(&["frobnicate"])), 1);
    assert_eq!(code(&lrpd(&["--jobs", "many", "stats"])), 1);
    assert_eq!(code(&lrpd(&["--help"])), 0);
    // no dataset root configured
    assert_eq!(code(&lrpd(&["propose"])), 1);
    assert_eq!(code(&lrpd(&["--root", "/nonexistent", "--mode", "sideways", "augment"])), 1);

    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.toml");
    fs::write(&cfg, "seed = 1\nunknown_key = true\n").unwrap();
    let r = lrpd(&["--config", s(&cfg), "stats"]);
    assert_eq!(code(&r), 1);
    assert!(String::from_utf8_lossy(&r.stderr).contains("unknown_key"));
}

#[test]
fn missing_calibration_is_a_data_error_naming_the_frame() {
    let c = Corpus::new(3);
    fs::remove_file(c.root.join("calib/000001.txt")).unwrap();
    let r = c.run(&["propose"]);
    assert_eq!(code(&r), 2);
    assert!(String::from_utf8_lossy(&r.stderr).contains("000001"));
    // the other frames are still written
    assert!(c.out.join("proposals/000000.jsonl").exists());
    assert!(c.out.join("proposals/000002.jsonl").exists());
    let summary = c.json("propose_summary.json");
    assert_eq!(summary["failed"][0]["frame"], "000001");
}

#[test]
fn empty_split_produces_empty_outputs() {
    let c = Corpus::new(2);
    let split = c.root.join("empty.txt");
    fs::write(&split, "").unwrap();
    for cmd in ["propose", "augment", "voxelize", "evaluate", "stats"] {
        let r = c.run(&["--split", s(&split), cmd]);
        assert_eq!(code(&r), 0, "{cmd}: {}", String::from_utf8_lossy(&r.stderr));
    }
    assert_eq!(c.json("propose_summary.json")["proposals"], 0);
    assert!(!c.out.join("proposals").exists());
    assert_eq!(c.json("eval_report.json")["n_frames"], 0);
    assert_eq!(c.json("stats.json")["n_frames"], 0);
}

#[test]
fn augment_is_seeded_and_random_mode_gives_ten_copies() {
    let c = Corpus::new(4);
    assert_eq!(code(&c.run(&["propose"])), 0);
    assert_eq!(code(&c.run(&["--mode", "random", "augment"])), 0);
    let first = snapshot(&c.out.join("augmented"));
    assert_eq!(code(&c.run(&["--mode", "random", "--jobs", "1", "augment"])), 0);
    assert_eq!(snapshot(&c.out.join("augmented")), first);

    for id in ["000000", "000001", "000002", "000003"] {
        let props = fs::read_to_string(c.out.join(format!("proposals/{id}.jsonl"))).unwrap().lines().count();
        let text = fs::read_to_string(c.out.join(format!("augmented/{id}.jsonl"))).unwrap();
        let records: Vec<Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
        assert_eq!(records.len(), 10 * props);
        for (k, r) in records.iter().enumerate() {
            assert_eq!(r["proposal_index"], k / 10);
            assert_eq!(r["copy"], k % 10);
        }
    }

    let r = lrpd(&["--root", s(&c.root), "--out", s(&c.out), "--seed", "6", "--mode", "random", "augment"]);
    assert_eq!(code(&r), 0);
    assert_ne!(snapshot(&c.out.join("augmented")), first);
}

#[test]
fn ground_truth_as_predictions_scores_perfectly() {
    let c = Corpus::new(6);
    let preds = c.out.join("gt_preds");
    fs::create_dir_all(&preds).unwrap();
    for f in walk(&c.root.join("label_2")) {
        fs::copy(&f, preds.join(f.file_name().unwrap())).unwrap();
    }
    assert_eq!(code(&c.run(&["--predictions", s(&preds), "evaluate"])), 0);
    let report = c.json("eval_report.json");
    assert_eq!(ap(&report, "moderate", "all"), 1.0);
    assert_eq!(report["skipped_frames"].as_array().unwrap().len(), 0);

    for f in walk(&preds) {
        fs::write(&f, "").unwrap();
    }
    assert_eq!(code(&c.run(&["--predictions", s(&preds), "evaluate"])), 0);
    assert_eq!(ap(&c.json("eval_report.json"), "moderate", "all"), 0.0);

    // a frame without a prediction file is skipped, not failed
    fs::remove_file(preds.join("000002.txt")).unwrap();
    assert_eq!(code(&c.run(&["--predictions", s(&preds), "evaluate"])), 0);
    assert_eq!(c.json("eval_report.json")["skipped_frames"][0], "000002");
    let csv = fs::read_to_string(c.out.join("eval_report.csv")).unwrap();
    assert!(csv.starts_with("difficulty,range,"));
}

#[test]
fn stats_without_masks_skip_pixel_counts() {
    let c = Corpus::new(3);
    assert_eq!(code(&c.run(&["stats"])), 0);
    let with = c.json("stats.json");
    assert!(!with["all"]["mask_pixels"].is_null());

    fs::remove_dir_all(c.root.join("masks")).unwrap();
    assert_eq!(code(&c.run(&["stats"])), 0);
    let without = c.json("stats.json");
    assert!(without["all"]["mask_pixels"].is_null());
    assert_eq!(without["all"]["points"], with["all"]["points"]);
    assert_eq!(without["all"]["box_pixels"], with["all"]["box_pixels"]);
}

#[test]
fn reruns_rewrite_identical_outputs() {
    let c = Corpus::new(3);
    let stages = ["propose", "augment", "voxelize", "evaluate", "stats"];
    for cmd in stages {
        assert_eq!(code(&c.run(&[cmd])), 0, "{cmd}");
    }
    let first = snapshot(&c.out);
    for cmd in stages {
        assert_eq!(code(&c.run(&["--jobs", "2", cmd])), 0, "{cmd}");
    }
    assert_eq!(snapshot(&c.out), first);
}

#[test]
fn selfcheck_passes() {
    let r = lrpd(&["selfcheck"]);
    assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stdout));
    assert!(!String::from_utf8_lossy(&r.stdout).contains("FAIL"));
}

#[test]
fn shipped_example_config_is_accepted() {
    let cfg = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../config/example.toml");
    let r = lrpd(&["--config", s(&cfg), "selfcheck"]);
    assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stderr));
}

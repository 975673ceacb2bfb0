// SPDX-License-Identifier: Apache-2.0

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn memdyn(out_dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_memdyn"))
        .args(args)
        .env("MEMDYN_OUT_DIR", out_dir)
        .env_remove("RUST_LOG")
        .output()
        .expect("spawn memdyn")
}

fn line(id: &str, prefix: &[u32], continuation: &[u32]) -> String {
    format!("{{\"sample_id\":\"{id}\",\"prefix\":{prefix:?},\"continuation\":{continuation:?}}}\n")
}

fn gen_line(id: &str, model: &str, generated: &[u32]) -> String {
    format!("{{\"sample_id\":\"{id}\",\"model_id\":\"{model}\",\"generated\":{generated:?}}}\n")
}

/// Writes four samples and one model's generations. At n = 1: a 0.5,
/// b 1.0, c 1.0, d 0.0.
fn fixture(dir: &Path) {
    let prefix: Vec<u32> = (0..32).collect();
    let a: Vec<u32> = (100..132).collect();
    let b: Vec<u32> = [1, 2, 3, 4].repeat(8);
    let c: Vec<u32> = (0..32).map(|i| i % 7).collect();
    let d: Vec<u32> = (200..232).collect();
    let samples = [("a", &a), ("b", &b), ("c", &c), ("d", &d)]
        .iter()
        .map(|(id, cont)| line(id, &prefix, cont))
        .collect::<String>();
    fs::write(dir.join("samples.jsonl"), samples).unwrap();

    let mut half: Vec<u32> = (100..116).collect();
    half.extend(900..916);
    let b_gen: Vec<u32> = [4, 3, 2, 1].repeat(8);
    let c_gen: Vec<u32> = (0..32).map(|i| (i * 3) % 7).collect();
    let d_gen: Vec<u32> = (500..532).collect();
    let gens = [("a", &half), ("b", &b_gen), ("c", &c_gen), ("d", &d_gen)]
        .iter()
        .map(|(id, g)| gen_line(id, "m", g))
        .collect::<String>();
    fs::write(dir.join("gens.jsonl"), gens).unwrap();
}

fn score_at(csv: &str, sample: &str, n: usize) -> (f64, bool) {
    for row in csv.lines().skip(1) {
        let cols: Vec<&str> = row.split(',').collect();
        if cols[0] == sample && cols[2] == n.to_string() {
            return (cols[3].parse().unwrap(), cols[4] == "true");
        }
    }
    panic!("no row for {sample} n={n}");
}

#[test]
fn score_writes_expected_rows() {
    let dir = tempfile::tempdir().unwrap();
    fixture(dir.path());
    let out = dir.path().join("out");
    let o = memdyn(
        &out,
        &[
            "score",
            "--samples",
            dir.path().join("samples.jsonl").to_str().unwrap(),
            "--generations",
            dir.path().join("gens.jsonl").to_str().unwrap(),
            "--n",
            "1,2,4",
        ],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("scores.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 4 * 3);
    assert_eq!(score_at(&csv, "a", 1), (0.5, false));
    assert_eq!(score_at(&csv, "b", 1), (1.0, true));
    // reversed order shares no bigram: {12, 23, 34, 41} vs {43, 32, 21, 14}
    assert_eq!(score_at(&csv, "b", 2), (0.0, false));
    assert_eq!(score_at(&csv, "c", 2), (0.0, false));
    assert_eq!(score_at(&csv, "c", 1), (1.0, true));
    assert_eq!(score_at(&csv, "d", 4), (0.0, false));
}

#[test]
fn malformed_line_is_skipped_in_lenient_mode() {
    let dir = tempfile::tempdir().unwrap();
    fixture(dir.path());
    let gens = dir.path().join("gens.jsonl");
    let mut text = fs::read_to_string(&gens).unwrap();
    text.push_str("{\"sample_id\": \"a\", \"generated\": [1, 2\n");
    fs::write(&gens, text).unwrap();
    let samples = dir.path().join("samples.jsonl");
    let args = [
        "score",
        "--samples",
        samples.to_str().unwrap(),
        "--generations",
        gens.to_str().unwrap(),
    ];

    let out = dir.path().join("out");
    let o = memdyn(&out, &args);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let log = fs::read_to_string(out.join("skipped.log")).unwrap();
    assert_eq!(log.lines().count(), 1, "{log}");

    let mut strict = args.to_vec();
    strict.push("--strict");
    let o = memdyn(&dir.path().join("strict"), &strict);
    assert_ne!(o.status.code(), Some(0));
}

#[test]
fn unknown_command_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = memdyn(dir.path(), &["frobnicate"]);
    assert!(!o.status.success());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
}

#[test]
fn missing_input_is_fatal() {
    let dir = tempfile::tempdir().unwrap();
    let o = memdyn(dir.path(), &["report", "--results", dir.path().to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("scores.csv"));
}

#[test]
fn validate_exit_status_reflects_violations() {
    let dir = tempfile::tempdir().unwrap();
    fixture(dir.path());
    let samples = dir.path().join("samples.jsonl");
    let o = memdyn(
        &dir.path().join("ok"),
        &["validate", "--samples", samples.to_str().unwrap()],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let mut text = fs::read_to_string(&samples).unwrap();
    text.push_str(&line("a", &[1; 32], &[2; 32]));
    fs::write(&samples, text).unwrap();
    let o = memdyn(
        &dir.path().join("bad"),
        &["validate", "--samples", samples.to_str().unwrap()],
    );
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn perturb_flags_and_spec_file_agree() {
    let dir = tempfile::tempdir().unwrap();
    fixture(dir.path());
    let samples = dir.path().join("samples.jsonl");
    let spec = dir.path().join("sweep.toml");
    fs::write(
        &spec,
        "seeds = [3, 4]\n\n[[sweep]]\nkind = \"shuffle\"\nstrengths = [0.25, 0.5]\n",
    )
    .unwrap();

    let from_file = dir.path().join("file");
    let o = memdyn(
        &from_file,
        &[
            "perturb",
            "--samples",
            samples.to_str().unwrap(),
            "--spec",
            spec.to_str().unwrap(),
        ],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let from_flags = dir.path().join("flags");
    let o = memdyn(
        &from_flags,
        &[
            "perturb",
            "--samples",
            samples.to_str().unwrap(),
            "--kind",
            "shuffle",
            "--strengths",
            "0.25,0.5",
            "--seed",
            "3,4",
        ],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    for f in ["manifest.csv", "intensity.csv", "perturbed/shuffle-r0.25-s3.jsonl"] {
        assert_eq!(
            fs::read(from_file.join(f)).unwrap(),
            fs::read(from_flags.join(f)).unwrap(),
            "{f}"
        );
    }
    let manifest = fs::read_to_string(from_file.join("manifest.csv")).unwrap();
    assert_eq!(manifest.lines().count(), 1 + 4);
}

#[test]
fn edit_perturbation_needs_frequencies() {
    let dir = tempfile::tempdir().unwrap();
    fixture(dir.path());
    let samples = dir.path().join("samples.jsonl");
    let o = memdyn(
        dir.path(),
        &[
            "perturb",
            "--samples",
            samples.to_str().unwrap(),
            "--kind",
            "delete",
            "--strengths",
            "2",
        ],
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("frequency table"));
}

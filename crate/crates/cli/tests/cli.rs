use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn slu(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_slu"))
        .args(args)
        .env("SLU_LOG", "warn")
        .output()
        .unwrap()
}

fn example(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../data/example")
        .join(name)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(out: &Output) -> serde_json::Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

#[test]
fn example_manifests_validate() {
    let out = slu(&["validate", s(&example("manifest.jsonl")), s(&example("hyp.jsonl"))]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(slu(&["score", "--bogus"]).status.code(), Some(2));
    assert_eq!(slu(&[]).status.code(), Some(2));
}

#[test]
fn invalid_manifest_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.jsonl");
    std::fs::write(
        &bad,
        "{\"id\":\"a\",\"words\":[\"x\",\"y\"],\"slots\":[\"O\"],\"intent\":\"i\"}\n",
    )
    .unwrap();
    assert_eq!(slu(&["validate", s(&bad)]).status.code(), Some(2));
}

#[test]
fn missing_file_exits_one() {
    let out = slu(&["validate", "/nonexistent/manifest.jsonl"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn self_comparison_scores_perfectly() {
    let m = example("manifest.jsonl");
    let v = json(&slu(&["score", "--refs", s(&m), "--hyps", s(&m)]));
    assert_eq!(v["wer"]["wer"], 0.0);
    assert_eq!(v["slots_edit_f1"]["f1"], 1.0);
    assert_eq!(v["span_f1"]["f1"], 1.0);
    assert_eq!(v["intent_f1"], 1.0);
}

#[test]
fn mismatched_hypotheses_are_scored_by_alignment() {
    let v = json(&slu(&[
        "score",
        "--refs",
        s(&example("manifest.jsonl")),
        "--hyps",
        s(&example("hyp.jsonl")),
        "--metrics",
        "slots-edit-f1",
    ]));
    let t = &v["slots_edit_f1"];
    let tp: u64 = t["per_label"]
        .as_object()
        .unwrap()
        .values()
        .map(|x| x["tp"].as_u64().unwrap())
        .sum();
    assert_eq!(tp, 11);
    assert!((t["f1"].as_f64().unwrap() - 22.0 / 24.0).abs() < 1e-12);
}

#[test]
fn explicit_span_f1_on_length_mismatch_exits_two() {
    let out = slu(&[
        "score",
        "--refs",
        s(&example("manifest.jsonl")),
        "--hyps",
        s(&example("hyp.jsonl")),
        "--metrics",
        "span-f1",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn wer_on_raw_text() {
    let v = json(&slu(&[
        "wer",
        "--ref-text",
        "fly to boston",
        "--hyp-text",
        "fly to austin please",
    ]));
    assert!((v["wer"].as_f64().unwrap() - 2.0 / 3.0).abs() < 1e-12);
}

#[test]
fn tokenize_text_with_example_vocab() {
    let out = slu(&[
        "tokenize",
        "--vocab",
        s(&example("nlu.vocab")),
        "--text",
        "Flights to Boston",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn synth_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        json(&slu(&["synth", "--out-dir", s(d), "--size", "6", "--seed", "4"]));
    }
    for f in [
        "manifest.jsonl",
        "asr.vocab",
        "nlu.vocab",
        "train.json",
        "audio/syn003.wav",
    ] {
        assert_eq!(
            std::fs::read(a.join(f)).unwrap(),
            std::fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn augment_reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let clean = dir.path().join("clean");
    json(&slu(&["synth", "--out-dir", s(&clean), "--size", "3", "--seed", "1"]));
    // Reuse synthetic utterances from another seed as noise.
    let noise_src = dir.path().join("noise_src");
    json(&slu(&[
        "synth",
        "--out-dir",
        s(&noise_src),
        "--size",
        "4",
        "--seed",
        "9",
    ]));
    for (split, ids) in [("train", ["syn000", "syn001"]), ("test", ["syn002", "syn003"])] {
        let d = dir.path().join("noise").join(split);
        std::fs::create_dir_all(&d).unwrap();
        for id in ids {
            std::fs::copy(noise_src.join(format!("audio/{id}.wav")), d.join(format!("{id}.wav"))).unwrap();
        }
    }
    let run = |out: &Path| {
        json(&slu(&[
            "augment",
            "--manifest",
            s(&clean.join("manifest.jsonl")),
            "--noise-dir",
            s(&dir.path().join("noise")),
            "--out-dir",
            s(out),
            "--snr",
            "0,20",
            "--seed",
            "5",
            "--random-offset",
            "--jobs",
            "2",
        ]))
    };
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(run(&a)["records"], 6);
    run(&b);
    for f in ["manifest.jsonl", "provenance.json"] {
        assert_eq!(
            std::fs::read(a.join(f)).unwrap(),
            std::fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn too_few_noises_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let clean = dir.path().join("clean");
    json(&slu(&["synth", "--out-dir", s(&clean), "--size", "2"]));
    for split in ["train", "test"] {
        std::fs::create_dir_all(dir.path().join("noise").join(split)).unwrap();
    }
    let out = slu(&[
        "augment",
        "--manifest",
        s(&clean.join("manifest.jsonl")),
        "--noise-dir",
        s(&dir.path().join("noise")),
        "--out-dir",
        s(&dir.path().join("out")),
    ]);
    assert!(!out.status.success());
}

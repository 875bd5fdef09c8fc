//! End-to-end pipeline runs of the `ofn` binary on a small synthetic
//! corpus: synth → prepare → train → normalize → evaluate → sweep,
//! plus exit-code and determinism checks.

use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

fn ofn() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ofn"))
}

fn work_dir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join("ofn-cli-test").join(name);
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("spawn ofn");
    assert!(
        out.status.success(),
        "command failed: {:?}\nstdout: {}\nstderr: {}",
        cmd,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn exit_code(cmd: &mut Command) -> i32 {
    cmd.output().expect("spawn ofn").status.code().unwrap_or(-1)
}

#[test]
fn full_pipeline_runs_and_is_deterministic() {
    let dir = work_dir("pipeline");
    let corpus = dir.join("corpus.tsv");

    // synth
    run_ok(ofn().arg("synth").arg("--out").arg(&corpus).args([
        "--sentences",
        "2200",
        "--seed",
        "3435",
    ]));
    let corpus_a = fs::read_to_string(&corpus).unwrap();
    run_ok(ofn().arg("synth").arg("--out").arg(&corpus).args([
        "--sentences",
        "2200",
        "--seed",
        "3435",
    ]));
    let corpus_b = fs::read_to_string(&corpus).unwrap();
    assert_eq!(corpus_a, corpus_b, "synth must be byte-deterministic");

    // prepare (hold out the last document)
    let prep = dir.join("prep");
    let out = run_ok(
        ofn()
            .arg("prepare")
            .arg("--corpus")
            .arg(&corpus)
            .arg("--out-dir")
            .arg(&prep)
            .args([
                "--chunk-size",
                "1",
                "--test-docs",
                "synth-002",
                "--seed",
                "3435",
            ]),
    );
    let stdout = String::from_utf8_lossy(&out.stdout).to_string();
    assert!(stdout.contains("train sentences:"), "{}", stdout);
    for f in [
        "train.pairs",
        "valid.pairs",
        "test.pairs",
        "train.tsv",
        "valid.tsv",
        "test.tsv",
        "source.vocab",
        "target.vocab",
    ] {
        assert!(prep.join(f).exists(), "missing {}", f);
    }
    let pairs_a = fs::read_to_string(prep.join("train.pairs")).unwrap();
    run_ok(
        ofn()
            .arg("prepare")
            .arg("--corpus")
            .arg(&corpus)
            .arg("--out-dir")
            .arg(&prep)
            .args([
                "--chunk-size",
                "1",
                "--test-docs",
                "synth-002",
                "--seed",
                "3435",
            ]),
    );
    let pairs_b = fs::read_to_string(prep.join("train.pairs")).unwrap();
    assert_eq!(pairs_a, pairs_b, "prepare must be byte-deterministic");

    // train (tiny but long enough to beat pass-through on this task)
    let run = dir.join("run");
    run_ok(
        ofn()
            .arg("train")
            .arg("--train-pairs")
            .arg(prep.join("train.pairs"))
            .arg("--valid-pairs")
            .arg(prep.join("valid.pairs"))
            .arg("--out-dir")
            .arg(&run)
            .args([
                "--chunk-size",
                "1",
                "--steps",
                "400",
                "--batch-size",
                "16",
                "--embed-dim",
                "16",
                "--hidden-dim",
                "32",
                "--dropout",
                "0.1",
                "--optimizer",
                "adam",
                "--learning-rate",
                "0.003",
                "--valid-every",
                "100",
                "--checkpoint-every",
                "200",
                "--seed",
                "3435",
            ]),
    );
    assert!(run.join("final.ofn").exists());
    assert!(run.join("best.ofn").exists());
    assert!(run.join("train.log").exists());
    assert!(run.join("checkpoint-200.ofn").exists());
    let log = fs::read_to_string(run.join("train.log")).unwrap();
    assert_eq!(log.lines().count(), 4, "one line per validation point");

    // normalize the held-out test set
    let pred = dir.join("pred.tsv");
    run_ok(
        ofn()
            .arg("normalize")
            .arg("--model")
            .arg(run.join("best.ofn"))
            .arg("--input")
            .arg(prep.join("test.tsv"))
            .arg("--output")
            .arg(&pred),
    );
    let pred_a = fs::read_to_string(&pred).unwrap();
    run_ok(
        ofn()
            .arg("normalize")
            .arg("--model")
            .arg(run.join("best.ofn"))
            .arg("--input")
            .arg(prep.join("test.tsv"))
            .arg("--output")
            .arg(&pred),
    );
    let pred_b = fs::read_to_string(&pred).unwrap();
    assert_eq!(pred_a, pred_b, "normalize must be deterministic");

    // threads must not change the output
    let pred_mt = dir.join("pred-mt.tsv");
    run_ok(
        ofn()
            .arg("normalize")
            .arg("--model")
            .arg(run.join("best.ofn"))
            .arg("--input")
            .arg(prep.join("test.tsv"))
            .arg("--output")
            .arg(&pred_mt)
            .args(["--threads", "3"]),
    );
    assert_eq!(pred_a, fs::read_to_string(&pred_mt).unwrap());

    // evaluate
    let out = run_ok(
        ofn()
            .arg("evaluate")
            .arg("--gold")
            .arg(prep.join("test.tsv"))
            .arg("--pred")
            .arg(&pred),
    );
    let stdout = String::from_utf8_lossy(&out.stdout).to_string();
    assert!(stdout.contains("accuracy"), "{}", stdout);
    assert!(stdout.contains("total="), "{}", stdout);

    // sweep over a single model
    let out = run_ok(
        ofn()
            .arg("sweep")
            .arg("--model")
            .arg(run.join("best.ofn"))
            .arg("--gold")
            .arg(prep.join("test.tsv")),
    );
    let stdout = String::from_utf8_lossy(&out.stdout).to_string();
    assert!(stdout.contains("Chunk 1"), "{}", stdout);
}

#[test]
fn plain_text_normalization_reads_space_separated_lines() {
    let dir = work_dir("plain-text");
    let corpus = dir.join("c.tsv");
    run_ok(ofn().arg("synth").arg("--out").arg(&corpus).args([
        "--sentences",
        "300",
        "--seed",
        "1",
    ]));
    let prep = dir.join("prep");
    run_ok(
        ofn()
            .arg("prepare")
            .arg("--corpus")
            .arg(&corpus)
            .arg("--out-dir")
            .arg(&prep)
            .args(["--chunk-size", "1", "--valid-fraction", "0"]),
    );
    assert_eq!(
        fs::read_to_string(prep.join("valid.pairs")).unwrap(),
        "",
        "zero valid fraction must produce an empty valid file"
    );
    let run = dir.join("run");
    run_ok(
        ofn()
            .arg("train")
            .arg("--train-pairs")
            .arg(prep.join("train.pairs"))
            .arg("--out-dir")
            .arg(&run)
            .args([
                "--chunk-size",
                "1",
                "--steps",
                "30",
                "--batch-size",
                "8",
                "--embed-dim",
                "8",
                "--hidden-dim",
                "16",
                "--optimizer",
                "adam",
            ]),
    );
    let input = dir.join("input.txt");
    fs::write(&input, "herra caiken .\nsydhemen\n").unwrap();
    let output = dir.join("out.tsv");
    run_ok(
        ofn()
            .arg("normalize")
            .arg("--model")
            .arg(run.join("final.ofn"))
            .arg("--input")
            .arg(&input)
            .arg("--output")
            .arg(&output),
    );
    let text = fs::read_to_string(&output).unwrap();
    let token_lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
    assert_eq!(token_lines.len(), 4);
    for line in token_lines {
        assert_eq!(line.split('\t').count(), 3);
    }
    // punctuation passes through unchanged
    assert!(text.lines().any(|l| l.starts_with(".\t.\t0")));
}

#[test]
fn exit_codes_distinguish_user_and_runtime_failures() {
    let dir = work_dir("exit-codes");

    // steps = 0: precondition violation → 1
    let code = exit_code(
        ofn()
            .arg("train")
            .arg("--train-pairs")
            .arg(dir.join("nope.pairs"))
            .arg("--out-dir")
            .arg(dir.join("run"))
            .args(["--steps", "0"]),
    );
    assert_eq!(code, 1);

    // missing corpus file → 1
    let code = exit_code(
        ofn()
            .arg("prepare")
            .arg("--corpus")
            .arg(dir.join("missing.tsv"))
            .arg("--out-dir")
            .arg(dir.join("prep")),
    );
    assert_eq!(code, 1);

    // unknown config key → 1
    let conf = dir.join("bad.conf");
    fs::write(&conf, "stepz = 5\n").unwrap();
    let code = exit_code(
        ofn()
            .arg("synth")
            .arg("--out")
            .arg(dir.join("c.tsv"))
            .arg("--config")
            .arg(&conf),
    );
    assert_eq!(code, 1);

    // corrupt model file → 2 (format error)
    let model = dir.join("broken.ofn");
    fs::write(&model, b"XXXXnot a model").unwrap();
    let input = dir.join("in.txt");
    fs::write(&input, "herra\n").unwrap();
    let code = exit_code(
        ofn()
            .arg("normalize")
            .arg("--model")
            .arg(&model)
            .arg("--input")
            .arg(&input)
            .arg("--output")
            .arg(dir.join("out.tsv")),
    );
    assert_eq!(code, 2);

    // usage error → 1, help → 0
    assert_eq!(exit_code(ofn().arg("train")), 1);
    assert_eq!(exit_code(ofn().arg("--help")), 0);
}

#[test]
fn verify_grad_exits_zero_and_reports() {
    let out = run_ok(ofn().arg("verify-grad"));
    let stdout = String::from_utf8_lossy(&out.stdout).to_string();
    assert!(stdout.contains("max relative error"), "{}", stdout);
    assert!(stdout.contains("PASS"), "{}", stdout);
}

#[test]
fn evaluate_scores_baseline_analyses() {
    let dir = work_dir("baseline");
    let gold = dir.join("gold.tsv");
    fs::write(&gold, "# doc = d\nolan\tolka\nherra\therra\n.\t.\n\n").unwrap();
    let analyses = dir.join("omorfi.txt");
    // one line per token: olan → {olla, olka}; herra → {}; . → {.}
    fs::write(&analyses, "olla,olka\n\n.\n").unwrap();
    let out = run_ok(
        ofn()
            .arg("evaluate")
            .arg("--gold")
            .arg(&gold)
            .arg("--analyses")
            .arg(&analyses),
    );
    let stdout = String::from_utf8_lossy(&out.stdout).to_string();
    // olka found in list, herra missing, punctuation excluded
    assert!(
        stdout.contains("accuracy 50.0% (1/2 correct, 1 punctuation excluded)"),
        "{}",
        stdout
    );
}

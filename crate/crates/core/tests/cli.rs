//! End-to-end runs of the `stegotext` binary.

mod common;

use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use tempfile::TempDir;

const KEY: &str = "00112233445566778899aabbccddeeff00112233445566778899aabbccddeeff";
const OTHER_KEY: &str = "ffeeddccbbaa99887766554433221100ffeeddccbbaa99887766554433221100";

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_stegotext"));
    c.env_remove("STEGO_KEY");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Vocabulary, model and tables built through the CLI itself.
struct Fixture {
    dir: TempDir,
}

impl Fixture {
    fn new() -> Self {
        let f = Fixture { dir: tempfile::tempdir().unwrap() };
        let corpus = common::data("corpus.txt");
        let target = common::data("target.txt");
        ok(&["build-vocab", "--corpus", s(&corpus), s(&target), "--out", s(&f.p("vocab.txt"))]);
        ok(&["build-freq", "--corpus", s(&corpus), "--vocab", s(&f.p("vocab.txt")), "--out", s(&f.p("model.freq"))]);
        ok(&["build-freq", "--corpus", s(&target), "--vocab", s(&f.p("vocab.txt")), "--out", s(&f.p("target.freq"))]);
        ok(&[
            "train-lm", "--corpus", s(&corpus), "--vocab", s(&f.p("vocab.txt")), "--order", "2", "--kappa", "1/10",
            "--out", s(&f.p("lm.tsv")),
        ]);
        std::fs::write(f.p("msg.bin"), (0u8..32).map(|i| i.wrapping_mul(37)).collect::<Vec<_>>()).unwrap();
        f
    }

    fn p(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn encode_args(&self, algo: &str, out: &str) -> Vec<String> {
        [
            "encode", "--key", KEY, "--msg", s(&self.p("msg.bin")), "--vocab", s(&self.p("vocab.txt")),
            "--target-freq", s(&self.p("target.freq")), "--model-freq", s(&self.p("model.freq")),
            "--algo", algo, "--nonce", "42", "--out", s(&self.p(out)),
        ]
        .iter()
        .map(|a| a.to_string())
        .collect()
    }

    fn encode(&self, algo: &str, out: &str, extra: &[&str]) -> Output {
        let mut args = self.encode_args(algo, out);
        args.extend(extra.iter().map(|a| a.to_string()));
        bin().args(&args).output().unwrap()
    }

    fn decode(&self, stego: &str, key: &str, out: &str, extra: &[&str]) -> Output {
        let stego = self.p(stego);
        let manifest = format!("{}.manifest.json", s(&stego));
        let out = self.p(out);
        let mut args = vec!["decode", "--key", key, "--stego", s(&stego), "--manifest", &manifest, "--out", s(&out)];
        args.extend(extra);
        run(&args)
    }
}

#[test]
fn every_codec_round_trips_through_files() {
    let f = Fixture::new();
    let lm = f.p("lm.tsv");
    for algo in ["ac", "meteor", "discop", "adg"] {
        let out = f.encode(algo, &format!("{algo}.txt"), &["--model", s(&lm)]);
        assert!(out.status.success(), "{algo}: {}", String::from_utf8_lossy(&out.stderr));
        let dec = f.decode(&format!("{algo}.txt"), KEY, &format!("{algo}.out"), &[]);
        assert!(dec.status.success(), "{algo}: {}", String::from_utf8_lossy(&dec.stderr));
        assert_eq!(std::fs::read(f.p(&format!("{algo}.out"))).unwrap(), std::fs::read(f.p("msg.bin")).unwrap());
    }
}

#[test]
fn fixed_nonce_reproduces_output() {
    let f = Fixture::new();
    let lm = f.p("lm.tsv");
    f.encode("discop", "a.txt", &["--model", s(&lm)]);
    f.encode("discop", "b.txt", &["--model", s(&lm)]);
    assert_eq!(std::fs::read(f.p("a.txt")).unwrap(), std::fs::read(f.p("b.txt")).unwrap());
    let manifest = |n: &str| {
        let m: serde_json::Value = serde_json::from_slice(&std::fs::read(f.p(n)).unwrap()).unwrap();
        m["stego_sha256"].clone()
    };
    assert_eq!(manifest("a.txt.manifest.json"), manifest("b.txt.manifest.json"));
}

#[test]
fn wrong_key_exits_5_and_writes_nothing() {
    let f = Fixture::new();
    f.encode("meteor", "s.txt", &["--model", s(&f.p("lm.tsv"))]);
    let dec = f.decode("s.txt", OTHER_KEY, "out.bin", &[]);
    assert_eq!(dec.status.code(), Some(5), "{}", String::from_utf8_lossy(&dec.stderr));
    assert!(!f.p("out.bin").exists());
}

#[test]
fn tampered_artifact_exits_4() {
    let f = Fixture::new();
    f.encode("ac", "s.txt", &["--model", s(&f.p("lm.tsv"))]);
    let mut table = std::fs::read_to_string(f.p("target.freq")).unwrap();
    table.push('\n');
    std::fs::write(f.p("target.freq"), table).unwrap();
    let dec = f.decode("s.txt", KEY, "out.bin", &[]);
    assert_eq!(dec.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&dec.stderr).contains("hash mismatch"));
    assert!(!f.p("out.bin").exists());
}

#[test]
fn partial_embed_exits_6_and_writes_nothing() {
    let f = Fixture::new();
    let out = f.encode("adg", "s.txt", &["--model", s(&f.p("lm.tsv")), "--max-len", "4"]);
    assert_eq!(out.status.code(), Some(6));
    assert!(!f.p("s.txt").exists());
    assert!(!f.p("s.txt.manifest.json").exists());
}

#[test]
fn malformed_key_exits_3() {
    let f = Fixture::new();
    let out = run(&[
        "encode", "--key", "xyz", "--msg-hex", "00", "--vocab", s(&f.p("vocab.txt")), "--model", s(&f.p("lm.tsv")),
        "--target-freq", s(&f.p("target.freq")), "--model-freq", s(&f.p("model.freq")), "--algo", "ac", "--out",
        s(&f.p("x")),
    ]);
    assert_eq!(out.status.code(), Some(3));
    let usage = run(&["encode", "--algo", "nope"]);
    assert_eq!(usage.status.code(), Some(2));
}

#[test]
fn json_output_and_env_key() {
    let f = Fixture::new();
    let mut args = f.encode_args("discop", "s.txt");
    let k = args.iter().position(|a| a == "--key").unwrap();
    args.drain(k..k + 2);
    args.extend(["--model".into(), s(&f.p("lm.tsv")).into(), "--json".into()]);
    let out = bin().args(&args).env("STEGO_KEY", KEY).output().unwrap();
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["schema"], 1);
    assert_eq!(v["status"], "complete");
    assert_eq!(v["message_bits"], 256);
    assert!(v["embedding_rate"].as_f64().unwrap() > 0.0);
}

#[test]
fn live_bridge_process_round_trips_256_bits() {
    let f = Fixture::new();
    let cmd = format!("{} serve-mock --model {}", env!("CARGO_BIN_EXE_stegotext"), s(&f.p("lm.tsv")));
    let out = f.encode("meteor", "bridge.txt", &["--bridge-cmd", &cmd]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let dec = f.decode("bridge.txt", KEY, "bridge.out", &[]);
    assert!(dec.status.success(), "{}", String::from_utf8_lossy(&dec.stderr));
    assert_eq!(std::fs::read(f.p("bridge.out")).unwrap(), std::fs::read(f.p("msg.bin")).unwrap());
    // the bridge serves the built-in model, so the stegotext matches it too
    f.encode("meteor", "local.txt", &["--model", s(&f.p("lm.tsv"))]);
    assert_eq!(std::fs::read(f.p("bridge.txt")).unwrap(), std::fs::read(f.p("local.txt")).unwrap());
}

fn tcp_server(lm: &Path) -> (std::process::Child, String) {
    let mut child = bin()
        .args(["serve-mock", "--model", s(lm), "--tcp", "127.0.0.1:0"])
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stderr.as_mut().unwrap()).read_line(&mut line).unwrap();
    let addr = line.trim().strip_prefix("listening on ").expect("address line").to_string();
    (child, addr)
}

#[test]
fn tcp_bridge_round_trips() {
    let f = Fixture::new();
    let (mut a, addr) = tcp_server(&f.p("lm.tsv"));
    let out = f.encode("discop", "tcp.txt", &["--bridge-tcp", &addr]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    a.wait().unwrap();
    let (mut b, addr) = tcp_server(&f.p("lm.tsv"));
    let dec = f.decode("tcp.txt", KEY, "tcp.out", &["--bridge-tcp", &addr]);
    assert!(dec.status.success(), "{}", String::from_utf8_lossy(&dec.stderr));
    b.wait().unwrap();
    assert_eq!(std::fs::read(f.p("tcp.out")).unwrap(), std::fs::read(f.p("msg.bin")).unwrap());
}

#[test]
fn config_file_supplies_flags() {
    let f = Fixture::new();
    let cfg = f.p("run.toml");
    std::fs::write(
        &cfg,
        format!(
            "vocab = {:?}\nalpha = 0.2\nprecision = 16\n[encode]\nmodel = {:?}\nalgo = \"ac\"\n",
            s(&f.p("vocab.txt")),
            s(&f.p("lm.tsv"))
        ),
    )
    .unwrap();
    let out = run(&[
        "encode", "--config", s(&cfg), "--key", KEY, "--msg-hex", "c0ffee", "--target-freq", s(&f.p("target.freq")),
        "--model-freq", s(&f.p("model.freq")), "--out", s(&f.p("c.txt")), "--nonce", "1",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let m: serde_json::Value = serde_json::from_slice(&std::fs::read(f.p("c.txt.manifest.json")).unwrap()).unwrap();
    assert_eq!(m["codec"], "ac");
    assert_eq!(m["precision"], 16);
    assert_eq!(m["reform"]["alpha"], 0.2);
    let dec = f.decode("c.txt", KEY, "c.out", &[]);
    assert!(dec.status.success());
    assert_eq!(std::fs::read(f.p("c.out")).unwrap(), [0xc0, 0xff, 0xee]);
}

#[test]
fn byte_vocabulary_defaults_to_ids() {
    let f = Fixture::new();
    let corpus = common::data("corpus.txt");
    let v = f.p("bytes.vocab");
    ok(&["build-vocab", "--scheme", "byte", "--corpus", s(&corpus), "--out", s(&v)]);
    ok(&["build-freq", "--corpus", s(&corpus), "--vocab", s(&v), "--out", s(&f.p("b.freq"))]);
    ok(&["train-lm", "--corpus", s(&corpus), "--vocab", s(&v), "--order", "3", "--out", s(&f.p("b.lm"))]);
    ok(&[
        "encode", "--key", KEY, "--msg-hex", "0123456789", "--vocab", s(&v), "--model", s(&f.p("b.lm")),
        "--target-freq", s(&f.p("b.freq")), "--model-freq", s(&f.p("b.freq")), "--algo", "discop", "--out",
        s(&f.p("b.ids")),
    ]);
    let ids: serde_json::Value = serde_json::from_slice(&std::fs::read(f.p("b.ids")).unwrap()).unwrap();
    assert!(ids["tokens"].as_array().unwrap().len() > 1);
    let dec = f.decode("b.ids", KEY, "b.out", &[]);
    assert!(dec.status.success(), "{}", String::from_utf8_lossy(&dec.stderr));
    assert_eq!(std::fs::read(f.p("b.out")).unwrap(), hex::decode("0123456789").unwrap());
}

#[test]
fn generate_then_evaluate() {
    let f = Fixture::new();
    ok(&[
        "generate", "--vocab", s(&f.p("vocab.txt")), "--model", s(&f.p("lm.tsv")), "--target-freq",
        s(&f.p("target.freq")), "--model-freq", s(&f.p("model.freq")), "--count", "40", "--len", "60", "--key", KEY,
        "--out", s(&f.p("gen.txt")), "--records", s(&f.p("gen.json")),
    ]);
    let lines = std::fs::read_to_string(f.p("gen.txt")).unwrap();
    assert_eq!(lines.lines().count(), 40);
    let out = ok(&[
        "evaluate", "--generated", s(&f.p("gen.txt")), "--target", s(&common::data("target.txt")), "--vocab",
        s(&f.p("vocab.txt")), "--model", s(&f.p("lm.tsv")), "--records", s(&f.p("gen.json")), "--json", "--out",
        s(&f.p("report.json")),
    ]);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["schema"], 1);
    assert_eq!(v["streams"], 40);
    assert_eq!(v["embedding_rate"], 0.0);
    assert!(v["ppl_builtin"].as_f64().unwrap() > 1.0);
    assert!(v["distinct_n"]["2"].as_f64().unwrap() > 0.0);
    let saved: serde_json::Value = serde_json::from_slice(&std::fs::read(f.p("report.json")).unwrap()).unwrap();
    assert_eq!(saved, v);
}

#[test]
fn sweep_writes_one_row_per_cell() {
    let f = Fixture::new();
    ok(&[
        "sweep", "--vocab", s(&f.p("vocab.txt")), "--model", s(&f.p("lm.tsv")), "--target-freq",
        s(&f.p("target.freq")), "--model-freq", s(&f.p("model.freq")), "--alphas", "0,0.1,0.3", "--cs", "0,0.1",
        "--sessions", "3", "--msg-bits", "64", "--out", s(&f.p("sweep.csv")),
    ]);
    let csv = std::fs::read_to_string(f.p("sweep.csv")).unwrap();
    let rows: Vec<Vec<&str>> = csv.lines().map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 1 + 3 * 2);
    assert_eq!(rows[0][..3], ["alpha", "c", "codec"]);
    assert!(rows.iter().all(|r| r.len() == rows[0].len()));
    assert!(rows[1..].iter().all(|r| r[2] == "discop" && r[4] == "3"));
}

#[test]
fn merge_freq_adds_counts() {
    let f = Fixture::new();
    let total = |p: &str| {
        let out = ok(&[
            "build-freq", "--corpus", p, "--vocab", s(&f.p("vocab.txt")), "--out", s(&f.p("tmp.freq")), "--json",
        ]);
        serde_json::from_slice::<serde_json::Value>(&out.stdout).unwrap()["total"].as_u64().unwrap()
    };
    let both = total(s(&common::data("corpus.txt"))) + total(s(&common::data("target.txt")));
    let out = ok(&[
        "merge-freq", "--input", s(&f.p("model.freq")), s(&f.p("target.freq")), "--vocab", s(&f.p("vocab.txt")),
        "--out", s(&f.p("both.freq")), "--json",
    ]);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["total"].as_u64().unwrap(), both);
}

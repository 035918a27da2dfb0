//! Bridge protocol against a live `serve-mock` process.

mod common;

use std::io::{BufRead, BufReader, Cursor, Write};
use std::process::{Command, Stdio};
use std::time::Duration;

use stegotext::codecs::{CodecKind, SecretKey};
use stegotext::lm::bridge::{mock_reply, BridgeProvider};
use stegotext::pipeline::{SessionConfig, StegoSession};
use stegotext::reformer::ReformConfig;
use stegotext::StegoError;

const TIMEOUT: Duration = Duration::from_secs(20);

fn model_file(dir: &tempfile::TempDir, order: usize) -> (std::path::PathBuf, common::Toy) {
    let toy = common::toy();
    let path = dir.path().join("lm.tsv");
    std::fs::write(&path, toy.model(order).to_tsv()).unwrap();
    (path, toy)
}

fn mock_args(path: &std::path::Path) -> Vec<String> {
    vec!["serve-mock".into(), "--model".into(), path.to_str().unwrap().into()]
}

/// Replays the golden request/reply pairs over a server's stdio. Any server
/// implementing the protocol can be checked the same way.
#[test]
fn live_server_matches_golden_vectors() {
    let dir = tempfile::tempdir().unwrap();
    let (path, _) = model_file(&dir, 2);
    let golden = std::fs::read_to_string(common::data("golden/bridge_protocol.jsonl")).unwrap();
    let mut lines = golden.lines();
    let handshake = lines.next().unwrap();

    let mut child = Command::new(env!("CARGO_BIN_EXE_stegotext"))
        .args(mock_args(&path))
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut stdin = child.stdin.take().unwrap();
    let mut stdout = BufReader::new(child.stdout.take().unwrap());
    let mut read = || {
        let mut l = String::new();
        stdout.read_line(&mut l).unwrap();
        l.trim_end().to_string()
    };
    assert_eq!(read(), handshake);
    let mut checked = 0;
    for pair in lines {
        let v: serde_json::Value = serde_json::from_str(pair).unwrap();
        writeln!(stdin, "{}", v["request"].as_str().unwrap()).unwrap();
        stdin.flush().unwrap();
        assert_eq!(read(), v["reply"].as_str().unwrap());
        checked += 1;
    }
    assert!(checked >= 5);
    drop(stdin);
    assert!(child.wait().unwrap().success());
}

#[test]
fn spawned_provider_agrees_with_local_mock() {
    let dir = tempfile::tempdir().unwrap();
    let (path, toy) = model_file(&dir, 3);
    let model = toy.model(3);
    let mut p = BridgeProvider::spawn(env!("CARGO_BIN_EXE_stegotext"), &mock_args(&path), &toy.vocab.identity(), 20, TIMEOUT).unwrap();
    for ctx in [vec![], vec![3], vec![3, 7], vec![1, 2, 3, 4]] {
        let w = p.weights(&ctx).unwrap();
        assert_eq!(p.weights(&ctx).unwrap(), w, "repeated calls agree");
        let reply = mock_reply(&model, &format!(r#"{{"v":1,"op":"dist","ctx":{ctx:?},"precision":20}}"#));
        let expected: serde_json::Value = serde_json::from_str(&reply).unwrap();
        assert_eq!(serde_json::json!(w), expected["weights"]);
        assert_eq!(w.iter().sum::<u64>(), 1 << 20);
    }
}

#[test]
fn session_through_live_bridge_recovers_256_bits() {
    let dir = tempfile::tempdir().unwrap();
    let (path, toy) = model_file(&dir, 2);
    let rc = toy.reform(ReformConfig::default());
    let key = SecretKey::from_bytes([9; 32]);
    let message: Vec<bool> = (0..256).map(|i| (i * 7 + i / 5) % 3 == 0).collect();
    let mut cfg = SessionConfig::new(CodecKind::Discop);
    cfg.stop_tokens = vec![toy.vocab.eos_id().unwrap()];
    cfg.max_len = 4096;
    let open = || BridgeProvider::spawn(env!("CARGO_BIN_EXE_stegotext"), &mock_args(&path), &toy.vocab.identity(), 20, TIMEOUT).unwrap();
    let mut tx = StegoSession::new(open(), rc.clone(), key, cfg.clone()).unwrap();
    let out = tx.encode(&message).unwrap();
    assert!(out.is_complete());
    let mut rx = StegoSession::new(open(), rc, key, cfg).unwrap();
    assert_eq!(rx.decode(out.tokens()).unwrap().message, message);
}

#[test]
fn non_summing_reply_aborts_the_session() {
    let toy = common::toy();
    let v = toy.vocab.len();
    let handshake = serde_json::json!({"v": 1, "vocab_hash": toy.vocab.hash(), "vocab_size": v});
    let mut weights = vec![0u64; v];
    weights[1] = (1 << 20) - 1;
    let script = format!("{handshake}\n{}\n", serde_json::json!({"v": 1, "weights": weights}));
    let p = BridgeProvider::from_streams(Cursor::new(script.into_bytes()), std::io::sink(), &toy.vocab.identity(), 20, TIMEOUT).unwrap();
    let rc = toy.reform(ReformConfig::default());
    let mut s = StegoSession::new(p, rc, SecretKey::from_bytes([1; 32]), SessionConfig::new(CodecKind::Ac)).unwrap();
    match s.encode(&[true, false]) {
        Err(StegoError::Bridge(msg)) => assert!(msg.contains("sum"), "{msg}"),
        other => panic!("expected a bridge error, got {other:?}"),
    }
}

#[test]
fn server_error_reply_aborts_the_session() {
    let toy = common::toy();
    let handshake = serde_json::json!({"v": 1, "vocab_hash": toy.vocab.hash(), "vocab_size": toy.vocab.len()});
    let script = format!("{handshake}\n{{\"v\":1,\"error\":\"model exploded\"}}\n");
    let p = BridgeProvider::from_streams(Cursor::new(script.into_bytes()), std::io::sink(), &toy.vocab.identity(), 20, TIMEOUT).unwrap();
    let rc = toy.reform(ReformConfig::default());
    let mut s = StegoSession::new(p, rc, SecretKey::from_bytes([1; 32]), SessionConfig::new(CodecKind::Meteor)).unwrap();
    let err = s.encode(&[true]).unwrap_err();
    assert!(err.to_string().contains("model exploded"), "{err}");
}

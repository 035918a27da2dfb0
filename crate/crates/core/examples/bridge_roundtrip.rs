//! Runs a session against a distribution server over TCP. The server here
//! is the built-in mock; an external model server speaks the same protocol.

use std::io::BufReader;
use std::net::TcpListener;
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use num_rational::Ratio;
use stegotext::codecs::{bytes_to_bits, CodecKind, SecretKey};
use stegotext::corpus::{tokenize_corpus, train_ngram, Vocabulary};
use stegotext::lm::bridge::{serve_mock, BridgeProvider};
use stegotext::pipeline::{SessionConfig, StegoSession};
use stegotext::reformer::{ReformConfig, ReformContext};

const CORPUS: &[u8] = include_bytes!("../tests/data/corpus.txt");

fn main() -> anyhow::Result<()> {
    let vocab = Vocabulary::build_whitespace([std::str::from_utf8(CORPUS)?], 1, true)?;
    let model = Arc::new(train_ngram(&tokenize_corpus(CORPUS, &vocab)?, 2, Ratio::new(1, 10), &vocab)?);

    let listener = TcpListener::bind("127.0.0.1:0")?;
    let addr = listener.local_addr()?;
    let server_model = model.clone();
    thread::spawn(move || {
        // one connection per session end
        for stream in listener.incoming().take(2) {
            let stream = stream.expect("accept");
            let reader = BufReader::new(stream.try_clone().expect("clone"));
            serve_mock(&server_model, reader, stream).expect("serve");
        }
    });

    let rc = Arc::new(ReformContext::sequential_only(ReformConfig::default())?);
    let key = SecretKey::from_bytes([7; 32]);
    let mut cfg = SessionConfig::new(CodecKind::Discop);
    cfg.stop_tokens = vec![vocab.eos_id().expect("vocabulary has </s>")];
    cfg.max_len = 4096;
    let connect = || BridgeProvider::connect_tcp(addr, &vocab.identity(), cfg.precision, Duration::from_secs(10));

    let message = bytes_to_bits(b"over the wire");
    let out = StegoSession::new(connect()?, rc.clone(), key, cfg.clone())?.encode(&message)?;
    let back = StegoSession::new(connect()?, rc, key, cfg)?.decode(out.tokens())?;
    println!("server at {addr}: {} tokens carried {} bits", out.record.len(), message.len());
    assert_eq!(back.message, message);
    println!("receiver recovered the message");
    Ok(())
}

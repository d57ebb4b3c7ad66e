use std::io::{BufRead, BufReader, Write};
use std::net::TcpListener;
use std::thread;
use std::time::{Duration, Instant};

use pqml::scoring::{external_score, AdapterConfig, AdapterTransport, ExternalOutcome, ExternalScorer, ScoringError};
use pqml::{Fixed, QualityScore, ScoreDomain};

/// Serves one connection; `reply` maps a request line to the lines sent back.
fn tcp_stub(reply: impl Fn(u64, &str) -> Vec<String> + Send + 'static) -> String {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap().to_string();
    thread::spawn(move || {
        let (stream, _) = listener.accept().unwrap();
        let mut writer = stream.try_clone().unwrap();
        for line in BufReader::new(stream).lines() {
            let Ok(line) = line else { break };
            let req: serde_json::Value = serde_json::from_str(&line).unwrap();
            for out in reply(req["id"].as_u64().unwrap(), req["query"].as_str().unwrap()) {
                if writer.write_all(format!("{out}\n").as_bytes()).is_err() {
                    return;
                }
            }
        }
    });
    addr
}

fn tcp(addr: String, timeout_ms: u64) -> AdapterConfig {
    AdapterConfig {
        transport: AdapterTransport::Tcp { addr },
        timeout_ms,
        domain: ScoreDomain::default(),
    }
}

fn score(x: i64) -> ExternalOutcome {
    ExternalOutcome::Score(QualityScore(Fixed::from_micros(x)))
}

#[test]
fn tcp_raw_scores_are_normalized() {
    let addr = tcp_stub(|id, q| {
        let raw = if q == "good" { 0.5 } else { -1.0 };
        vec![format!("{{\"id\":{id},\"raw\":{raw}}}")]
    });
    let mut s = ExternalScorer::connect(&tcp(addr, 2000)).unwrap();
    assert_eq!(s.score("good", "r").unwrap(), score(7_500_000));
    assert_eq!(s.score("bad", "r").unwrap(), score(0));
}

#[test]
fn stalled_tcp_adapter_is_absent() {
    let addr = tcp_stub(|_, _| {
        thread::sleep(Duration::from_secs(30));
        vec![]
    });
    let start = Instant::now();
    let out = external_score(&tcp(addr, 200), "q", "r").unwrap();
    assert_eq!(out, ExternalOutcome::Absent);
    assert!(start.elapsed() < Duration::from_secs(5));
}

#[test]
fn stale_reply_is_skipped() {
    // the first reply arrives only after the second request
    let addr = tcp_stub(|id, _| {
        if id == 1 {
            vec![]
        } else {
            vec![
                r#"{"id":1,"raw":1.0}"#.to_string(),
                format!("{{\"id\":{id},\"raw\":0.0}}"),
            ]
        }
    });
    let mut s = ExternalScorer::connect(&tcp(addr, 150)).unwrap();
    assert_eq!(s.score("a", "r").unwrap(), ExternalOutcome::Absent);
    assert_eq!(s.score("b", "r").unwrap(), score(5_000_000));
}

#[test]
fn out_of_range_and_malformed_replies_are_errors() {
    let addr = tcp_stub(|id, q| match q {
        "high" => vec![format!("{{\"id\":{id},\"raw\":1.5}}")],
        "future" => vec![format!("{{\"id\":{},\"raw\":0.0}}", id + 5)],
        _ => vec!["not json".to_string()],
    });
    let mut s = ExternalScorer::connect(&tcp(addr, 2000)).unwrap();
    for q in ["high", "future", "junk"] {
        assert!(matches!(s.score(q, "r"), Err(ScoringError::Protocol(_))), "{q}");
    }
}

#[test]
fn stalled_process_adapter_is_absent_and_killed() {
    let cfg = AdapterConfig {
        transport: AdapterTransport::Process {
            program: "sh".into(),
            args: vec!["-c".into(), "sleep 30".into()],
        },
        timeout_ms: 200,
        domain: ScoreDomain::default(),
    };
    let start = Instant::now();
    assert_eq!(external_score(&cfg, "q", "r").unwrap(), ExternalOutcome::Absent);
    assert!(start.elapsed() < Duration::from_secs(5));
}

#[test]
fn process_adapter_replies() {
    let cfg = AdapterConfig {
        transport: AdapterTransport::Process {
            program: "sh".into(),
            args: vec!["-c".into(), r#"read line; echo '{"id":1,"raw":-0.5}'"#.into()],
        },
        timeout_ms: 5000,
        domain: ScoreDomain::default(),
    };
    assert_eq!(external_score(&cfg, "q", "r").unwrap(), score(2_500_000));
}

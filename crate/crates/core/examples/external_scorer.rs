//! Scores (query, response) pairs through an external adapter speaking
//! line-delimited JSON over TCP. The adapter here is a toy running in a
//! background thread; it rates longer responses higher and never answers
//! the query "stall".

use std::io::{BufRead, BufReader, Write};
use std::net::TcpListener;

use pqml::scoring::{AdapterConfig, AdapterTransport, ExternalScorer};
use pqml::ScoreDomain;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let listener = TcpListener::bind("127.0.0.1:0")?;
    let addr = listener.local_addr()?.to_string();
    std::thread::spawn(move || {
        let (stream, _) = listener.accept().expect("client connects");
        let mut out = stream.try_clone().expect("clone stream");
        for line in BufReader::new(stream).lines().map_while(Result::ok) {
            let req: serde_json::Value = serde_json::from_str(&line).expect("json request");
            if req["query"] == "stall" {
                continue;
            }
            let len = req["response"].as_str().unwrap_or("").len() as f64;
            let raw = (len / 20.0).min(2.0) - 1.0;
            writeln!(out, "{}", serde_json::json!({ "id": req["id"], "raw": raw })).expect("reply");
        }
    });

    let mut scorer = ExternalScorer::connect(&AdapterConfig {
        transport: AdapterTransport::Tcp { addr },
        timeout_ms: 300,
        domain: ScoreDomain::default(),
    })?;
    let pairs = [
        ("capital of France?", "Paris."),
        ("capital of France?", "The capital of France is Paris."),
        ("stall", "anything"),
        ("2+2?", "4"),
    ];
    for (q, r) in pairs {
        println!("{q:<20} {r:<34} -> {:?}", scorer.score(q, r)?);
    }
    Ok(())
}

//! Minimal external evaluator speaking the JSON-lines protocol.
//!
//! Reads `{"id": n, "genotype": [..]}` lines from stdin until EOF and
//! answers each with closed-form values:
//!
//! * accuracy = 0.25 + (Σ gᵢ) / 200, capped at 0.99
//! * latency_ms = 1 + Σ (i + 1)·gᵢ / 7
//!
//! Flags exercise failure handling: `--reverse` answers in reverse order,
//! `--bad-id` answers one id that was never sent, `--hang` never answers,
//! `--fail` exits with status 3 after answering.

use std::io::{self, BufRead, Write};

use serde::Deserialize;

#[derive(Deserialize)]
struct Request {
    id: u64,
    genotype: Vec<u8>,
}

fn main() -> io::Result<()> {
    let flags: Vec<String> = std::env::args().skip(1).collect();
    let has = |f: &str| flags.iter().any(|a| a == f);
    if has("--hang") {
        std::thread::sleep(std::time::Duration::from_secs(3600));
    }
    let mut requests = Vec::new();
    for line in io::stdin().lock().lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let req: Request = serde_json::from_str(&line).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
        requests.push(req);
    }
    if has("--reverse") {
        requests.reverse();
    }
    let mut out = io::stdout().lock();
    for r in &requests {
        let sum: f64 = r.genotype.iter().map(|&g| f64::from(g)).sum();
        let weighted: f64 = r.genotype.iter().enumerate().map(|(i, &g)| (i as f64 + 1.0) * f64::from(g)).sum();
        let accuracy = (0.25 + sum / 200.0).min(0.99);
        let latency_ms = 1.0 + weighted / 7.0;
        let id = if has("--bad-id") { r.id + 1_000_000 } else { r.id };
        let line = serde_json::json!({ "id": id, "accuracy": accuracy, "latency_ms": latency_ms, "worker": "echo" });
        writeln!(out, "{line}")?;
    }
    out.flush()?;
    if has("--fail") {
        std::process::exit(3);
    }
    Ok(())
}

//! Shared helpers for integration tests: a scripted HTTP stub and small
//! corpus fixtures.

#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use socialnav::dataset::{build_corpus, save_jsonl, DatasetHeader, DifficultyMix, Sample};
use socialnav::pedestrian_sim::SfmParams;
use socialnav::ranking_oracle::RolloutConfig;

#[derive(Debug, Clone)]
pub struct Reply {
    pub status: u16,
    pub body: String,
    pub delay: Duration,
}

impl Reply {
    /// 200 with a chat-completions body whose content is `text`.
    pub fn content(text: &str) -> Reply {
        let body = serde_json::json!({
            "choices": [{"index": 0, "message": {"role": "assistant", "content": text}}]
        });
        Reply {
            status: 200,
            body: body.to_string(),
            delay: Duration::ZERO,
        }
    }

    pub fn status(status: u16) -> Reply {
        Reply {
            status,
            body: format!("{{\"error\":\"status {status}\"}}"),
            delay: Duration::ZERO,
        }
    }

    pub fn delayed(mut self, delay: Duration) -> Reply {
        self.delay = delay;
        self
    }
}

#[derive(Debug, Clone)]
pub struct Recorded {
    pub path: String,
    pub authorization: Option<String>,
    pub body: String,
}

/// HTTP/1.1 server answering from a script; the last reply repeats.
pub struct Stub {
    pub url: String,
    pub requests: Arc<Mutex<Vec<Recorded>>>,
    active: Arc<AtomicUsize>,
    pub peak: Arc<AtomicUsize>,
}

impl Stub {
    pub fn start(script: Vec<Reply>) -> Stub {
        assert!(!script.is_empty());
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/v1", listener.local_addr().unwrap());
        let requests = Arc::new(Mutex::new(Vec::new()));
        let active = Arc::new(AtomicUsize::new(0));
        let peak = Arc::new(AtomicUsize::new(0));
        let next = Arc::new(AtomicUsize::new(0));
        let script = Arc::new(script);
        let (req, act, pk) = (requests.clone(), active.clone(), peak.clone());
        thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(stream) = stream else { continue };
                let (req, act, pk, next, script) = (req.clone(), act.clone(), pk.clone(), next.clone(), script.clone());
                thread::spawn(move || {
                    let now = act.fetch_add(1, Ordering::SeqCst) + 1;
                    pk.fetch_max(now, Ordering::SeqCst);
                    let k = next.fetch_add(1, Ordering::SeqCst);
                    let reply = script[k.min(script.len() - 1)].clone();
                    let _ = serve(stream, &req, &reply);
                    act.fetch_sub(1, Ordering::SeqCst);
                });
            }
        });
        Stub {
            url,
            requests,
            active,
            peak,
        }
    }

    pub fn count(&self) -> usize {
        self.requests.lock().unwrap().len()
    }

    pub fn bodies(&self) -> Vec<serde_json::Value> {
        self.requests
            .lock()
            .unwrap()
            .iter()
            .map(|r| serde_json::from_str(&r.body).unwrap())
            .collect()
    }
}

fn serve(stream: TcpStream, log: &Mutex<Vec<Recorded>>, reply: &Reply) -> std::io::Result<()> {
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut request_line = String::new();
    reader.read_line(&mut request_line)?;
    let path = request_line.split_whitespace().nth(1).unwrap_or("").to_string();
    let mut length = 0usize;
    let mut authorization = None;
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line)? == 0 || line == "\r\n" {
            break;
        }
        if let Some((k, v)) = line.split_once(':') {
            let v = v.trim().to_string();
            match k.to_ascii_lowercase().as_str() {
                "content-length" => length = v.parse().unwrap_or(0),
                "authorization" => authorization = Some(v),
                _ => {}
            }
        }
    }
    let mut body = vec![0u8; length];
    reader.read_exact(&mut body)?;
    log.lock().unwrap().push(Recorded {
        path,
        authorization,
        body: String::from_utf8_lossy(&body).into_owned(),
    });
    thread::sleep(reply.delay);
    let mut stream = stream;
    write!(
        stream,
        "HTTP/1.1 {} Stub\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{}",
        reply.status,
        reply.body.len(),
        reply.body
    )?;
    stream.flush()
}

pub fn small_corpus(n: usize, seed: u64) -> Vec<Sample> {
    build_corpus(n, seed, &DifficultyMix::default(), &RolloutConfig::default(), &SfmParams::default()).unwrap()
}

pub fn write_corpus(path: &Path, samples: &[Sample]) {
    save_jsonl(path, &DatasetHeader::default(), samples).unwrap();
}

/// Sets a uniquely named environment variable holding a fake key.
pub fn fake_key(name: &str) -> String {
    std::env::set_var(name, "test-key");
    name.to_string()
}

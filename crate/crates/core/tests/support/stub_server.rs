//! Minimal HTTP/1.1 server speaking just enough of the chat and embeddings
//! APIs for the gateway tests.
#![allow(dead_code)]

use std::collections::VecDeque;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

#[derive(Debug, Clone)]
pub struct Seen {
    pub path: String,
    pub headers: Vec<(String, String)>,
    pub body: String,
}

#[derive(Default)]
struct State {
    /// Statuses for upcoming chat requests; 200 once exhausted.
    script: Mutex<VecDeque<u16>>,
    seen: Mutex<Vec<Seen>>,
    in_flight: AtomicUsize,
    max_in_flight: AtomicUsize,
}

pub struct StubServer {
    pub url: String,
    state: Arc<State>,
}

pub const REPLY: &str = "The outline is closed. The strokes follow the boundary.";

impl StubServer {
    pub fn start(script: &[u16], delay: Duration) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}", listener.local_addr().unwrap());
        let state = Arc::new(State::default());
        state.script.lock().unwrap().extend(script.iter().copied());
        let st = state.clone();
        std::thread::spawn(move || {
            for conn in listener.incoming() {
                let Ok(conn) = conn else { continue };
                let st = st.clone();
                std::thread::spawn(move || handle(conn, &st, delay));
            }
        });
        Self { url, state }
    }

    pub fn chat_url(&self) -> String {
        format!("{}/v1/chat/completions", self.url)
    }

    pub fn embeddings_url(&self) -> String {
        format!("{}/v1/embeddings", self.url)
    }

    pub fn seen(&self) -> Vec<Seen> {
        self.state.seen.lock().unwrap().clone()
    }

    pub fn max_in_flight(&self) -> usize {
        self.state.max_in_flight.load(Ordering::SeqCst)
    }
}

fn handle(conn: TcpStream, st: &State, delay: Duration) {
    let mut reader = BufReader::new(conn.try_clone().unwrap());
    let mut request_line = String::new();
    if reader.read_line(&mut request_line).is_err() {
        return;
    }
    let path = request_line
        .split_whitespace()
        .nth(1)
        .unwrap_or("")
        .to_string();
    let mut headers = Vec::new();
    let mut len = 0usize;
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line).unwrap_or(0) == 0 {
            break;
        }
        let line = line.trim_end();
        if line.is_empty() {
            break;
        }
        if let Some((k, v)) = line.split_once(':') {
            let (k, v) = (k.trim().to_ascii_lowercase(), v.trim().to_string());
            if k == "content-length" {
                len = v.parse().unwrap_or(0);
            }
            headers.push((k, v));
        }
    }
    let mut body = vec![0; len];
    reader.read_exact(&mut body).unwrap();

    let now = st.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
    st.max_in_flight.fetch_max(now, Ordering::SeqCst);
    std::thread::sleep(delay);

    let is_embedding = path.contains("embeddings");
    let status = if is_embedding {
        200
    } else {
        st.script.lock().unwrap().pop_front().unwrap_or(200)
    };
    st.seen.lock().unwrap().push(Seen {
        path,
        headers,
        body: String::from_utf8_lossy(&body).into_owned(),
    });
    let payload = match (status, is_embedding) {
        (200, true) => r#"{"data":[{"embedding":[0.6,0.8,0.0]}]}"#.to_string(),
        (200, false) => serde_json::json!({
            "model": "stub-model",
            "choices": [{"message": {"role": "assistant", "content": REPLY}}],
            "usage": {"prompt_tokens": 11, "completion_tokens": 7},
        })
        .to_string(),
        _ => r#"{"error":{"message":"try later"}}"#.to_string(),
    };
    st.in_flight.fetch_sub(1, Ordering::SeqCst);
    let mut conn = conn;
    let _ = write!(
        conn,
        "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{payload}",
        payload.len()
    );
    let _ = conn.flush();
}

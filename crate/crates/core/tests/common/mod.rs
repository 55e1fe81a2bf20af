#![allow(dead_code)]

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use guided_clustering::oracle::{ChatRequest, ChatTransport, TransportError};

/// Answers prompts over synthetic texts ("sample i about topic c") by
/// comparing topics, and records how it was called.
#[derive(Default)]
pub struct ScriptedTransport {
    pub calls: AtomicUsize,
    pub in_flight: AtomicUsize,
    pub peak_in_flight: AtomicUsize,
    pub delay: Duration,
    /// Fail every call with a retryable error.
    pub fail: bool,
    pub prompts: Mutex<Vec<String>>,
}

impl ScriptedTransport {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn peak(&self) -> usize {
        self.peak_in_flight.load(Ordering::SeqCst)
    }
}

/// Topic named on the last line of `prompt` starting with `prefix`.
pub fn topic_after(prompt: &str, prefix: &str) -> Option<u64> {
    let line = prompt.lines().rev().find(|l| l.starts_with(prefix))?;
    line.rsplit("topic ").next()?.trim().parse().ok()
}

pub fn scripted_answer(prompt: &str) -> String {
    if let (Some(q), Some(c1), Some(c2)) = (
        topic_after(prompt, "Query:"),
        topic_after(prompt, "Choice 1:"),
        topic_after(prompt, "Choice 2:"),
    ) {
        return if c1 == q && c2 != q {
            "Choice 1".into()
        } else if c2 == q && c1 != q {
            "Choice 2".into()
        } else {
            "Either could be Choice 1 or Choice 2".into()
        };
    }
    match (topic_after(prompt, "Sentence 1:"), topic_after(prompt, "Sentence 2:")) {
        (Some(a), Some(b)) if a == b => "Yes".into(),
        (Some(_), Some(_)) => "No".into(),
        _ => "I cannot tell".into(),
    }
}

impl ChatTransport for ScriptedTransport {
    fn complete(&self, request: &ChatRequest) -> Result<String, TransportError> {
        let now = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        self.peak_in_flight.fetch_max(now, Ordering::SeqCst);
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.prompts.lock().unwrap().push(request.prompt.clone());
        if !self.delay.is_zero() {
            std::thread::sleep(self.delay);
        }
        self.in_flight.fetch_sub(1, Ordering::SeqCst);
        if self.fail {
            return Err(TransportError::Retryable("connection refused".into()));
        }
        Ok(scripted_answer(&request.prompt))
    }
}

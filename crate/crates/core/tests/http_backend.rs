use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use seasql::llm::{
    BackendError, CostLedger, Gateway, GatewayError, HttpBackend, HttpConfig, RetryPolicy,
};
use seasql::prompt::{PromptKind, PromptText};

/// Serves each canned (status, body) once, in order, and returns the request bodies.
fn serve(responses: Vec<(u16, &'static str)>) -> (String, thread::JoinHandle<Vec<String>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let base = format!("http://{}", listener.local_addr().unwrap());
    let handle = thread::spawn(move || {
        let mut bodies = Vec::new();
        for (status, body) in responses {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut len = 0usize;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if line == "\r\n" || line.is_empty() {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
            }
            let mut buf = vec![0; len];
            reader.read_exact(&mut buf).unwrap();
            bodies.push(String::from_utf8(buf).unwrap());
            let mut stream = stream;
            write!(
                stream,
                "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                body.len()
            )
            .unwrap();
        }
        bodies
    });
    (base, handle)
}

fn backend(base: String) -> Arc<HttpBackend> {
    Arc::new(HttpBackend::new(HttpConfig {
        api_base: base,
        model: "m1".into(),
        api_key: Some("k".into()),
        timeout: Duration::from_secs(5),
    }))
}

fn prompt() -> PromptText {
    PromptText {
        text: "### Question: hi\n### Response: SELECT".into(),
        kind: PromptKind::Generation,
    }
}

const OK: &str = r#"{"choices":[{"message":{"content":" 1"},"finish_reason":"stop"}],"usage":{"prompt_tokens":11,"completion_tokens":2}}"#;

#[test]
fn retries_rate_limit_then_succeeds() {
    let (base, server) = serve(vec![(429, "slow down"), (200, OK)]);
    let ledger = Arc::new(CostLedger::new());
    let gw = Gateway::new(backend(base), ledger.clone()).with_retry(RetryPolicy::immediate(2));
    let c = gw.complete(&prompt()).unwrap();
    assert_eq!(c.text, " 1");
    assert_eq!(c.attempts, 2);
    assert_eq!((c.usage.prompt_tokens, c.usage.completion_tokens), (11, 2));

    let entries = ledger.entries();
    assert_eq!(entries.len(), 1);
    assert_eq!(entries[0].calls, 1);
    assert_eq!(entries[0].model_tag, "m1");

    let bodies = server.join().unwrap();
    let sent: serde_json::Value = serde_json::from_str(&bodies[1]).unwrap();
    assert_eq!(sent["model"], "m1");
    assert_eq!(sent["temperature"], 0.0);
    assert_eq!(sent["messages"][0]["content"], prompt().text);
}

#[test]
fn gives_up_after_retry_budget() {
    let (base, server) = serve(vec![(503, ""), (503, ""), (503, "")]);
    let gw = Gateway::new(backend(base), Arc::new(CostLedger::new()))
        .with_retry(RetryPolicy::immediate(2));
    match gw.complete(&prompt()) {
        Err(GatewayError::RetriesExhausted { attempts, .. }) => assert_eq!(attempts, 3),
        other => panic!("unexpected {other:?}"),
    }
    server.join().unwrap();
}

#[test]
fn context_overflow_is_not_retried() {
    let (base, server) = serve(vec![(
        400,
        r#"{"error":{"code":"context_length_exceeded"}}"#,
    )]);
    let gw = Gateway::new(backend(base), Arc::new(CostLedger::new()))
        .with_retry(RetryPolicy::immediate(5));
    match gw.complete(&prompt()) {
        Err(GatewayError::Backend {
            source: BackendError::TokenLimit(_),
            ..
        }) => {}
        other => panic!("unexpected {other:?}"),
    }
    assert_eq!(server.join().unwrap().len(), 1);
}

#[test]
fn missing_usage_falls_back_to_estimate() {
    let body = r#"{"choices":[{"message":{"content":"abcd"}}]}"#;
    let (base, server) = serve(vec![(200, body)]);
    let gw = Gateway::new(backend(base), Arc::new(CostLedger::new()));
    let c = gw.complete(&prompt()).unwrap();
    assert_eq!(c.usage.completion_tokens, 1);
    assert_eq!(
        c.usage.prompt_tokens,
        (prompt().text.len() as u64).div_ceil(4)
    );
    server.join().unwrap();
}

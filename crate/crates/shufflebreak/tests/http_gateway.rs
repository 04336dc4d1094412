//! Wire-level tests of the HTTP backend against a local scripted server.

use shufflebreak::gateway::{
    ChatBackend, EndpointConfig, FinishReason, GatewayError, HttpChatBackend,
    HttpPerplexityScorer, ImageAttachment, ModelClient, PerplexityScorer, TargetRequest,
};
use std::sync::{Arc, Mutex};
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::net::TcpListener;

/// One scripted HTTP exchange: status line body, plus the captured request.
#[derive(Clone)]
struct Exchange {
    status: u16,
    body: String,
}

#[derive(Default)]
struct Captured {
    requests: Mutex<Vec<String>>,
}

/// Serves the scripted exchanges sequentially on a fresh local port.
async fn stub_server(exchanges: Vec<Exchange>) -> (String, Arc<Captured>) {
    let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
    let base_url = format!("http://{}", listener.local_addr().unwrap());
    let captured = Arc::new(Captured::default());
    let captured_inner = captured.clone();
    tokio::spawn(async move {
        for exchange in exchanges {
            let Ok((mut socket, _)) = listener.accept().await else {
                return;
            };
            let mut raw = Vec::new();
            let mut buf = [0u8; 4096];
            // Read headers, then the content-length body.
            let body_start = loop {
                let n = socket.read(&mut buf).await.unwrap_or(0);
                if n == 0 {
                    break None;
                }
                raw.extend_from_slice(&buf[..n]);
                if let Some(pos) = find_header_end(&raw) {
                    break Some(pos);
                }
            };
            let Some(body_start) = body_start else { return };
            let header_text = String::from_utf8_lossy(&raw[..body_start]).into_owned();
            let content_length = header_text
                .lines()
                .find_map(|l| l.to_ascii_lowercase().strip_prefix("content-length:").map(str::trim).map(str::to_string))
                .and_then(|v| v.parse::<usize>().ok())
                .unwrap_or(0);
            while raw.len() < body_start + 4 + content_length {
                let n = socket.read(&mut buf).await.unwrap_or(0);
                if n == 0 {
                    break;
                }
                raw.extend_from_slice(&buf[..n]);
            }
            captured_inner
                .requests
                .lock()
                .unwrap()
                .push(String::from_utf8_lossy(&raw).into_owned());
            let response = format!(
                "HTTP/1.1 {} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{}",
                exchange.status,
                exchange.body.len(),
                exchange.body
            );
            let _ = socket.write_all(response.as_bytes()).await;
            let _ = socket.shutdown().await;
        }
    });
    (base_url, captured)
}

fn find_header_end(raw: &[u8]) -> Option<usize> {
    raw.windows(4).position(|w| w == b"\r\n\r\n")
}

fn completion_body(content: &str, finish_reason: &str) -> String {
    serde_json::json!({
        "id": "chatcmpl-1",
        "choices": [{
            "index": 0,
            "message": {"role": "assistant", "content": content},
            "finish_reason": finish_reason
        }],
        "usage": {"prompt_tokens": 7, "completion_tokens": 3, "total_tokens": 10}
    })
    .to_string()
}

fn endpoint(base_url: &str, auth_env: Option<&str>) -> EndpointConfig {
    EndpointConfig {
        base_url: base_url.to_string(),
        model_name: "stub-model".to_string(),
        auth_env_var: auth_env.map(str::to_string),
        timeout_secs: 5,
        max_retries: 3,
        backoff_base_ms: 1,
        ..Default::default()
    }
}

#[tokio::test]
async fn completions_round_trip_with_auth_and_usage() {
    let (url, captured) = stub_server(vec![Exchange {
        status: 200,
        body: completion_body("hello back", "stop"),
    }])
    .await;
    std::env::set_var("HTTP_TEST_KEY_A", "sk-secret-a");
    let backend = HttpChatBackend::new(&endpoint(&url, Some("HTTP_TEST_KEY_A"))).unwrap();
    let reply = backend
        .complete(&TargetRequest::text_only("hello there".into()))
        .await
        .unwrap();
    assert_eq!(reply.content, "hello back");
    assert_eq!(reply.finish_reason, FinishReason::Stop);
    assert_eq!(reply.token_usage.unwrap().completion_tokens, 3);

    let seen = captured.requests.lock().unwrap();
    assert!(seen[0].contains("POST /chat/completions"));
    assert!(
        seen[0].to_ascii_lowercase().contains("authorization: bearer sk-secret-a"),
        "missing auth header in: {}",
        seen[0]
    );
    assert!(seen[0].contains("\"model\":\"stub-model\""));
    assert!(seen[0].contains("hello there"));
}

#[tokio::test]
async fn missing_credential_is_an_auth_error_without_a_request() {
    let (url, captured) = stub_server(vec![]).await;
    let backend = HttpChatBackend::new(&endpoint(&url, Some("HTTP_TEST_KEY_UNSET"))).unwrap();
    let err = backend
        .complete(&TargetRequest::text_only("hi".into()))
        .await
        .unwrap_err();
    assert!(matches!(err, GatewayError::Auth(_)));
    assert!(captured.requests.lock().unwrap().is_empty());
}

#[tokio::test]
async fn rate_limit_responses_are_retried_by_the_client() {
    let (url, captured) = stub_server(vec![
        Exchange {
            status: 429,
            body: r#"{"error": {"message": "slow down"}}"#.to_string(),
        },
        Exchange {
            status: 200,
            body: completion_body("after retry", "stop"),
        },
    ])
    .await;
    let client = ModelClient::new(
        Arc::new(HttpChatBackend::new(&endpoint(&url, None)).unwrap()),
        &endpoint(&url, None),
    );
    let response = client.query_text(&"retry please".into()).await.unwrap();
    assert_eq!(response.content, "after retry");
    assert_eq!(captured.requests.lock().unwrap().len(), 2);
}

#[tokio::test]
async fn auth_failures_surface_without_retries() {
    let (url, captured) = stub_server(vec![Exchange {
        status: 401,
        body: r#"{"error": {"message": "bad key"}}"#.to_string(),
    }])
    .await;
    let client = ModelClient::new(
        Arc::new(HttpChatBackend::new(&endpoint(&url, None)).unwrap()),
        &endpoint(&url, None),
    );
    let err = client.query_text(&"hi".into()).await.unwrap_err();
    assert!(matches!(err, GatewayError::Auth(_)));
    assert_eq!(captured.requests.lock().unwrap().len(), 1);
}

#[tokio::test]
async fn provider_safety_blocks_are_content_filter_responses() {
    let (url, _) = stub_server(vec![Exchange {
        status: 200,
        body: completion_body("I must decline.", "content_filter"),
    }])
    .await;
    let backend = HttpChatBackend::new(&endpoint(&url, None)).unwrap();
    let reply = backend
        .complete(&TargetRequest::text_only("blocked".into()))
        .await
        .unwrap();
    assert_eq!(reply.finish_reason, FinishReason::ContentFilter);
}

#[tokio::test]
async fn image_attachments_travel_as_data_urls() {
    let (url, captured) = stub_server(vec![Exchange {
        status: 200,
        body: completion_body("seen", "stop"),
    }])
    .await;
    let backend = HttpChatBackend::new(&endpoint(&url, None)).unwrap();
    let mut request = TargetRequest::text_only("describe".into());
    request.image = Some(ImageAttachment::png(vec![137, 80, 78, 71]));
    backend.complete(&request).await.unwrap();
    let seen = captured.requests.lock().unwrap();
    assert!(seen[0].contains("data:image/png;base64,"));
    assert!(seen[0].contains("image_url"));
}

#[tokio::test]
async fn malformed_payloads_are_protocol_errors() {
    let (url, _) = stub_server(vec![Exchange {
        status: 200,
        body: r#"{"not": "a completion"}"#.to_string(),
    }])
    .await;
    let backend = HttpChatBackend::new(&endpoint(&url, None)).unwrap();
    let err = backend
        .complete(&TargetRequest::text_only("hi".into()))
        .await
        .unwrap_err();
    assert!(matches!(err, GatewayError::Protocol(_)));
}

#[tokio::test]
async fn cli_live_attack_runs_end_to_end_over_http() {
    // One stub serves both roles: the target's reply first, the judge's
    // verdict second (clients use separate connections, served in order).
    let (url, captured) = stub_server(vec![
        Exchange {
            status: 200,
            body: completion_body("Sure, here are the exact steps.", "stop"),
        },
        Exchange {
            status: 200,
            body: completion_body("5", "stop"),
        },
    ])
    .await;
    let output = tokio::task::spawn_blocking(move || {
        std::process::Command::new(env!("CARGO_BIN_EXE_shufflebreak"))
            .env("TARGET_API_KEY", "k1")
            .env("JUDGE_API_KEY", "k2")
            .args([
                "attack",
                "--text",
                "about access acid",
                "--target-url",
                &url,
                "--target-model",
                "stub-target",
                "--judge-url",
                &url,
                "--judge-model",
                "stub-judge",
                "--i-understand-risks",
            ])
            .output()
            .unwrap()
    })
    .await
    .unwrap();
    assert_eq!(
        output.status.code(),
        Some(0),
        "stderr: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(
        stdout.contains("best_score=5 success=true target_queries=1"),
        "{stdout}"
    );
    let seen = captured.requests.lock().unwrap();
    assert_eq!(seen.len(), 2);
    assert!(seen[0].contains("stub-target"));
    assert!(seen[1].contains("stub-judge"));
}

#[tokio::test]
async fn perplexity_scorer_accepts_direct_values() {
    let (url, captured) = stub_server(vec![Exchange {
        status: 200,
        body: r#"{"perplexity": 42.0}"#.to_string(),
    }])
    .await;
    let scorer = HttpPerplexityScorer::new(&endpoint(&url, None)).unwrap();
    let score = scorer.score(&"some shuffled text".into()).await.unwrap();
    assert_eq!(score, 42.0);
    assert!(captured.requests.lock().unwrap()[0].contains("POST /perplexity"));
}

#[tokio::test]
async fn perplexity_scorer_derives_from_logprobs() {
    let (url, _) = stub_server(vec![Exchange {
        status: 200,
        body: r#"{"logprobs": [-1.0, -2.0, -3.0]}"#.to_string(),
    }])
    .await;
    let scorer = HttpPerplexityScorer::new(&endpoint(&url, None)).unwrap();
    let score = scorer.score(&"text".into()).await.unwrap();
    // exp(mean NLL) = exp(2).
    assert!((score - 2.0f64.exp()).abs() < 1e-12);
}

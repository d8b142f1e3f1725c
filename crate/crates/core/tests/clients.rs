use std::time::Duration;

use synvox_core::audio::Clip;
use synvox_core::clients::{Backoff, ChatRequest, ClientError, EndpointConfig, EndpointKind, ModelClient};
use synvox_stubs::{spawn, ChatMode, StubOptions};

fn fast(mut cfg: EndpointConfig) -> EndpointConfig {
    cfg.backoff = Backoff { base_ms: 5, cap_ms: 20 };
    cfg.timeout = 2.0;
    cfg
}

fn client(kind: EndpointKind, base: &str) -> ModelClient {
    ModelClient::with_token(fast(EndpointConfig::new(kind, base, "stub-model")), None).unwrap()
}

fn chat_request() -> ChatRequest {
    ChatRequest {
        system_prompt: "sys".into(),
        few_shot: vec![],
        user_prompt: "hello".into(),
        temperature: 0.7,
        batch_tag: "req-000001".into(),
    }
}

#[tokio::test]
async fn chat_returns_body_verbatim() {
    let body = "  {\"sentences\": []}\n trailing";
    let stub = spawn(StubOptions {
        chat_mode: ChatMode::Fixed(body.into()),
        ..Default::default()
    })
    .await
    .unwrap();
    let out = client(EndpointKind::Llm, &stub.base_url).complete_chat(&chat_request()).await.unwrap();
    assert_eq!(out, body);
}

#[tokio::test]
async fn two_server_errors_then_success() {
    let stub = spawn(StubOptions {
        chat_mode: ChatMode::Fixed("ok".into()),
        fail_first: 2,
        ..Default::default()
    })
    .await
    .unwrap();
    let out = client(EndpointKind::Llm, &stub.base_url).complete_chat(&chat_request()).await.unwrap();
    assert_eq!(out, "ok");
    assert_eq!(stub.stats.requests(), 3);
}

#[tokio::test]
async fn unauthorized_is_not_retried() {
    let stub = spawn(StubOptions {
        require_token: Some("secret".into()),
        ..Default::default()
    })
    .await
    .unwrap();
    let err = client(EndpointKind::Llm, &stub.base_url).complete_chat(&chat_request()).await.unwrap_err();
    assert!(matches!(err, ClientError::ProviderRejected { status: 401, .. }), "{err:?}");
    assert_eq!(stub.stats.requests(), 1);

    let cfg = fast(EndpointConfig::new(EndpointKind::Llm, &stub.base_url, "m"));
    let authed = ModelClient::with_token(cfg, Some("secret".into())).unwrap();
    assert!(authed.complete_chat(&chat_request()).await.is_ok());
}

#[tokio::test]
async fn timeouts_exhaust_retries() {
    let stub = spawn(StubOptions {
        delay: Duration::from_millis(400),
        ..Default::default()
    })
    .await
    .unwrap();
    let mut cfg = fast(EndpointConfig::new(EndpointKind::Tts, &stub.base_url, "m"));
    cfg.timeout = 0.1;
    cfg.max_retries = 2;
    let c = ModelClient::with_token(cfg, None).unwrap();
    match c.synthesize_speech("sannu").await {
        Err(ClientError::RetryExhausted { attempts, .. }) => assert_eq!(attempts, 3),
        other => panic!("{other:?}"),
    }
}

#[tokio::test]
async fn sine_fixture_has_16000_samples() {
    let stub = spawn(StubOptions {
        tts_sine_secs: Some(1.0),
        ..Default::default()
    })
    .await
    .unwrap();
    let clip = client(EndpointKind::Tts, &stub.base_url).synthesize_speech("anything").await.unwrap();
    assert_eq!(clip.samples.len(), 16000);
    assert_eq!(clip.sample_rate, 16000);
}

#[tokio::test]
async fn empty_text_rejected_locally() {
    let stub = spawn(StubOptions::default()).await.unwrap();
    let err = client(EndpointKind::Tts, &stub.base_url).synthesize_speech("  ").await.unwrap_err();
    assert!(matches!(err, ClientError::InvalidInput(_)));
    assert_eq!(stub.stats.requests(), 0);
}

#[tokio::test]
async fn tts_then_asr_recovers_text() {
    let stub = spawn(StubOptions {
        hallucinate_every: 0,
        ..Default::default()
    })
    .await
    .unwrap();
    let clip = client(EndpointKind::Tts, &stub.base_url).synthesize_speech("ina kwana?").await.unwrap();
    let text = client(EndpointKind::Asr, &stub.base_url).transcribe(&clip).await.unwrap();
    assert_eq!(text, "ina kwana?");
}

#[tokio::test]
async fn empty_transcript_is_valid() {
    let stub = spawn(StubOptions {
        asr_fixed: Some(String::new()),
        ..Default::default()
    })
    .await
    .unwrap();
    let clip = Clip::new(vec![0.1; 800], 16000);
    assert_eq!(client(EndpointKind::Asr, &stub.base_url).transcribe(&clip).await.unwrap(), "");
}

#[tokio::test]
async fn zero_length_audio_rejected() {
    let stub = spawn(StubOptions::default()).await.unwrap();
    let err = client(EndpointKind::Asr, &stub.base_url)
        .transcribe(&Clip::new(vec![], 16000))
        .await
        .unwrap_err();
    assert!(matches!(err, ClientError::InvalidInput(_)));
}

#[tokio::test]
async fn wrong_kind_rejected() {
    let stub = spawn(StubOptions::default()).await.unwrap();
    let err = client(EndpointKind::Asr, &stub.base_url).synthesize_speech("x").await.unwrap_err();
    assert!(matches!(err, ClientError::WrongKind { .. }));
}

#[tokio::test]
async fn parallelism_is_bounded() {
    let stub = spawn(StubOptions {
        delay: Duration::from_millis(50),
        chat_mode: ChatMode::Fixed("x".into()),
        ..Default::default()
    })
    .await
    .unwrap();
    let mut cfg = fast(EndpointConfig::new(EndpointKind::Llm, &stub.base_url, "m"));
    cfg.max_parallel = 3;
    let c = ModelClient::with_token(cfg, None).unwrap();
    let req = chat_request();
    let calls = (0..12).map(|_| c.complete_chat(&req));
    for r in futures::future::join_all(calls).await {
        r.unwrap();
    }
    assert_eq!(stub.stats.requests(), 12);
    assert!(stub.stats.max_in_flight() <= 3, "{}", stub.stats.max_in_flight());
    assert!(stub.stats.max_in_flight() >= 2);
}

#[test]
fn config_serialization_never_holds_token() {
    let mut cfg = EndpointConfig::new(EndpointKind::Llm, "http://localhost:1", "m");
    cfg.auth_token_env = "SYNVOX_TEST_TOKEN".into();
    let c = ModelClient::with_token(cfg.clone(), Some("sk-very-secret".into())).unwrap();
    let json = serde_json::to_string(c.config()).unwrap();
    assert!(!json.contains("sk-very-secret"));
    assert!(!format!("{c:?}").contains("sk-very-secret"));
}

#[test]
fn invalid_configs() {
    let mut cfg = EndpointConfig::new(EndpointKind::Llm, "http://localhost:1", "m");
    cfg.max_parallel = 0;
    assert!(cfg.validate().is_err());
    let mut cfg = EndpointConfig::new(EndpointKind::Llm, "http://localhost:1", "m");
    cfg.timeout = 0.0;
    assert!(cfg.validate().is_err());
}

use std::time::Duration;

use anyhow::Context;
use clap::Parser;
use synvox_stubs::{router, StubOptions};

/// Serve deterministic chat/TTS/ASR stand-ins on one port.
#[derive(Parser)]
struct Args {
    #[arg(long, default_value_t = 8089)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    /// Plant a hallucination on every Nth text (by hash); 0 disables.
    #[arg(long, default_value_t = 8)]
    hallucinate_every: u64,
    #[arg(long, default_value_t = 0.4)]
    question_share: f64,
    #[arg(long, default_value_t = 0)]
    delay_ms: u64,
    #[arg(long)]
    require_token: Option<String>,
}

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    let args = Args::parse();
    let opts = StubOptions {
        hallucinate_every: args.hallucinate_every,
        question_share: args.question_share,
        delay: Duration::from_millis(args.delay_ms),
        require_token: args.require_token,
        ..Default::default()
    };
    let (app, _) = router(opts);
    let addr = format!("{}:{}", args.host, args.port);
    let listener = tokio::net::TcpListener::bind(&addr)
        .await
        .with_context(|| format!("binding {addr}"))?;
    eprintln!("stub endpoints on http://{addr} (/chat, /tts, /asr)");
    axum::serve(listener, app).await?;
    Ok(())
}

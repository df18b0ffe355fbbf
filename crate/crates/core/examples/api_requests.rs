//! Answer a few API requests in-process; pass `--listen` to keep serving on
//! port 8080.

use std::sync::Arc;

use axum::body::Body;
use axum::http::Request;
use http_body_util::BodyExt;
use tower::ServiceExt;
use trajvis::fixtures::default_demo_cohort;
use trajvis::pipeline::{run_pipeline, PipelineOptions};
use trajvis::service::{router, AppState};

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let demo = default_demo_cohort()?;
    let fit = run_pipeline(&demo.cohort, &PipelineOptions::default())?;
    let state = Arc::new(AppState::new(fit.model, demo.cohort, fit.report)?);
    let app = router(state, None, false);
    for uri in ["/api/health", "/api/patients?q=427", "/api/enrichment?trajectory=fast_progression&phase=pre_fork", "/api/patient/0/profile"] {
        let resp = app.clone().oneshot(Request::get(uri).body(Body::empty())?).await?;
        let status = resp.status();
        let body = resp.into_body().collect().await?.to_bytes();
        let text = String::from_utf8_lossy(&body);
        println!("{status} {uri}\n  {}", text.chars().take(160).collect::<String>());
    }
    if std::env::args().any(|a| a == "--listen") {
        let listener = tokio::net::TcpListener::bind("127.0.0.1:8080").await?;
        println!("serving on http://127.0.0.1:8080/api/health");
        axum::serve(listener, app).await?;
    }
    Ok(())
}

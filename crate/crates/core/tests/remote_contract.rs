//! Client side of the scoring-service wire protocol, checked against an
//! in-process mock service.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;

use hsmp_core::error::ScoreError;
use hsmp_core::inference::{InferenceConfig, InferenceEngine, InferenceMode};
use hsmp_core::scoring::{
    OracleConfig, OracleScorer, RemoteConfig, RemoteScorer, ScoreRequest, ScoreResponse, Scorer,
};
use hsmp_core::synth::{generate_corpus, SynthConfig};
use hsmp_core::{HeaderLexicon, LabelSchema, PairInput, TemplateSet, Verbalizer};
use serde_json::json;
use tiny_http::{Method, Response, Server};

type Handler = dyn Fn(usize, &ScoreRequest) -> (u16, String) + Send + Sync;

struct Mock {
    endpoint: String,
    score_calls: Arc<AtomicUsize>,
}

/// Serves `/v1/info` with `max_batch` and hands each `/v1/score` body to
/// `handler` along with the 0-based call index.
fn mock(max_batch: usize, handler: Box<Handler>) -> Mock {
    let server = Server::http("127.0.0.1:0").expect("bind mock");
    let port = server.server_addr().to_ip().expect("ip listener").port();
    let score_calls = Arc::new(AtomicUsize::new(0));
    let calls = score_calls.clone();
    thread::spawn(move || {
        for mut req in server.incoming_requests() {
            let (status, body) = match (req.method(), req.url()) {
                (Method::Get, "/v1/info") => (
                    200,
                    json!({"max_batch": max_batch, "max_sequence_length": null, "model_id": "mock"})
                        .to_string(),
                ),
                (Method::Post, "/v1/score") => {
                    let n = calls.fetch_add(1, Ordering::SeqCst);
                    let mut raw = String::new();
                    req.as_reader().read_to_string(&mut raw).unwrap();
                    match serde_json::from_str::<ScoreRequest>(&raw) {
                        Ok(parsed) => handler(n, &parsed),
                        Err(e) => (400, e.to_string()),
                    }
                }
                _ => (404, String::new()),
            };
            let _ = req.respond(Response::from_string(body).with_status_code(status));
        }
    });
    Mock {
        endpoint: format!("http://127.0.0.1:{port}"),
        score_calls,
    }
}

fn ok_body(n: usize) -> String {
    json!({"scores": vec![0.75; n], "token_counts": vec![12; n], "model_id": "mock"}).to_string()
}

fn connect(m: &Mock) -> RemoteScorer {
    RemoteScorer::connect(RemoteConfig {
        endpoint: m.endpoint.clone(),
        max_retries: 3,
        initial_backoff_ms: 1,
        ..RemoteConfig::default()
    })
    .expect("connect to mock")
}

fn request(n: usize) -> ScoreRequest {
    ScoreRequest::new(
        (0..n)
            .map(|i| PairInput::new(format!("premise {i}"), "hypothesis"))
            .collect(),
    )
}

#[test]
fn info_and_aligned_scores() {
    let m = mock(8, Box::new(|_, r| (200, ok_body(r.len()))));
    let scorer = connect(&m);
    let info = scorer.info();
    assert_eq!(info.max_batch, 8);
    assert_eq!(info.model_id, "mock");
    let resp = scorer.score_batch(&request(5)).unwrap();
    assert_eq!(resp.scores, vec![0.75; 5]);
    assert_eq!(resp.token_counts, vec![12; 5]);
    assert_eq!(m.score_calls.load(Ordering::SeqCst), 1);
}

#[test]
fn request_serializes_with_wire_field_names() {
    let m = mock(
        4,
        Box::new(|_, r| {
            let ok = r.pairs[0].premise == "premise 0" && r.pairs[0].hypothesis == "hypothesis";
            if ok {
                (200, ok_body(r.len()))
            } else {
                (400, "bad fields".into())
            }
        }),
    );
    assert!(connect(&m).score_batch(&request(1)).is_ok());
}

#[test]
fn status_400_is_not_retried() {
    let m = mock(8, Box::new(|_, _| (400, "malformed".into())));
    let err = connect(&m).score_batch(&request(2)).unwrap_err();
    assert!(
        matches!(err, ScoreError::Status { status: 400, .. }),
        "{err}"
    );
    assert_eq!(m.score_calls.load(Ordering::SeqCst), 1);
}

#[test]
fn status_503_is_retried_until_success() {
    let m = mock(
        8,
        Box::new(|n, r| {
            if n < 2 {
                (503, "busy".into())
            } else {
                (200, ok_body(r.len()))
            }
        }),
    );
    let resp = connect(&m).score_batch(&request(3)).unwrap();
    assert_eq!(resp.scores.len(), 3);
    assert_eq!(m.score_calls.load(Ordering::SeqCst), 3);
}

#[test]
fn persistent_503_gives_up_after_max_retries() {
    let m = mock(8, Box::new(|_, _| (503, "busy".into())));
    let err = connect(&m).score_batch(&request(1)).unwrap_err();
    assert!(
        matches!(err, ScoreError::Status { status: 503, .. }),
        "{err}"
    );
    assert_eq!(m.score_calls.load(Ordering::SeqCst), 4);
}

#[test]
fn misaligned_response_is_rejected() {
    let m = mock(8, Box::new(|_, r| (200, ok_body(r.len() - 1))));
    let err = connect(&m).score_batch(&request(3)).unwrap_err();
    assert!(
        matches!(
            err,
            ScoreError::Misaligned {
                expected: 3,
                scores: 2,
                ..
            }
        ),
        "{err}"
    );
}

#[test]
fn out_of_range_score_is_rejected() {
    let m = mock(
        8,
        Box::new(|_, _| {
            (
                200,
                json!({"scores": [1.5], "token_counts": [3], "model_id": "mock"}).to_string(),
            )
        }),
    );
    let err = connect(&m).score_batch(&request(1)).unwrap_err();
    assert!(
        matches!(err, ScoreError::OutOfRange { index: 0, .. }),
        "{err}"
    );
}

#[test]
fn oversized_batch_never_reaches_the_service() {
    let m = mock(4, Box::new(|_, r| (200, ok_body(r.len()))));
    let err = connect(&m).score_batch(&request(5)).unwrap_err();
    assert!(
        matches!(err, ScoreError::BatchTooLarge { size: 5, max: 4 }),
        "{err}"
    );
    assert_eq!(m.score_calls.load(Ordering::SeqCst), 0);
}

#[test]
fn unreachable_endpoint_fails_to_connect() {
    let err = RemoteScorer::connect(RemoteConfig {
        endpoint: "http://127.0.0.1:1".into(),
        max_retries: 0,
        ..RemoteConfig::default()
    });
    assert!(err.is_err());
}

/// The engine over a remote service backed by an oracle must match the
/// engine over the oracle directly, with batches respecting the service limit.
#[test]
fn engine_over_remote_matches_local_oracle() {
    let schema = LabelSchema::standard();
    let corpus = generate_corpus(
        &SynthConfig {
            n_reports: 40,
            seed: 11,
            ..SynthConfig::default()
        },
        schema,
    )
    .unwrap();
    let lexicon = HeaderLexicon::default();
    let v = Verbalizer::new(schema, &TemplateSet::english()).unwrap();
    let oracle = Arc::new(
        OracleScorer::from_corpus(OracleConfig::default(), v.clone(), &corpus, &lexicon, None)
            .unwrap(),
    );
    let served = oracle.clone();
    let max_seen = Arc::new(AtomicUsize::new(0));
    let seen = max_seen.clone();
    let m = mock(
        16,
        Box::new(move |_, r| {
            seen.fetch_max(r.len(), Ordering::SeqCst);
            match served.score_batch(r) {
                Ok(ScoreResponse {
                    scores,
                    token_counts,
                    ..
                }) => (
                    200,
                    json!({"scores": scores, "token_counts": token_counts, "model_id": "mock"})
                        .to_string(),
                ),
                Err(e) => (400, e.to_string()),
            }
        }),
    );
    let remote = connect(&m);
    let targets = schema.cells().to_vec();
    let config = InferenceConfig {
        parallelism: 4,
        ..InferenceConfig::default()
    };
    let local =
        InferenceEngine::new(oracle.as_ref(), &v, &lexicon, &targets, config.clone()).unwrap();
    let over_wire = InferenceEngine::new(&remote, &v, &lexicon, &targets, config).unwrap();
    for mode in [InferenceMode::Flat, InferenceMode::Hierarchical] {
        let a = local.run_corpus(&corpus, mode).unwrap();
        let b = over_wire.run_corpus(&corpus, mode).unwrap();
        assert_eq!(a.predictions, b.predictions);
        assert_eq!(a.efficiency.pairs, b.efficiency.pairs);
    }
    assert!(max_seen.load(Ordering::SeqCst) <= 16);
}

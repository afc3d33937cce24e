use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use spanrel::predict::{WirePrediction, WireRequest, WireResponse};
use spanrel::synth::{synthetic_corpus, synthetic_schema};
use spanrel::*;

#[derive(Clone, Copy, PartialEq)]
enum Behavior {
    Answer,
    DropLast,
    AddUnknown,
    Duplicate,
    FailFirst,
    AlwaysFail,
    BadRequest,
    UnhealthyStatus,
    Golden,
}

struct Mock {
    url: String,
    server: Arc<tiny_http::Server>,
    handle: Option<JoinHandle<()>>,
    batches: Arc<Mutex<Vec<usize>>>,
}

impl Drop for Mock {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

/// First whitespace-separated word of the context, scored by question length.
fn answer(id: &str, context: &str, question: &str) -> WirePrediction {
    let word: String = context.chars().take_while(|c| !c.is_whitespace()).collect();
    WirePrediction {
        id: id.to_string(),
        start_char: Some(0),
        end_char: Some(word.chars().count()),
        text: word,
        span_score: question.len() as f64 / 10.0,
        null_score: 2.0,
    }
}

fn json_response(status: u16, body: String) -> tiny_http::Response<std::io::Cursor<Vec<u8>>> {
    tiny_http::Response::from_string(body)
        .with_status_code(status)
        .with_header("Content-Type: application/json".parse::<tiny_http::Header>().unwrap())
}

fn start(behavior: Behavior) -> Mock {
    let server = Arc::new(tiny_http::Server::http("127.0.0.1:0").expect("bind"));
    let url = format!("http://{}", server.server_addr().to_ip().expect("ip address"));
    let batches = Arc::new(Mutex::new(Vec::new()));
    let calls = Arc::new(AtomicUsize::new(0));
    let (srv, seen) = (server.clone(), batches.clone());
    let handle = std::thread::spawn(move || {
        for mut req in srv.incoming_requests() {
            let resp = match (req.method(), req.url()) {
                (tiny_http::Method::Get, "/v1/health") => {
                    let status = if behavior == Behavior::UnhealthyStatus { "loading" } else { "ok" };
                    json_response(200, format!("{{\"status\":\"{status}\"}}"))
                }
                (tiny_http::Method::Post, "/v1/predict") => {
                    let mut body = String::new();
                    std::io::Read::read_to_string(req.as_reader(), &mut body).unwrap();
                    let request: WireRequest = serde_json::from_str(&body).unwrap();
                    seen.lock().unwrap().push(request.items.len());
                    let n = calls.fetch_add(1, Ordering::SeqCst);
                    let mut preds: Vec<WirePrediction> =
                        request.items.iter().map(|i| answer(&i.id, &i.context, &i.question)).collect();
                    match behavior {
                        Behavior::DropLast => {
                            preds.pop();
                        }
                        Behavior::AddUnknown => preds.push(answer("nobody::asked::fwd", "x", "q")),
                        Behavior::Duplicate => {
                            let first = preds[0].clone();
                            preds.push(first);
                        }
                        _ => {}
                    }
                    preds.reverse();
                    match behavior {
                        Behavior::Golden => json_response(200, golden("response.json")),
                        Behavior::FailFirst if n == 0 => json_response(503, "{\"error\":\"warming up\"}".into()),
                        Behavior::AlwaysFail => json_response(500, "{\"error\":\"boom\"}".into()),
                        Behavior::BadRequest => json_response(400, "{\"error\":\"bad\"}".into()),
                        _ => json_response(200, serde_json::to_string(&WireResponse { predictions: preds }).unwrap()),
                    }
                }
                _ => json_response(404, "{}".into()),
            };
            let _ = req.respond(resp);
        }
    });
    Mock {
        url,
        server,
        handle: Some(handle),
        batches,
    }
}

fn dataset(n: usize) -> SpDataset {
    let (ds, _) = reduce_dataset(&synthetic_corpus(n, 2), &synthetic_schema(), Variant::Question, "remote", 1).unwrap();
    ds
}

fn config(url: &str, batch_size: usize, max_in_flight: usize) -> RemoteConfig {
    RemoteConfig {
        batch_size,
        max_in_flight,
        retries: 1,
        timeout: Duration::from_secs(10),
        ..RemoteConfig::new(url)
    }
}

#[test]
fn answers_every_question_in_batches() {
    let mock = start(Behavior::Answer);
    let ds = dataset(20);
    let set = remote_predict(&config(&mock.url, 7, 3), &ds).unwrap();
    assert_eq!(set.len(), ds.len());
    set.validate_against(&ds).unwrap();
    let mut sizes = mock.batches.lock().unwrap().clone();
    sizes.sort_unstable();
    assert_eq!(sizes.iter().sum::<usize>(), ds.len());
    assert!(sizes.iter().all(|&s| s <= 7));
    assert_eq!(sizes.len(), ds.len().div_ceil(7));
}

#[test]
fn batch_size_and_concurrency_do_not_change_results() {
    let mock = start(Behavior::Answer);
    let ds = dataset(15);
    let reference = remote_predict(&config(&mock.url, 1, 1), &ds).unwrap();
    for (b, k) in [(4, 2), (64, 4), (5, 8)] {
        let other = remote_predict(&config(&mock.url, b, k), &ds).unwrap();
        assert_eq!(other.by_qid, reference.by_qid, "batch {b}, in flight {k}");
    }
}

#[test]
fn missing_prediction_is_incomplete_coverage() {
    let mock = start(Behavior::DropLast);
    let err = remote_predict(&config(&mock.url, 8, 2), &dataset(10)).unwrap_err();
    match err {
        Error::IncompleteCoverage(qids) => assert!(!qids.is_empty()),
        other => panic!("unexpected {other}"),
    }
}

#[test]
fn unknown_qid_is_a_protocol_error() {
    let mock = start(Behavior::AddUnknown);
    let err = remote_predict(&config(&mock.url, 8, 2), &dataset(10)).unwrap_err();
    assert!(matches!(&err, Error::Protocol(m) if m.contains("unknown qid")), "{err}");
}

#[test]
fn duplicate_qid_is_a_protocol_error() {
    let mock = start(Behavior::Duplicate);
    let err = remote_predict(&config(&mock.url, 8, 1), &dataset(10)).unwrap_err();
    assert!(matches!(&err, Error::Protocol(m) if m.contains("duplicate qid")), "{err}");
}

#[test]
fn transient_failure_is_retried() {
    let mock = start(Behavior::FailFirst);
    let ds = dataset(5);
    let set = remote_predict(&config(&mock.url, 100, 1), &ds).unwrap();
    assert_eq!(set.len(), ds.len());
}

#[test]
fn persistent_failure_gives_up() {
    let mock = start(Behavior::AlwaysFail);
    let err = remote_predict(&config(&mock.url, 100, 1), &dataset(5)).unwrap_err();
    assert!(matches!(err, Error::Connection { .. }), "{err}");
    assert_eq!(mock.batches.lock().unwrap().len(), 2);
}

#[test]
fn client_error_is_not_retried() {
    let mock = start(Behavior::BadRequest);
    let err = remote_predict(&config(&mock.url, 100, 1), &dataset(5)).unwrap_err();
    assert!(matches!(err, Error::Protocol(_)), "{err}");
    assert_eq!(mock.batches.lock().unwrap().len(), 1);
}

#[test]
fn unhealthy_service_is_rejected_before_any_batch() {
    let mock = start(Behavior::UnhealthyStatus);
    let err = remote_predict(&config(&mock.url, 100, 1), &dataset(5)).unwrap_err();
    assert!(err.to_string().contains("health check failed"), "{err}");
    assert!(mock.batches.lock().unwrap().is_empty());
}

#[test]
fn dead_endpoint_fails_health_check() {
    // Bind and drop to get a port nobody listens on.
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let err = remote_predict(&config(&format!("http://127.0.0.1:{port}"), 8, 1), &dataset(3)).unwrap_err();
    assert!(matches!(err, Error::Connection { .. }));
    assert!(err.to_string().contains("health check failed"), "{err}");
}

fn golden(name: &str) -> String {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/wire").join(name);
    std::fs::read_to_string(path).unwrap()
}

fn figure_rc() -> RcInstance {
    RcInstance {
        id: "e1".into(),
        tokens: ["John", "was", "born", "on", "1991"].map(String::from).to_vec(),
        subj: TokenSpan::new(0, 0),
        obj: TokenSpan::new(4, 4),
        subj_type: "PERSON".into(),
        obj_type: "DATE".into(),
        relation: "per:date_of_birth".into(),
        gold: None,
    }
}

fn figure_ds() -> SpDataset {
    reduce_dataset(&[figure_rc()], &RelationSchema::tacred(), Variant::Question, "figure", 1).unwrap().0
}

#[test]
fn golden_request_matches_what_the_client_sends() {
    let ds = figure_ds();
    let request = WireRequest {
        items: ds
            .instances
            .iter()
            .map(|i| spanrel::predict::WireItem {
                id: i.qid.clone(),
                context: i.context.clone(),
                question: i.question.clone(),
            })
            .collect(),
    };
    let expected: WireRequest = serde_json::from_str(&golden("request.json")).unwrap();
    assert_eq!(request, expected);
}

#[test]
fn golden_response_is_accepted() {
    let response: WireResponse = serde_json::from_str(&golden("response.json")).unwrap();
    let ids: Vec<&str> = response.predictions.iter().map(|p| p.id.as_str()).collect();
    let ds = figure_ds();
    let mut qids: Vec<&str> = ds.qids().collect();
    let mut sorted = ids.clone();
    sorted.sort_unstable();
    qids.sort_unstable();
    assert_eq!(sorted, qids);
    for p in &response.predictions {
        let inst = ds.get(&p.id).unwrap();
        if let (Some(s), Some(e)) = (p.start_char, p.end_char) {
            let slice: String = inst.context.chars().skip(s).take(e - s).collect();
            assert_eq!(slice, p.text);
        } else {
            assert!(p.text.is_empty());
        }
    }
}

#[test]
fn golden_response_replayed_through_the_client() {
    let mock = start(Behavior::Golden);
    let ds = figure_ds();
    let set = remote_predict(&config(&mock.url, 4, 1), &ds).unwrap();
    let fwd = set.get("e1::per:date_of_birth::fwd").unwrap();
    assert_eq!(fwd.char_span, Some(CharSpan::new(17, 21)));
    assert_eq!(fwd.margin(), 8.75);
    assert_eq!(set.get("e1::per:date_of_death::rev").unwrap().char_span, None);
    let report = spanrel::decode::decode_multiclass(
        &figure_rc(),
        &RelationSchema::tacred(),
        &set,
        &ThresholdTable::uniform(0.0),
        &DecodingConfig::default(),
    )
    .unwrap();
    assert_eq!(report.label, "per:date_of_birth");
}

//! The HTTP client against a scripted in-process server.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use image::{Rgb, RgbImage};
use mvground_core::backend::codec::decode_png_b64;
use mvground_core::backend::mock::mock_attention;
use mvground_core::backend::wire::{AttentionResponse, ATTENTION_PATH, GROUND_PATH};
use mvground_core::backend::{
    ground, AttentionCall, BackendError, DecodeParams, GroundingBackend, GroundingCall, HttpBackend, MockModelSpec,
    RetryPolicy, Screenshot,
};
use mvground_core::geometry::{point_in_rect, Point, Rect};
use mvground_core::views::{Padding, View, ViewSource};
use mvground_core::{run_mvp, MvpConfig, MvpInput, QueryMode, RowKind, RunOptions};
use serde_json::Value;

type Handler = dyn Fn(&str, &Value, usize) -> (u16, String) + Send + Sync;

struct FakeServer {
    url: String,
    log: Arc<Mutex<Vec<(String, Value)>>>,
}

impl FakeServer {
    /// `handler(path, body, n)` gets the 0-based index of the request.
    fn start(handler: impl Fn(&str, &Value, usize) -> (u16, String) + Send + Sync + 'static) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}", listener.local_addr().unwrap());
        let log = Arc::new(Mutex::new(Vec::new()));
        let handler: Arc<Handler> = Arc::new(handler);
        let server_log = log.clone();
        std::thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(stream) = stream else { continue };
                let (log, handler) = (server_log.clone(), handler.clone());
                std::thread::spawn(move || serve(stream, &log, &*handler));
            }
        });
        Self { url, log }
    }

    fn requests(&self) -> Vec<(String, Value)> {
        self.log.lock().unwrap().clone()
    }
}

fn serve(stream: TcpStream, log: &Mutex<Vec<(String, Value)>>, handler: &Handler) {
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut request_line = String::new();
    if reader.read_line(&mut request_line).unwrap_or(0) == 0 {
        return;
    }
    let path = request_line.split_whitespace().nth(1).unwrap_or("").to_string();
    let mut content_length = 0usize;
    loop {
        let mut line = String::new();
        reader.read_line(&mut line).unwrap();
        let line = line.trim_end();
        if line.is_empty() {
            break;
        }
        if let Some((k, v)) = line.split_once(':') {
            if k.eq_ignore_ascii_case("content-length") {
                content_length = v.trim().parse().unwrap();
            }
        }
    }
    let mut body = vec![0u8; content_length];
    reader.read_exact(&mut body).unwrap();
    let json: Value = serde_json::from_slice(&body).unwrap_or(Value::Null);
    let n = {
        let mut log = log.lock().unwrap();
        log.push((path.clone(), json.clone()));
        log.len() - 1
    };
    let (status, text) = handler(&path, &json, n);
    let mut out = stream;
    let _ = write!(
        out,
        "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{text}",
        text.len()
    );
}

fn fixture(name: &str) -> String {
    std::fs::read_to_string(format!("{}/tests/fixtures/wire/{name}", env!("CARGO_MANIFEST_DIR"))).unwrap()
}

fn fast_retry() -> RetryPolicy {
    RetryPolicy { max_attempts: 3, base_delay: Duration::from_millis(1), max_delay: Duration::from_millis(5) }
}

fn client(url: &str) -> HttpBackend {
    HttpBackend::new(url, Duration::from_secs(10), fast_retry()).unwrap()
}

fn gradient(w: u32, h: u32) -> Screenshot {
    Screenshot::from_rgb(RgbImage::from_fn(w, h, |x, y| Rgb([(x % 256) as u8, (y % 256) as u8, 90])))
}

fn call<'a>(s: &'a Screenshot, view: &'a View, params: &'a DecodeParams) -> GroundingCall<'a> {
    GroundingCall { screenshot: s, instruction: "open settings", view, target: None, call_idx: 0, params }
}

fn attention_call(s: &Screenshot) -> AttentionCall<'_> {
    AttentionCall { screenshot: s, instruction: "open settings", layer: 20, query_mode: QueryMode::Comma, target: None }
}

#[test]
fn ground_round_trip_sends_the_original_image() {
    let server = FakeServer::start(|_, _, _| (200, fixture("ground_response.json")));
    let s = gradient(64, 48);
    let view = View::original(s.dims());
    let params = DecodeParams::default();
    let out = ground(&client(&server.url), &call(&s, &view, &params)).unwrap();
    assert_eq!(out.raw_text, "The save icon is at (612, 344).");
    assert_eq!(out.parsed, Point::in_view(612.0, 344.0, 0));

    let reqs = server.requests();
    assert_eq!(reqs.len(), 1);
    let (path, body) = &reqs[0];
    assert_eq!(path, GROUND_PATH);
    assert_eq!(body["instruction"], "open settings");
    assert_eq!(body["params"]["temperature"], 0.0);
    let mut keys: Vec<_> = body.as_object().unwrap().keys().cloned().collect();
    keys.sort();
    assert_eq!(keys, vec!["image_b64", "instruction", "params"]);
    let img = decode_png_b64(body["image_b64"].as_str().unwrap()).unwrap();
    assert_eq!(&img, s.pixels().unwrap());
}

#[test]
fn crop_views_are_sent_as_resized_canvases() {
    let server = FakeServer::start(|_, _, _| (200, r#"{"raw_text":"(1, 2)"}"#.into()));
    let s = gradient(64, 48);
    let crop = View {
        id: 1,
        rect: Rect::new(8, 8, 32, 24),
        alpha: 2.0,
        rank: 3,
        source: ViewSource::AttentionCrop,
        pad: Padding::default(),
    };
    let padded = View { id: 2, rect: Rect::new(0, 0, 64, 48), alpha: 1.0, pad: Padding::on(mvground_core::views::Side::Right, 28), ..crop };
    let params = DecodeParams::default();
    let b = client(&server.url);
    b.generate(&call(&s, &crop, &params)).unwrap();
    b.generate(&call(&s, &padded, &params)).unwrap();
    let reqs = server.requests();
    let dims: Vec<_> = reqs
        .iter()
        .map(|(_, body)| decode_png_b64(body["image_b64"].as_str().unwrap()).unwrap().dimensions())
        .collect();
    assert_eq!(dims, vec![(64, 48), (92, 48)]);
}

#[test]
fn attention_flat_and_nested() {
    let server = FakeServer::start(|_, _, n| {
        (200, if n == 0 { fixture("attention_response_flat.json") } else { fixture("attention_response_nested.json") })
    });
    let s = gradient(84, 56);
    let b = client(&server.url);
    let flat = b.attention(&attention_call(&s)).unwrap();
    assert_eq!(flat.kind, RowKind::Logits);
    assert_eq!((flat.grid.rows, flat.grid.cols, flat.heads), (2, 3, 2));
    assert_eq!(flat.values.len(), 12);
    let nested = b.attention(&attention_call(&s)).unwrap();
    assert_eq!(nested.kind, RowKind::Probabilities);
    assert_eq!(nested.values[1], 0.6);

    let (path, body) = &server.requests()[0];
    assert_eq!(path, ATTENTION_PATH);
    assert_eq!(body["layer"], 20);
    assert_eq!(body["query_mode"], "comma");
    let img = decode_png_b64(body["image_b64"].as_str().unwrap()).unwrap();
    assert_eq!(img.dimensions(), (84, 56));
}

#[test]
fn retries_transient_statuses() {
    let server = FakeServer::start(|_, _, n| match n {
        0 => (503, fixture("error_response.json")),
        1 => (429, String::new()),
        _ => (200, r#"{"raw_text":"(5, 6)"}"#.into()),
    });
    let s = gradient(16, 16);
    let view = View::original(s.dims());
    let params = DecodeParams::default();
    assert_eq!(client(&server.url).generate(&call(&s, &view, &params)).unwrap(), "(5, 6)");
    assert_eq!(server.requests().len(), 3);
}

#[test]
fn gives_up_after_max_attempts() {
    let server = FakeServer::start(|_, _, _| (502, r#"{"error":"upstream down"}"#.into()));
    let s = gradient(16, 16);
    let view = View::original(s.dims());
    let params = DecodeParams::default();
    let err = client(&server.url).generate(&call(&s, &view, &params)).unwrap_err();
    assert_eq!(err, BackendError::Rejected { status: 502, message: "upstream down".into() });
    assert_eq!(server.requests().len(), 3);
}

#[test]
fn client_errors_are_not_retried() {
    let server = FakeServer::start(|_, _, _| (400, fixture("error_response.json")));
    let s = gradient(16, 16);
    let view = View::original(s.dims());
    let params = DecodeParams::default();
    let err = client(&server.url).generate(&call(&s, &view, &params)).unwrap_err();
    assert_eq!(
        err,
        BackendError::Rejected { status: 400, message: "layer 99 out of range (model has 28 layers)".into() }
    );
    assert_eq!(server.requests().len(), 1);
}

#[test]
fn unreachable_host_is_a_transport_error() {
    let s = gradient(16, 16);
    let view = View::original(s.dims());
    let params = DecodeParams::default();
    let b = HttpBackend::new("http://127.0.0.1:1", Duration::from_secs(2), fast_retry()).unwrap();
    match b.generate(&call(&s, &view, &params)) {
        Err(BackendError::Transport { attempts, .. }) => assert_eq!(attempts, 3),
        other => panic!("expected transport error, got {other:?}"),
    }
}

#[test]
fn missing_attention_endpoint_is_reported_as_unavailable() {
    let server = FakeServer::start(|_, _, _| (404, r#"{"error":"no such route"}"#.into()));
    let s = gradient(16, 16);
    let err = client(&server.url).attention(&attention_call(&s)).unwrap_err();
    assert_eq!(err, BackendError::AttentionUnavailable("no such route".into()));
}

#[test]
fn malformed_success_bodies_are_protocol_errors() {
    let server = FakeServer::start(|path, _, _| {
        if path == GROUND_PATH {
            (200, r#"{"text":"(1, 2)"}"#.into())
        } else {
            (200, r#"{"grid":{"rows":1,"cols":2,"patch_w":28,"patch_h":28},"kind":"probabilities","heads":1,"values":[0.9,0.9]}"#.into())
        }
    });
    let s = gradient(16, 16);
    let view = View::original(s.dims());
    let params = DecodeParams::default();
    let b = client(&server.url);
    assert!(matches!(b.generate(&call(&s, &view, &params)), Err(BackendError::Protocol(_))));
    assert!(matches!(b.attention(&attention_call(&s)), Err(BackendError::Protocol(_))));
}

#[test]
fn synthetic_screenshots_cannot_be_sent() {
    let s = Screenshot::synthetic(mvground_core::ImageDims::new(100, 100).unwrap(), "k");
    let view = View::original(s.dims());
    let params = DecodeParams::default();
    let b = client("http://127.0.0.1:1");
    assert_eq!(b.generate(&call(&s, &view, &params)), Err(BackendError::MissingPixels));
}

#[test]
fn fixtures_survive_a_serde_round_trip() {
    for name in ["attention_response_flat.json", "attention_response_nested.json"] {
        let parsed: AttentionResponse = serde_json::from_str(&fixture(name)).unwrap();
        let rows = parsed.clone().into_rows().unwrap();
        let again: AttentionResponse =
            serde_json::from_str(&serde_json::to_string(&AttentionResponse::from_rows(&rows)).unwrap()).unwrap();
        assert_eq!(again.into_rows().unwrap(), rows);
    }
}

#[test]
fn full_pipeline_over_http() {
    // the server plays a model that always answers the canvas center
    let server = FakeServer::start(|path, body, _| {
        let img = decode_png_b64(body["image_b64"].as_str().unwrap()).unwrap();
        let (w, h) = img.dimensions();
        if path == ATTENTION_PATH {
            let dims = mvground_core::ImageDims::new(w, h).unwrap();
            let gt = Rect::new(w / 2, h / 2, 8, 8);
            let rows = mock_attention(&MockModelSpec::default(), b"srv", dims, Some(&gt));
            (200, serde_json::to_string(&AttentionResponse::from_rows(&rows)).unwrap())
        } else {
            (200, format!(r#"{{"raw_text":"click({}, {})"}}"#, w / 2, h / 2))
        }
    });
    let s = Screenshot::from_rgb(RgbImage::from_pixel(1600, 900, Rgb([30, 30, 30])));
    let params = DecodeParams::default();
    let input = MvpInput { screenshot: &s, instruction: "open settings", target: None, params: &params };
    let cfg = MvpConfig { m: 2, ..Default::default() };
    let r = run_mvp(&client(&server.url), &input, &cfg, RunOptions::default()).unwrap();
    assert_eq!(r.predictions.len(), 3);
    assert!(r.failures.is_empty());
    let reqs = server.requests();
    assert_eq!(reqs.iter().filter(|(p, _)| p == ATTENTION_PATH).count(), 1);
    assert_eq!(reqs.iter().filter(|(p, _)| p == GROUND_PATH).count(), 3);
    let chosen = &r.clusters.clusters[r.chosen_cluster.unwrap()];
    assert_eq!(r.final_point, chosen.centroid);
    assert!(point_in_rect(&r.final_point, &s.dims().full_rect()));
}

use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::body::{Body, Bytes};
use axum::http::{header, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use cropseg::raster::io::{decode_mask_png, encode_mask_png, encode_rgb_png};
use cropseg::synthetic::{generate_scene, SceneConfig};
use cropseg::{BBox, BinaryMask};
use cropseg_cli::service::{router, AppState};
use cropseg_cli::config::ServiceConfig;

const BOUNDARY: &str = "XBOUNDARYX";

fn app_with(cfg: ServiceConfig) -> (Router, Arc<AppState>) {
    let state = AppState::new(cfg);
    (router(state.clone()), state)
}

fn app() -> Router {
    app_with(ServiceConfig::default()).0
}

fn multipart(parts: &[(&str, &[u8])]) -> Vec<u8> {
    let mut body = Vec::new();
    for (name, bytes) in parts {
        body.extend_from_slice(
            format!(
                "--{BOUNDARY}\r\nContent-Disposition: form-data; name=\"{name}\"; filename=\"{name}.png\"\r\nContent-Type: image/png\r\n\r\n"
            )
            .as_bytes(),
        );
        body.extend_from_slice(bytes);
        body.extend_from_slice(b"\r\n");
    }
    body.extend_from_slice(format!("--{BOUNDARY}--\r\n").as_bytes());
    body
}

async fn send(app: &Router, req: Request<Body>) -> (StatusCode, Bytes) {
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    (status, resp.into_body().collect().await.unwrap().to_bytes())
}

fn json_of(bytes: &Bytes) -> Value {
    serde_json::from_slice(bytes).unwrap_or_else(|_| panic!("not json: {}", String::from_utf8_lossy(bytes)))
}

async fn create(app: &Router, query: &str, parts: &[(&str, &[u8])]) -> (StatusCode, Value) {
    let req = Request::post(format!("/sessions{query}"))
        .header(header::CONTENT_TYPE, format!("multipart/form-data; boundary={BOUNDARY}"))
        .body(Body::from(multipart(parts)))
        .unwrap();
    let (status, body) = send(app, req).await;
    (status, json_of(&body))
}

async fn click(app: &Router, id: &str, x: i64, y: i64, polarity: &str) -> (StatusCode, Value) {
    let req = Request::post(format!("/sessions/{id}/clicks"))
        .header(header::CONTENT_TYPE, "application/json")
        .body(Body::from(json!({ "x": x, "y": y, "polarity": polarity }).to_string()))
        .unwrap();
    let (status, body) = send(app, req).await;
    (status, json_of(&body))
}

async fn get_mask(app: &Router, id: &str) -> (StatusCode, Bytes) {
    send(app, Request::get(format!("/sessions/{id}/mask")).body(Body::empty()).unwrap()).await
}

struct Fixture {
    image: Vec<u8>,
    gt: BinaryMask,
    gt_png: Vec<u8>,
}

fn fixture(w: usize, h: usize) -> Fixture {
    let scene = generate_scene(5, 0, &SceneConfig { width: w, height: h, min_object_pixels: 1000, distractors: 2 });
    Fixture { image: encode_rgb_png(&scene.image).unwrap(), gt_png: encode_mask_png(&scene.gt).unwrap(), gt: scene.gt }
}

fn centre_of(mask: &BinaryMask) -> (i64, i64) {
    let dt = cropseg::raster::distance_transform(mask);
    let i = dt.as_slice().iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0))).unwrap().0;
    ((i % mask.width()) as i64, (i / mask.width()) as i64)
}

#[tokio::test]
async fn click_flow_with_oracle() {
    let app = app();
    let f = fixture(160, 120);
    let (status, created) = create(&app, "?series=s1&backend=oracle", &[("image", &f.image), ("gt", &f.gt_png)]).await;
    assert_eq!(status, StatusCode::CREATED, "{created}");
    assert_eq!((created["width"].as_u64(), created["height"].as_u64()), (Some(160), Some(120)));
    let id = created["id"].as_str().unwrap().to_string();

    let (x, y) = centre_of(&f.gt);
    let (status, body) = click(&app, &id, x, y, "positive").await;
    assert_eq!(status, StatusCode::OK, "{body}");
    assert_eq!(body["mask_url"], format!("/sessions/{id}/mask"));
    assert!(body["updated_region"].is_array());
    assert!(body["iou"].as_f64().unwrap() > 0.95, "{body}");
    assert!(body["timings"]["total_ms"].as_f64().is_some());

    let (status, png) = get_mask(&app, &id).await;
    assert_eq!(status, StatusCode::OK);
    let gray = image::load_from_memory(&png).unwrap().to_luma8();
    assert!(gray.pixels().all(|p| p.0[0] == 0 || p.0[0] == 255));
    assert!(cropseg::iou(&decode_mask_png(&png).unwrap(), &f.gt).unwrap() > 0.95);

    let (status, info) = send(&app, Request::get(format!("/sessions/{id}")).body(Body::empty()).unwrap()).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(json_of(&info)["clicks"], 1);

    let (status, audit) = send(&app, Request::get(format!("/sessions/{id}/audit")).body(Body::empty()).unwrap()).await;
    assert_eq!(status, StatusCode::OK);
    let lines: Vec<Value> = String::from_utf8(audit.to_vec()).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 1);
    assert!(lines[0]["target_crop"]["box"].is_array());
}

#[tokio::test]
async fn creation_errors() {
    let app = app();
    let f = fixture(160, 120);

    let (status, body) = create(&app, "", &[("image", b"definitely not a png"), ("gt", &f.gt_png)]).await;
    assert_eq!(status, StatusCode::BAD_REQUEST, "{body}");

    let small = encode_mask_png(&BinaryMask::filled(40, 30)).unwrap();
    let (status, body) = create(&app, "", &[("image", &f.image), ("init_mask", &small), ("gt", &f.gt_png)]).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let msg = body["error"].as_str().unwrap();
    assert!(msg.contains("40x30") && msg.contains("160x120"), "{msg}");

    let (status, body) = create(&app, "?series=s3", &[("image", &f.image), ("gt", &f.gt_png)]).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let msg = body["error"].as_str().unwrap();
    assert!(msg.contains("s1") && msg.contains("s2"), "{msg}");

    let (status, _) = create(&app, "?backend=telepathy", &[("image", &f.image), ("gt", &f.gt_png)]).await;
    assert_eq!(status, StatusCode::NOT_FOUND);

    let (status, _) = create(&app, "?backend=external", &[("image", &f.image)]).await;
    assert_eq!(status, StatusCode::NOT_FOUND);

    let (status, body) = create(&app, "?backend=oracle", &[("image", &f.image)]).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(body["error"].as_str().unwrap().contains("gt"));

    let (status, _) = create(&app, "", &[("gt", &f.gt_png)]).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);

    let (status, _) = create(&app, "?backend=empty", &[("image", &f.image)]).await;
    assert_eq!(status, StatusCode::CREATED);
}

#[tokio::test]
async fn click_errors() {
    let app = app();
    let f = fixture(160, 120);
    let (status, _) = click(&app, "nope", 1, 1, "positive").await;
    assert_eq!(status, StatusCode::NOT_FOUND);

    let (_, created) = create(&app, "", &[("image", &f.image), ("gt", &f.gt_png)]).await;
    let id = created["id"].as_str().unwrap();
    for (x, y) in [(160, 0), (0, 120), (-1, 5), (5, -1)] {
        let (status, body) = click(&app, id, x, y, "negative").await;
        assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY, "({x}, {y}): {body}");
    }
    let (status, _) = get_mask(&app, "nope").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn put_undo_and_round_trips() {
    let app = app();
    let f = fixture(160, 120);
    let (_, created) = create(&app, "?backend=oracle", &[("image", &f.image), ("gt", &f.gt_png)]).await;
    let id = created["id"].as_str().unwrap().to_string();

    let undo = |id: String| Request::post(format!("/sessions/{id}/undo")).body(Body::empty()).unwrap();
    let (status, _) = send(&app, undo(id.clone())).await;
    assert_eq!(status, StatusCode::CONFLICT);

    let edited = BinaryMask::from_box(160, 120, BBox::new(10, 10, 60, 50));
    let put = |bytes: Vec<u8>| Request::put(format!("/sessions/{id}/mask")).body(Body::from(bytes)).unwrap();
    let (status, _) = send(&app, put(encode_mask_png(&edited).unwrap())).await;
    assert_eq!(status, StatusCode::NO_CONTENT);
    let (_, png) = get_mask(&app, &id).await;
    assert_eq!(decode_mask_png(&png).unwrap(), edited);

    let (_, info) = send(&app, Request::get(format!("/sessions/{id}")).body(Body::empty()).unwrap()).await;
    assert_eq!(json_of(&info)["progressive"], true);

    let (status, _) = send(&app, put(encode_mask_png(&BinaryMask::new(10, 10)).unwrap())).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = send(&app, put(b"garbage".to_vec())).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);

    let (before_status, before) = get_mask(&app, &id).await;
    assert_eq!(before_status, StatusCode::OK);
    let (x, y) = centre_of(&f.gt);
    let (status, body) = click(&app, &id, x, y, "positive").await;
    assert_eq!(status, StatusCode::OK, "{body}");
    assert!(body["updated_region"].is_array(), "progressive click should report a region: {body}");
    let (status, _) = send(&app, undo(id.clone())).await;
    assert_eq!(status, StatusCode::OK);
    let (_, after) = get_mask(&app, &id).await;
    assert_eq!(before, after);

    // Undo the PUT as well, back to the empty start.
    let (status, _) = send(&app, undo(id.clone())).await;
    assert_eq!(status, StatusCode::OK);
    let (_, png) = get_mask(&app, &id).await;
    assert!(decode_mask_png(&png).unwrap().is_empty());
    let (status, _) = send(&app, undo(id.clone())).await;
    assert_eq!(status, StatusCode::CONFLICT);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_clicks_are_serialized() {
    let app = app();
    let f = fixture(160, 120);
    let (_, created) = create(&app, "?backend=noisy", &[("image", &f.image), ("gt", &f.gt_png)]).await;
    let id = created["id"].as_str().unwrap().to_string();
    let (_, other) = create(&app, "?backend=noisy", &[("image", &f.image), ("gt", &f.gt_png)]).await;
    let other = other["id"].as_str().unwrap().to_string();

    let mut tasks = Vec::new();
    for i in 0..12i64 {
        let (app, target) = (app.clone(), if i % 3 == 2 { other.clone() } else { id.clone() });
        let polarity = if i % 2 == 0 { "positive" } else { "negative" };
        tasks.push(tokio::spawn(async move { click(&app, &target, 20 + 9 * i, 15 + 7 * i, polarity).await }));
    }
    let mut counts = Vec::new();
    for t in tasks {
        let (status, body) = t.await.unwrap();
        assert_eq!(status, StatusCode::OK, "{body}");
        counts.push(body["clicks"].as_u64().unwrap());
    }
    let (_, info) = send(&app, Request::get(format!("/sessions/{id}")).body(Body::empty()).unwrap()).await;
    assert_eq!(json_of(&info)["clicks"], 8);
    let (_, info) = send(&app, Request::get(format!("/sessions/{other}")).body(Body::empty()).unwrap()).await;
    assert_eq!(json_of(&info)["clicks"], 4);
    // Each request observed a distinct click count on its session.
    counts.sort();
    assert_eq!(counts, [1, 1, 2, 2, 3, 3, 4, 4, 5, 6, 7, 8]);
}

#[tokio::test]
async fn idle_sessions_are_evicted() {
    let cfg = ServiceConfig { session_ttl: Duration::from_millis(50), ..Default::default() };
    let (app, state) = app_with(cfg);
    let f = fixture(160, 120);
    let (_, created) = create(&app, "?backend=empty", &[("image", &f.image)]).await;
    let id = created["id"].as_str().unwrap().to_string();
    assert_eq!(state.evict_idle(), 0);
    tokio::time::sleep(Duration::from_millis(120)).await;
    assert_eq!(state.evict_idle(), 1);
    let (status, _) = get_mask(&app, &id).await;
    assert_eq!(status, StatusCode::NOT_FOUND);

    let (status, _) = send(&app, Request::delete(format!("/sessions/{id}")).body(Body::empty()).unwrap()).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

/// Client-side round trip: a negative click on an injected false-positive blob
/// removes it and leaves every pixel outside the reported region untouched;
/// click-to-mask latency on 512x512 stays interactive.
#[tokio::test]
async fn blob_removal_and_latency_at_512() {
    let app = app();
    let f = fixture(512, 512);
    let mut init = f.gt.clone();
    let blob = BinaryMask::from_fn(512, 512, |x, y| (x as f64 - 40.5).powi(2) + (y as f64 - 470.5).powi(2) <= 144.0);
    assert!(blob.and(&f.gt).unwrap().is_empty(), "blob must be a pure false positive");
    init = init.or(&blob).unwrap();
    let init_png = encode_mask_png(&init).unwrap();
    let (status, created) =
        create(&app, "?backend=oracle", &[("image", &f.image), ("init_mask", &init_png), ("gt", &f.gt_png)]).await;
    assert_eq!(status, StatusCode::CREATED);
    let id = created["id"].as_str().unwrap().to_string();

    let (_, before) = get_mask(&app, &id).await;
    let before = decode_mask_png(&before).unwrap();
    let (status, body) = click(&app, &id, 40, 470, "negative").await;
    assert_eq!(status, StatusCode::OK, "{body}");
    let r: Vec<usize> = serde_json::from_value(body["updated_region"].clone()).unwrap();
    let region = BBox::new(r[0], r[1], r[2], r[3]);
    let (_, after) = get_mask(&app, &id).await;
    let after = decode_mask_png(&after).unwrap();
    assert!(after.and(&blob).unwrap().is_empty(), "blob still present");
    for y in 0..512 {
        for x in 0..512 {
            if !region.contains(x, y) {
                assert_eq!(before.get(x, y), after.get(x, y), "pixel ({x}, {y}) changed outside {region:?}");
            }
        }
    }

    let (cx, cy) = centre_of(&f.gt);
    let mut times = Vec::new();
    for i in 0..20i64 {
        let (x, y, p) = if i % 2 == 0 { (cx, cy, "positive") } else { (500 - i, 10 + i, "negative") };
        let start = Instant::now();
        let (status, _) = click(&app, &id, x, y, p).await;
        let (mask_status, _) = get_mask(&app, &id).await;
        times.push(start.elapsed());
        assert_eq!((status, mask_status), (StatusCode::OK, StatusCode::OK));
    }
    times.sort();
    let median = times[times.len() / 2];
    assert!(median < Duration::from_millis(200), "median click-to-mask {median:?}");
}

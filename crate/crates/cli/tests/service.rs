use std::sync::Arc;
use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use serde_json::{json, Value};
use tower::ServiceExt;

use splatseg::image_io::decode_label_png;
use splatseg::ply::read_ply;
use splatseg::provider::OracleTarget;
use splatseg::synth::{gen_scene, mask_metrics, preset, SynthScene};
use splatseg_cli::service::{router, AppState};

/// Mean seg-render IoU the oracle loop must clear on two_boxes_touching.
const LOOP_IOU_FLOOR: f64 = 0.95;

fn scene() -> SynthScene {
    gen_scene(&preset("two_boxes_touching").unwrap(), 0).unwrap()
}

fn service(scene: &SynthScene) -> Router {
    let state = AppState::new(
        scene.cloud.clone(),
        scene.cameras.clone(),
        Some(scene.oracle(OracleTarget::FromPrompts)),
        None,
        2,
    );
    router(state)
}

async fn send(app: &Router, req: Request<Body>) -> (StatusCode, Vec<u8>) {
    let res = app.clone().oneshot(req).await.unwrap();
    let status = res.status();
    let body = axum::body::to_bytes(res.into_body(), usize::MAX).await.unwrap();
    (status, body.to_vec())
}

async fn get(app: &Router, uri: &str) -> (StatusCode, Vec<u8>) {
    send(app, Request::get(uri).body(Body::empty()).unwrap()).await
}

async fn post(app: &Router, uri: &str, body: &Value) -> (StatusCode, Value) {
    let req = Request::post(uri)
        .header("content-type", "application/json")
        .body(Body::from(body.to_string()))
        .unwrap();
    let (s, b) = send(app, req).await;
    (s, serde_json::from_slice(&b).unwrap_or(Value::Null))
}

fn json(bytes: &[u8]) -> Value {
    serde_json::from_slice(bytes).unwrap()
}

fn click(scene: &SynthScene) -> Value {
    let p = scene.default_prompt(1).unwrap();
    json!({ "view0": scene.cameras[0].id, "points": [{ "x": p.x, "y": p.y }] })
}

async fn submit(app: &Router, body: &Value) -> u64 {
    let (s, v) = post(app, "/segment", body).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    v["job_id"].as_u64().unwrap()
}

async fn wait(app: &Router, job: u64) -> Value {
    for _ in 0..600 {
        let (s, b) = get(app, &format!("/job/{job}")).await;
        assert_eq!(s, StatusCode::OK);
        let state = json(&b);
        match state["phase"].as_str().unwrap() {
            "done" => return state,
            "failed" => panic!("job failed: {state}"),
            _ => tokio::time::sleep(Duration::from_millis(50)).await,
        }
    }
    panic!("job {job} did not finish");
}

#[tokio::test]
async fn views_lists_every_camera_with_intrinsics() {
    let scene = scene();
    let app = service(&scene);
    let (s, b) = get(&app, "/views").await;
    assert_eq!(s, StatusCode::OK);
    let views = json(&b);
    let views = views.as_array().unwrap();
    assert_eq!(views.len(), 24);
    for v in views {
        for key in ["id", "width", "height", "fx", "fy", "cx", "cy", "world_to_camera"] {
            assert!(v.get(key).is_some(), "missing {key} in {v}");
        }
    }
}

#[tokio::test]
async fn scene_info_reports_counts_and_bounds() {
    let scene = scene();
    let app = service(&scene);
    let info = json(&get(&app, "/scene/info").await.1);
    assert_eq!(info["gaussians"], scene.cloud.len());
    assert_eq!(info["views"], 24);
    assert!(info["bounds"]["min"].is_array());
    assert_eq!(info["revision"], 0);
}

#[tokio::test]
async fn segment_without_foreground_points_is_rejected() {
    let scene = scene();
    let app = service(&scene);
    let (s, v) = post(&app, "/segment", &json!({ "view0": 0, "points": [] })).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert!(v["error"].as_str().unwrap().contains("at least one foreground point"));
    let bg_only = json!({ "view0": 0, "points": [{ "x": 5, "y": 5, "polarity": "background" }] });
    assert_eq!(post(&app, "/segment", &bg_only).await.0, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn malformed_bodies_are_rejected() {
    let scene = scene();
    let app = service(&scene);
    let req = Request::post("/segment").body(Body::from("{not json")).unwrap();
    assert_eq!(send(&app, req).await.0, StatusCode::BAD_REQUEST);
    let (s, _) = post(&app, "/segment", &json!({ "view0": 0, "points": [{ "x": 1, "y": 1 }], "tau": 2.0 })).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, _) = get(&app, "/render?view=0&mode=normals").await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn unknown_ids_are_not_found() {
    let scene = scene();
    let app = service(&scene);
    assert_eq!(get(&app, "/job/99").await.0, StatusCode::NOT_FOUND);
    assert_eq!(get(&app, "/render?view=999").await.0, StatusCode::NOT_FOUND);
    assert_eq!(get(&app, "/export/99").await.0, StatusCode::NOT_FOUND);
    let (s, _) = post(&app, "/segment", &json!({ "view0": 999, "points": [{ "x": 1, "y": 1 }] })).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, _) = post(&app, "/edit", &json!({ "job_id": 99, "transform": { "kind": "remove" } })).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn unreachable_provider_is_unavailable() {
    let scene = scene();
    let app = service(&scene);
    let mut body = click(&scene);
    body["provider"] = json!("http://127.0.0.1:9");
    let (s, v) = post(&app, "/segment", &body).await;
    assert_eq!(s, StatusCode::SERVICE_UNAVAILABLE);
    assert!(!v["error"].as_str().unwrap().is_empty());
}

#[tokio::test]
async fn edit_on_unfinished_job_conflicts() {
    let scene = scene();
    // One worker: the second job waits in the queue behind the first.
    let state = AppState::new(
        scene.cloud.clone(),
        scene.cameras.clone(),
        Some(scene.oracle(OracleTarget::FromPrompts)),
        None,
        1,
    );
    let app = router(state);
    let first = submit(&app, &click(&scene)).await;
    let second = submit(&app, &click(&scene)).await;
    let (s, v) = post(&app, "/edit", &json!({ "job_id": second, "transform": { "kind": "remove" } })).await;
    assert_eq!(s, StatusCode::CONFLICT, "{v}");
    assert_eq!(get(&app, &format!("/render?view=0&mode=seg&job={second}")).await.0, StatusCode::CONFLICT);
    wait(&app, first).await;
    wait(&app, second).await;
}

#[tokio::test]
async fn oracle_loop_renders_a_mask_above_the_floor() {
    let scene = scene();
    let app = service(&scene);
    let job = submit(&app, &click(&scene)).await;
    let state = wait(&app, job).await;
    assert_eq!(state["progress"]["done"], state["progress"]["total"]);
    assert!(state["result"]["selected"].as_u64().unwrap() > 0);
    assert!(state["error"].is_null());

    let mut total = 0.0;
    for (cam, gt) in scene.cameras.iter().zip(&scene.gt_masks) {
        let (s, png) = get(&app, &format!("/render?view={}&mode=seg&job={job}", cam.id)).await;
        assert_eq!(s, StatusCode::OK);
        let mask = decode_label_png(&png).unwrap();
        total += mask_metrics(&mask, &gt.select(1), 3).unwrap().iou;
    }
    let iou = total / scene.cameras.len() as f64;
    assert!(iou > LOOP_IOU_FLOOR, "mean IoU {iou}");
}

#[tokio::test]
async fn render_is_pure() {
    let scene = scene();
    let app = service(&scene);
    let job = submit(&app, &click(&scene)).await;
    wait(&app, job).await;
    for mode in ["rgb", "depth", "alpha", "seg"] {
        let uri = format!("/render?view=3&mode={mode}&job={job}");
        let a = get(&app, &uri).await;
        let b = get(&app, &uri).await;
        assert_eq!(a.0, StatusCode::OK);
        assert_eq!(a.1, b.1, "mode {mode}");
    }
    // A fresh service renders the same bytes: the cache is not the source of purity.
    let other = service(&scene);
    let job2 = submit(&other, &click(&scene)).await;
    wait(&other, job2).await;
    assert_eq!(
        get(&app, &format!("/render?view=3&mode=seg&job={job}")).await.1,
        get(&other, &format!("/render?view=3&mode=seg&job={job2}")).await.1,
    );
}

#[tokio::test]
async fn concurrent_jobs_match_sequential_runs() {
    let scene = scene();
    let mut fg = click(&scene);
    fg["tau"] = json!(0.8);
    let mut refined = click(&scene);
    refined["points"]
        .as_array_mut()
        .unwrap()
        .push(json!({ "x": 2.0, "y": 2.0, "polarity": "background" }));

    let export = |app: Router, a: Value, b: Value, concurrent: bool| async move {
        let (ja, jb) = if concurrent {
            (submit(&app, &a).await, submit(&app, &b).await)
        } else {
            let ja = submit(&app, &a).await;
            wait(&app, ja).await;
            (ja, submit(&app, &b).await)
        };
        wait(&app, ja).await;
        wait(&app, jb).await;
        let ea = get(&app, &format!("/export/{ja}")).await.1;
        let eb = get(&app, &format!("/export/{jb}")).await.1;
        (ea, eb)
    };
    let together = export(service(&scene), fg.clone(), refined.clone(), true).await;
    let apart = export(service(&scene), fg, refined, false).await;
    assert_eq!(together, apart);
    assert_ne!(together.0.len(), 0);
}

#[tokio::test]
async fn segmentation_never_mutates_the_scene() {
    let scene = scene();
    let app = service(&scene);
    let before = get(&app, "/render?view=5&mode=rgb").await.1;
    let job = submit(&app, &click(&scene)).await;
    wait(&app, job).await;
    let info = json(&get(&app, "/scene/info").await.1);
    assert_eq!(info["gaussians"], scene.cloud.len());
    assert_eq!(info["revisions"], 1);
    assert_eq!(get(&app, "/render?view=5&mode=rgb&revision=0").await.1, before);
}

#[tokio::test]
async fn export_streams_the_selected_object() {
    let scene = scene();
    let app = service(&scene);
    let job = submit(&app, &click(&scene)).await;
    let state = wait(&app, job).await;
    let (s, bytes) = get(&app, &format!("/export/{job}")).await;
    assert_eq!(s, StatusCode::OK);
    let cloud = read_ply(&mut bytes.as_slice()).unwrap();
    assert_eq!(cloud.len() as u64, state["result"]["selected"].as_u64().unwrap());
}

#[tokio::test]
async fn edits_create_revisions_and_resegmentation_uses_the_original() {
    let scene = scene();
    let app = service(&scene);
    let job = submit(&app, &click(&scene)).await;
    let state = wait(&app, job).await;
    let selected = state["result"]["selected"].as_u64().unwrap();

    let (s, v) = post(&app, "/edit", &json!({ "job_id": job, "object": 1, "transform": { "kind": "remove" } })).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    assert_eq!(v["revision"], 1);
    let info = json(&get(&app, "/scene/info").await.1);
    assert_eq!(info["revision"], 1);
    let active = state["result"]["active"].as_u64().unwrap();
    assert_eq!(info["gaussians"].as_u64().unwrap(), active - selected);

    let (s, v) = post(
        &app,
        "/edit",
        &json!({ "job_id": job, "transform": { "kind": "translate", "translation": [0.0, 0.0, 1.0] } }),
    )
    .await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["revision"], 2);

    // Older revisions stay renderable and differ from the head.
    let r0 = get(&app, "/render?view=0&mode=rgb&revision=0").await;
    let r1 = get(&app, "/render?view=0&mode=rgb&revision=1").await;
    assert_eq!(r0.0, StatusCode::OK);
    assert_ne!(r0.1, r1.1);

    let again = submit(&app, &click(&scene)).await;
    let state2 = wait(&app, again).await;
    assert_eq!(state2["revision"], 0);
    assert_eq!(state2["result"], state["result"]);
}

#[tokio::test]
async fn job_phases_only_move_forward() {
    let scene = scene();
    let app = service(&scene);
    let job = submit(&app, &click(&scene)).await;
    let order = ["queued", "lifting", "masking", "labeling", "voting", "done"];
    let mut last = 0;
    loop {
        let state = json(&get(&app, &format!("/job/{job}")).await.1);
        let phase = state["phase"].as_str().unwrap();
        let idx = order.iter().position(|p| *p == phase).expect("known phase");
        assert!(idx >= last, "{phase} after {}", order[last]);
        last = idx;
        if phase == "done" {
            break;
        }
        tokio::time::sleep(Duration::from_millis(5)).await;
    }
}

#[test]
fn state_is_shareable_across_threads() {
    fn assert_send_sync<T: Send + Sync>() {}
    assert_send_sync::<Arc<AppState>>();
}

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine as _;
use nalgebra::Matrix4;

use splatseg::camera::Camera;
use splatseg::image_io::{encode_mask_png, LabelMap};
use splatseg::prompt::{PromptPoint, ViewPrompts};
use splatseg::provider::{get_masks, HttpProvider, MaskRequestBody, ViewInput};
use splatseg::Error;

fn checkerboard(w: u32, h: u32) -> LabelMap {
    LabelMap::from_fn(w, h, |x, y| u16::from((x / 4 + y / 4) % 2 == 0))
}

struct Mock {
    url: String,
    requests: Arc<Mutex<Vec<MaskRequestBody>>>,
    hits: Arc<AtomicUsize>,
}

/// Answers `POST /mask` with a checkerboard sized from the request. The
/// first `fail_first` requests get a 500 instead.
fn mock_server(fail_first: usize) -> Mock {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    let requests = Arc::new(Mutex::new(Vec::new()));
    let hits = Arc::new(AtomicUsize::new(0));
    let (reqs, count) = (requests.clone(), hits.clone());
    std::thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { continue };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut len = 0usize;
            loop {
                let mut line = String::new();
                if reader.read_line(&mut line).unwrap_or(0) == 0 || line == "\r\n" {
                    break;
                }
                if let Some((k, v)) = line.split_once(':') {
                    if k.eq_ignore_ascii_case("content-length") {
                        len = v.trim().parse().unwrap();
                    }
                }
            }
            let mut body = vec![0; len];
            reader.read_exact(&mut body).unwrap();
            let n = count.fetch_add(1, Ordering::SeqCst);
            let (status, payload) = if n < fail_first {
                ("500 Internal Server Error", "{}".to_string())
            } else {
                let req: MaskRequestBody = serde_json::from_slice(&body).unwrap();
                let png = encode_mask_png(&checkerboard(req.width, req.height)).unwrap();
                reqs.lock().unwrap().push(req);
                ("200 OK", serde_json::json!({ "mask": BASE64.encode(png) }).to_string())
            };
            let _ = write!(
                stream,
                "HTTP/1.1 {status}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{payload}",
                payload.len()
            );
        }
    });
    Mock {
        url,
        requests,
        hits,
    }
}

fn cams() -> Vec<Camera> {
    (0..3)
        .map(|i| {
            Camera::new(i, 24 + 8 * i, 16, 20.0, 20.0, 10.0, 8.0, Matrix4::identity()).unwrap()
        })
        .collect()
}

fn prompts(cams: &[Camera]) -> Vec<ViewPrompts> {
    cams.iter()
        .map(|c| ViewPrompts {
            view: c.id,
            points: vec![PromptPoint::foreground(5.0, 5.0)],
            dropped: Vec::new(),
        })
        .collect()
}

#[test]
fn masks_arrive_with_the_request_shape_and_provenance() {
    let mock = mock_server(0);
    let provider = HttpProvider::new(format!("{}/", mock.url));
    let cams = cams();
    let prompts = prompts(&cams);
    let image = [1u8, 2, 3];
    let inputs: Vec<ViewInput<'_>> = cams
        .iter()
        .zip(&prompts)
        .map(|(cam, p)| ViewInput {
            cam,
            image_png: Some(&image),
            prompts: Some(p),
        })
        .collect();
    let set = get_masks(&provider, &inputs).unwrap();
    assert_eq!(set.provider, mock.url);
    assert_eq!(set.usable_count(), 3);
    assert_eq!(set.num_objects, 1);
    for cam in &cams {
        assert_eq!(set.get(cam.id).unwrap(), &checkerboard(cam.width, cam.height));
    }
    let mut reqs = mock.requests.lock().unwrap().clone();
    reqs.sort_by_key(|r| r.view_id);
    assert_eq!(reqs.len(), 3);
    assert_eq!((reqs[2].width, reqs[2].height), (40, 16));
    assert_eq!(BASE64.decode(&reqs[0].image).unwrap(), image);
    assert_eq!(reqs[1].points, vec![PromptPoint::foreground(5.0, 5.0)]);
}

#[test]
fn one_failure_is_retried() {
    let mock = mock_server(1);
    let cams = cams();
    let inputs: Vec<ViewInput<'_>> = cams
        .iter()
        .map(|cam| ViewInput {
            cam,
            image_png: None,
            prompts: None,
        })
        .collect();
    let provider = HttpProvider::new(&mock.url).with_max_in_flight(1);
    let set = get_masks(&provider, &inputs).unwrap();
    assert_eq!(set.usable_count(), 3);
    assert_eq!(mock.hits.load(Ordering::SeqCst), 4);
}

#[test]
fn a_dead_server_leaves_too_few_views() {
    let mock = mock_server(usize::MAX);
    let cams = cams();
    let inputs: Vec<ViewInput<'_>> = cams
        .iter()
        .map(|cam| ViewInput {
            cam,
            image_png: None,
            prompts: None,
        })
        .collect();
    let err = get_masks(&HttpProvider::new(&mock.url), &inputs).unwrap_err();
    assert!(matches!(err, Error::TooFewViews { usable: 0 }));
    // Each view was tried twice.
    assert_eq!(mock.hits.load(Ordering::SeqCst), 6);
}

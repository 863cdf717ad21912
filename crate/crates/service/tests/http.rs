mod common;

use std::net::SocketAddr;
use std::sync::mpsc;

use demfeed::Condition;
use demfeed_service::AssignmentPolicy;
use serde_json::{json, Value};

fn start(dir: &std::path::Path) -> String {
    let exp = common::experiment(dir, AssignmentPolicy::block(3));
    let (tx, rx) = mpsc::channel();
    std::thread::spawn(move || {
        let rt = tokio::runtime::Runtime::new().unwrap();
        rt.block_on(demfeed_service::serve(exp, SocketAddr::from(([127, 0, 0, 1], 0)), |a| {
            tx.send(a).unwrap();
        }))
        .unwrap();
    });
    format!("http://{}", rx.recv().unwrap())
}

fn agent() -> ureq::Agent {
    ureq::Agent::config_builder().http_status_as_error(false).build().into()
}

fn call(req: Result<ureq::http::Response<ureq::Body>, ureq::Error>) -> (u16, String) {
    let mut resp = req.unwrap();
    (resp.status().as_u16(), resp.body_mut().read_to_string().unwrap())
}

#[test]
fn api_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let base = start(dir.path());
    let http = agent();

    let mut content_warning = None;
    for i in 0..7 {
        let (status, body) = call(http.post(format!("{base}/sessions")).send_json(json!({"participant_id": format!("u{i}")})));
        assert_eq!(status, 201, "{body}");
        let s: Value = serde_json::from_str(&body).unwrap();
        assert!(s["session_id"].is_string());
        if s["condition"] == "content_warning" {
            content_warning = Some(s["session_id"].as_str().unwrap().to_string());
        }
    }
    let (status, body) = call(http.post(format!("{base}/sessions")).send_json(json!({"participant_id": "u0"})));
    assert_eq!(status, 409);
    assert_eq!(serde_json::from_str::<Value>(&body).unwrap()["code"], "conflict");

    let id = content_warning.expect("block of 7 covers content_warning");
    let (status, body) = call(http.get(format!("{base}/feed/{id}")).call());
    assert_eq!(status, 200);
    let feed: Value = serde_json::from_str(&body).unwrap();
    assert_eq!(feed["condition"], Condition::ContentWarning.as_str());
    let warned = feed["slots"].as_array().unwrap().iter().find(|s| s["warned"] == true).unwrap().clone();
    assert_eq!(warned["text"], "");
    let post = warned["post_id"].as_str().unwrap();

    let batch = json!({"events": [
        {"kind": "feed_opened", "client_ts": "2024-05-01T12:00:00Z", "seq": 1},
        {"kind": "warning_reveal", "post_id": post, "client_ts": "2024-05-01T12:00:01Z", "seq": 2},
        {"kind": "feed_closed", "client_ts": "2024-05-01T12:00:05Z", "seq": 3}
    ]});
    let (status, body) = call(http.post(format!("{base}/events/{id}")).send_json(&batch));
    assert_eq!(status, 200);
    assert_eq!(serde_json::from_str::<Value>(&body).unwrap()["accepted"], 3);
    // bare array form, all duplicates
    let (_, body) = call(http.post(format!("{base}/events/{id}")).send_json(&batch["events"]));
    let ack: Value = serde_json::from_str(&body).unwrap();
    assert_eq!((ack["accepted"].as_u64(), ack["rejected"].as_u64()), (Some(0), Some(3)));

    let (_, body) = call(http.get(format!("{base}/feed/{id}")).call());
    let feed: Value = serde_json::from_str(&body).unwrap();
    let slot = feed["slots"].as_array().unwrap().iter().find(|s| s["post_id"] == post).unwrap();
    assert_ne!(slot["text"], "");

    let (status, body) = call(http.get(format!("{base}/export")).call());
    assert_eq!(status, 401);
    assert_eq!(serde_json::from_str::<Value>(&body).unwrap()["code"], "unauthorized");
    let (status, body) = call(
        http.get(format!("{base}/export?condition=content_warning"))
            .header("Authorization", &format!("Bearer {}", common::TOKEN))
            .call(),
    );
    assert_eq!(status, 200);
    let lines: Vec<Value> = body.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines[0]["type"], "header");
    assert_eq!(lines[0]["sessions"], 1);
    assert_eq!(lines.last().unwrap()["open_close_ms"], 5000);

    let (status, body) = call(http.get(format!("{base}/feed/missing")).call());
    assert_eq!(status, 404);
    assert_eq!(serde_json::from_str::<Value>(&body).unwrap()["code"], "not_found");
    let (status, body) = call(http.post(format!("{base}/events/{id}")).content_type("application/json").send("{not json"));
    assert_eq!(status, 400);
    assert_eq!(serde_json::from_str::<Value>(&body).unwrap()["code"], "bad_request");
}

use std::io::{BufRead, BufReader, Write};
use std::net::TcpStream;
use std::path::Path;
use std::process::{Child, Command, Stdio};
use std::time::Duration;

use serde_json::{json, Value};
use stylus_teleport::harness::replay;
use stylus_teleport::scene::build_study_scene;
use stylus_teleport::trace::{parse_trace, SceneRef};
use stylus_teleport::TrialSceneSpec;

struct Server {
    child: Child,
    addr: String,
}

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

fn start(extra: &[&str]) -> Server {
    let mut child = Command::new(env!("CARGO_BIN_EXE_stylus-teleport"))
        .args(["serve", "--port", "0"])
        .args(extra)
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .expect("server starts");
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap())
        .read_line(&mut line)
        .unwrap();
    let addr = line
        .trim()
        .strip_prefix("listening on ")
        .unwrap()
        .to_string();
    Server { child, addr }
}

fn connect(addr: &str) -> (TcpStream, BufReader<TcpStream>) {
    let s = TcpStream::connect(addr).unwrap();
    s.set_read_timeout(Some(Duration::from_secs(10))).unwrap();
    s.set_nodelay(true).unwrap();
    let r = BufReader::new(s.try_clone().unwrap());
    (s, r)
}

fn read_msg(r: &mut BufReader<TcpStream>) -> Value {
    let mut line = String::new();
    r.read_line(&mut line).unwrap();
    serde_json::from_str(&line).unwrap_or_else(|e| panic!("{e}: {line:?}"))
}

#[test]
fn streamed_trace_yields_replay_events() {
    let text = std::fs::read_to_string(
        Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/golden_trace.jsonl"),
    )
    .unwrap();
    let trace = parse_trace(&text).unwrap();
    let header = trace.header.clone().unwrap();
    let Some(SceneRef::Study {
        depth_m,
        rotation_deg,
    }) = header.scene
    else {
        panic!("golden trace names a study scene");
    };
    let scene = build_study_scene(&TrialSceneSpec::new(depth_m, rotation_deg).unwrap()).unwrap();
    let offline: Vec<Value> = replay(&scene, &trace, &header.config)
        .unwrap()
        .events
        .iter()
        .map(|e| serde_json::to_value(&e.event).unwrap())
        .collect();

    let server = start(&[]);
    let (mut w, mut r) = connect(&server.addr);
    let mut config = serde_json::to_value(header.config).unwrap();
    config["kind"] = json!("config");
    config["study"] = json!({"depth_m": depth_m, "rotation_deg": rotation_deg});
    writeln!(w, "{config}").unwrap();
    assert_eq!(read_msg(&mut r)["kind"], "state");

    let mut live = Vec::new();
    for frame in &trace.frames {
        let mut msg = serde_json::to_value(frame).unwrap();
        msg["kind"] = json!("frame");
        writeln!(w, "{msg}").unwrap();
        let state = read_msg(&mut r);
        assert_eq!(state["kind"], "state");
        let events = read_msg(&mut r);
        assert_eq!(events["kind"], "events");
        live.extend(events["events"].as_array().unwrap().iter().cloned());
    }
    assert!(!offline.is_empty());
    assert_eq!(live, offline);
}

#[test]
fn malformed_message_gets_error_and_session_continues() {
    let server = start(&[]);
    let (mut w, mut r) = connect(&server.addr);
    writeln!(w, "{{\"kind\":\"frame\",\"t\":\"soon\"}}").unwrap();
    assert_eq!(read_msg(&mut r)["kind"], "error");
    writeln!(w, "{{\"kind\":\"reset\"}}").unwrap();
    assert_eq!(read_msg(&mut r)["kind"], "state");
}

#[test]
fn second_client_is_turned_away() {
    let server = start(&[]);
    let (mut w, mut r) = connect(&server.addr);
    writeln!(w, "{{\"kind\":\"reset\"}}").unwrap();
    assert_eq!(read_msg(&mut r)["kind"], "state");

    let (_w2, mut r2) = connect(&server.addr);
    assert_eq!(read_msg(&mut r2)["kind"], "busy");

    // The first session is unaffected.
    writeln!(w, "{{\"kind\":\"reset\"}}").unwrap();
    assert_eq!(read_msg(&mut r)["kind"], "state");
}

#[test]
fn next_client_is_served_after_disconnect() {
    let server = start(&[]);
    {
        let (mut w, mut r) = connect(&server.addr);
        writeln!(w, "{{\"kind\":\"reset\"}}").unwrap();
        assert_eq!(read_msg(&mut r)["kind"], "state");
    }
    for _ in 0..50 {
        let (mut w, mut r) = connect(&server.addr);
        writeln!(w, "{{\"kind\":\"reset\"}}").unwrap();
        if read_msg(&mut r)["kind"] == "state" {
            return;
        }
        std::thread::sleep(Duration::from_millis(20));
    }
    panic!("server never freed the session slot");
}

#[test]
fn heartbeat_gap_resets_session() {
    let server = start(&["--heartbeat-ms", "300"]);
    let (mut w, mut r) = connect(&server.addr);
    writeln!(w, "{{\"kind\":\"heartbeat\"}}").unwrap();
    let msg = read_msg(&mut r);
    assert_eq!(msg["kind"], "reset", "{msg}");
}

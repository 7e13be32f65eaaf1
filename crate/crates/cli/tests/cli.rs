use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::process::{Command, Stdio};

use tungstenite::Message as WsMessage;

use hybrid_ocean::protocol::Message;

const BIN: &str = env!("CARGO_BIN_EXE_hybrid-ocean");

const SMALL: &str = "\
fft.n=32
spectrum.u10=10
spectrum.n_omega=4
spectrum.n_theta=4
patch.0.origin_x=100
patch.0.origin_y=100
patch.0.size_x=80
patch.0.size_y=80
patch.0.res=64
patch.0.margin=4
body.0.x=140
body.0.y=140
";

fn write_config(dir: &Path, text: &str) -> std::path::PathBuf {
    let p = dir.join("sim.cfg");
    fs::write(&p, text).unwrap();
    p
}

fn run(args: &[&str]) -> std::process::Output {
    Command::new(BIN).args(args).output().unwrap()
}

#[test]
fn zero_frame_run_writes_only_headers() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out_dir = dir.path().join("out");
    let o = run(&["run", cfg.to_str().unwrap(), "--frames", "0", "--output-dir", out_dir.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stats = fs::read_to_string(out_dir.join("stats.csv")).unwrap();
    assert_eq!(stats.lines().count(), 1);
    assert!(fs::read_to_string(out_dir.join("config.txt")).unwrap().contains("sim.frames=0"));
    assert!(!out_dir.join("frame_000000.raw").exists());
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let mut outs = Vec::new();
    for k in 0..2 {
        let d = dir.path().join(format!("run{k}"));
        let o = run(&[
            "run",
            cfg.to_str().unwrap(),
            "--frames",
            "12",
            "--seed",
            "9",
            "--output-dir",
            d.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        outs.push(d);
    }
    for name in ["stats.csv", "config.txt", "frame_000000.raw", "frame_000011.raw", "frame_000011.meta"] {
        assert_eq!(
            fs::read(outs[0].join(name)).unwrap(),
            fs::read(outs[1].join(name)).unwrap(),
            "{name} differs"
        );
    }
    assert_eq!(fs::read_to_string(outs[0].join("stats.csv")).unwrap().lines().count(), 13);
}

#[test]
fn invalid_config_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "sim.dt=0.5\n");
    let o = run(&["run", cfg.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("sim.dt"));
}

#[test]
fn unknown_mode_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let o = run(&["run", cfg.to_str().unwrap(), "--mode", "waves-only"]);
    assert!(!o.status.success());
}

#[test]
fn bench_prints_a_row_per_cell() {
    let dir = tempfile::tempdir().unwrap();
    let m = dir.path().join("matrix.cfg");
    fs::write(
        &m,
        format!("{SMALL}bench.warmup=1\nbench.frames=2\nbench.prefill=1\ncell.0.name=a\ncell.1.name=b\ncell.1.sim.mode=fft-only\n"),
    )
    .unwrap();
    let o = run(&["bench", m.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let table = String::from_utf8(o.stdout).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("a,hybrid,"));
    assert!(lines[2].starts_with("b,fft-only,"));
}

#[test]
fn serve_streams_frames_and_accepts_input() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &format!("{SMALL}stream.res=16\nstream.rate_hz=30\n"));
    let mut child = Command::new(BIN)
        .args(["serve", cfg.to_str().unwrap(), "--port", "0", "--frames", "240"])
        .env("RUST_LOG", "info")
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut stderr = BufReader::new(child.stderr.take().unwrap());
    let addr = loop {
        let mut line = String::new();
        assert!(stderr.read_line(&mut line).unwrap() > 0, "server exited early");
        if let Some(i) = line.find("ws://") {
            break line[i..].trim().to_string();
        }
    };
    let (mut ws, _) = tungstenite::connect(addr.as_str()).unwrap();
    let frame = loop {
        if let WsMessage::Text(t) = ws.read().unwrap() {
            break Message::from_json(t.as_str()).unwrap();
        }
    };
    let Message::Frame(frame) = frame else { panic!("expected a frame") };
    assert_eq!(frame.res, [16, 16]);
    assert_eq!(frame.grid().unwrap().len(), 256);
    assert_eq!(frame.bodies.len(), 1);
    ws.send(WsMessage::text("{\"type\":\"input\",\"thrust\":2}")).unwrap();
    ws.send(WsMessage::text("{\"type\":\"input\",\"id\":0,\"thrust\":1.0,\"rudder\":-0.25}"))
        .unwrap();
    // The session survives the malformed message and keeps streaming.
    let mut more = 0;
    while more < 3 {
        match ws.read() {
            Ok(WsMessage::Text(_)) => more += 1,
            Ok(_) => {}
            Err(e) => panic!("stream ended: {e}"),
        }
    }
    drop(ws);
    std::thread::spawn(move || for _ in stderr.lines() {});
    let out = child.wait_with_output().unwrap();
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("inputs 1 rejected 0"), "{stdout}");
}

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream};
use std::path::PathBuf;
use std::process::{Command, Output, Stdio};
use std::time::{Duration, Instant};

use cadrecon_core::dsl::serialize_program;
use cadrecon_core::fixtures;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cadrecon"))
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("cadrecon-cli-{}-{name}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

#[test]
fn exec_cube_writes_six_face_groups() {
    let dir = scratch("exec");
    let prog = dir.join("cube.json");
    fs::write(&prog, serialize_program(&fixtures::cube(1.0))).unwrap();
    let obj = dir.join("out.obj");
    let out = run(&["exec", prog.to_str().unwrap(), "--obj", obj.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(&obj).unwrap();
    assert_eq!(text.lines().filter(|l| l.starts_with("g ")).count(), 6);
    assert!(String::from_utf8_lossy(&out.stdout).contains("faces 6"));
}

#[test]
fn gen_then_bench_writes_csv() {
    let dir = scratch("bench");
    let corpus = dir.join("corpus.jsonl");
    let csv = dir.join("rows.csv");
    let out = run(&["gen", "--count", "3", "--seed", "4", "--convertible", "-o", corpus.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(fs::read_to_string(&corpus).unwrap().lines().count(), 3);
    let out = run(&[
        "bench",
        corpus.to_str().unwrap(),
        "--agent",
        "gcn",
        "--search",
        "rollout",
        "--budget",
        "100",
        "--csv",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap();
    assert!(header.contains("IoU@20") && header.contains("IoU@100"));
    assert_eq!(lines.count(), 3);
    let summary: serde_json::Value = serde_json::from_slice(&out.stderr[out.stderr.iter().position(|&b| b == b'{').unwrap()..]).unwrap();
    assert_eq!(summary["designs"], 3);
}

#[test]
fn unknown_flag_is_usage_error_without_side_effects() {
    let dir = scratch("usage");
    let corpus = dir.join("corpus.jsonl");
    let out = run(&["gen", "--count", "2", "--frobnicate", "-o", corpus.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!corpus.exists());
    assert_eq!(run(&["nonsense"]).status.code(), Some(1));
    assert_eq!(run(&[]).status.code(), Some(1));
}

#[test]
fn runtime_failure_exits_two() {
    let out = run(&["exec", "/nonexistent/program.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}

#[test]
fn every_subcommand_has_help() {
    for sub in ["exec", "gen", "train", "reconstruct", "bench", "export", "serve"] {
        let out = run(&[sub, "--help"]);
        assert_eq!(out.status.code(), Some(0), "{sub}");
        assert!(String::from_utf8_lossy(&out.stdout).contains("Usage: cadrecon"), "{sub}");
    }
}

#[test]
fn export_round_trips_program_and_actions() {
    let dir = scratch("export");
    let prog = dir.join("block.json");
    fs::write(&prog, serialize_program(&fixtures::stepped_block())).unwrap();
    let out = run(&["export", prog.to_str().unwrap(), "--to", "dsl"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(String::from_utf8(out.stdout).unwrap().trim_end(), serialize_program(&fixtures::stepped_block()));
    let out = run(&["export", prog.to_str().unwrap(), "--to", "actions"]);
    let actions: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(actions.as_array().unwrap().len(), 2);
}

#[test]
fn train_writes_loadable_checkpoint() {
    let dir = scratch("train");
    let corpus = dir.join("corpus.jsonl");
    let ckpt = dir.join("mlp.json");
    fs::write(&corpus, serialize_program(&fixtures::stepped_block()) + "\n").unwrap();
    let out = run(&["train", corpus.to_str().unwrap(), "--agent", "mlp", "--epochs", "2", "-o", ckpt.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let prog = dir.join("target.json");
    fs::write(&prog, serialize_program(&fixtures::stepped_block())).unwrap();
    let out = run(&[
        "reconstruct",
        prog.to_str().unwrap(),
        "--agent",
        "mlp",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--budget",
        "5",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["best_iou_by_step"].as_array().unwrap().len(), 5);
}

fn free_port() -> u16 {
    TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port()
}

fn connect(port: u16) -> TcpStream {
    let deadline = Instant::now() + Duration::from_secs(20);
    loop {
        match TcpStream::connect(("127.0.0.1", port)) {
            Ok(s) => return s,
            Err(e) if Instant::now() > deadline => panic!("server never came up: {e}"),
            Err(_) => std::thread::sleep(Duration::from_millis(50)),
        }
    }
}

#[test]
fn serve_takes_default_port_from_environment() {
    let port = free_port();
    let mut child = bin()
        .arg("serve")
        .env("CADRECON_PORT", port.to_string())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let mut stream = connect(port);
    stream.write_all(b"{\"protocol\":\"v1\",\"command\":\"revert_to_target\"}\n").unwrap();
    let mut line = String::new();
    BufReader::new(stream.try_clone().unwrap()).read_line(&mut line).unwrap();
    child.kill().unwrap();
    child.wait().unwrap();
    let v: serde_json::Value = serde_json::from_str(&line).unwrap();
    assert_eq!(v["status"], "error");
    assert_eq!(v["error"]["code"], "no_target");
}

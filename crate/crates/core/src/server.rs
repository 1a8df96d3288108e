//! Line-delimited JSON protocol over TCP. Every connection owns one
//! environment and its requests run strictly in order.
//!
//! Request: `{"id": 1, "command": "set_target", "params": {...}, "protocol": "v1"}`
//! (`protocol` may be omitted). Response: `{"id": 1, "protocol": "v1",
//! "status": "ok", "payload": {...}}` or `{"id": 1, "protocol": "v1",
//! "status": "error", "error": {"code": "...", "message": "..."}}`.

use std::io::{BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream};
use std::path::PathBuf;

use serde::de::DeserializeOwned;
use serde_json::{json, Map, Value};

use crate::dsl::{execute, parse_program, PlaneRef, Program};
use crate::env::{Env, FaceExtrude, SketchAction, StepResult};
use crate::kernel::{write_obj, BoolOp};
use crate::math::{Aabb, Vec2};

pub const PROTOCOL: &str = "v1";
/// Environment variable holding the default port.
pub const PORT_VAR: &str = "CADRECON_PORT";
pub const DEFAULT_PORT: u16 = 8765;

pub const COMMANDS: [&str; 13] = [
    "set_target",
    "revert_to_target",
    "add_extrude_by_target_face",
    "add_extrudes_by_target_face",
    "add_sketch",
    "add_line",
    "add_arc",
    "add_circle",
    "add_extrude",
    "graph",
    "mesh",
    "sketches",
    "screenshot",
];

struct Failure {
    code: &'static str,
    message: String,
}

fn fail(code: &'static str, message: impl Into<String>) -> Failure {
    Failure { code, message: message.into() }
}

fn param<T: DeserializeOwned>(params: &Map<String, Value>, key: &str) -> Result<T, Failure> {
    let v = params.get(key).ok_or_else(|| fail("invalid_params", format!("missing parameter `{key}`")))?;
    serde_json::from_value(v.clone()).map_err(|e| fail("invalid_params", format!("parameter `{key}`: {e}")))
}

fn operation(params: &Map<String, Value>) -> Result<BoolOp, Failure> {
    let s: String = param(params, "operation")?;
    let op = match s.as_str() {
        "new_body" | "NewBodyFeatureOperation" => BoolOp::NewBody,
        "join" | "JoinFeatureOperation" => BoolOp::Join,
        "cut" | "CutFeatureOperation" => BoolOp::Cut,
        "intersect" | "IntersectFeatureOperation" => BoolOp::Intersect,
        _ => return Err(fail("invalid_params", format!("unknown operation `{s}`"))),
    };
    Ok(op)
}

fn bbox_json(b: &Aabb) -> Value {
    json!({"min": b.min.to_array(), "max": b.max.to_array()})
}

fn step_payload(r: &StepResult) -> Value {
    json!({
        "valid": r.valid,
        "error": r.error,
        "iou": r.iou,
        "exact": r.exact,
        "reward": r.reward,
        "bodies": r.bodies,
        "steps_taken": r.steps_taken,
        "profiles": r.profiles,
        "graph": r.current_graph.to_json(),
        "bounding_box": bbox_json(&r.current_graph.bbox),
    })
}

/// One connection's state.
#[derive(Default)]
pub struct Session {
    env: Env,
}

impl Session {
    pub fn new() -> Self {
        Self::default()
    }

    /// Handles one request line; the flag asks the caller to close.
    pub fn handle_line(&mut self, line: &str) -> (Value, bool) {
        let request: Value = match serde_json::from_str(line) {
            Ok(v) => v,
            Err(e) => return (error_response(Value::Null, fail("malformed_request", e.to_string())), false),
        };
        let id = request.get("id").cloned().unwrap_or(Value::Null);
        if let Some(p) = request.get("protocol") {
            if p.as_str() != Some(PROTOCOL) {
                let f = fail("protocol_mismatch", format!("server speaks {PROTOCOL}, request asked for {p}"));
                return (error_response(id, f), true);
            }
        }
        let Some(command) = request.get("command").and_then(Value::as_str) else {
            return (error_response(id, fail("malformed_request", "missing `command`")), false);
        };
        let empty = Map::new();
        let params = match request.get("params") {
            None | Some(Value::Null) => &empty,
            Some(Value::Object(m)) => m,
            Some(_) => return (error_response(id, fail("malformed_request", "`params` must be an object")), false),
        };
        match self.dispatch(command, params) {
            Ok(payload) => (json!({"id": id, "protocol": PROTOCOL, "status": "ok", "payload": payload}), false),
            Err(f) => (error_response(id, f), false),
        }
    }

    fn target_face(&self, params: &Map<String, Value>, key: &str) -> Result<usize, Failure> {
        let g = self.env.target_graph().ok_or_else(|| fail("no_target", "set_target first"))?;
        match params.get(key) {
            Some(Value::String(face_id)) => {
                g.node_index(face_id).ok_or_else(|| fail("invalid_params", format!("no target face `{face_id}`")))
            }
            Some(v) => v.as_u64().map(|i| i as usize).ok_or_else(|| fail("invalid_params", format!("`{key}` must be an index or face id"))),
            None => Err(fail("invalid_params", format!("missing parameter `{key}`"))),
        }
    }

    fn face_extrude(&self, params: &Map<String, Value>) -> Result<FaceExtrude, Failure> {
        Ok(FaceExtrude {
            start: self.target_face(params, "start_face")?,
            end: self.target_face(params, "end_face")?,
            op: operation(params)?,
        })
    }

    fn sketch_step(&mut self, a: SketchAction) -> Result<Value, Failure> {
        Ok(step_payload(&self.env.step_sketch(&a)))
    }

    fn dispatch(&mut self, command: &str, params: &Map<String, Value>) -> Result<Value, Failure> {
        let runtime = |e: &dyn std::fmt::Display| fail("runtime", e.to_string());
        match command {
            "set_target" => {
                let program = match (params.get("program"), params.get("file")) {
                    (Some(p), _) => parse_program(&p.to_string()).map_err(|e| fail("invalid_params", e.to_string()))?,
                    (None, Some(_)) => {
                        let path: PathBuf = param(params, "file")?;
                        let text = std::fs::read_to_string(&path).map_err(|e| fail("invalid_params", format!("{}: {e}", path.display())))?;
                        parse_program(&text).map_err(|e| fail("invalid_params", e.to_string()))?
                    }
                    (None, None) => return Err(fail("invalid_params", "set_target needs `program` or `file`")),
                };
                self.set_target(&program)
            }
            "revert_to_target" => self.env.revert_to_target().map(|r| step_payload(&r)).map_err(|_| fail("no_target", "set_target first")),
            "add_extrude_by_target_face" => {
                let a = self.face_extrude(params)?;
                self.env.step_face_extrude(&a).map(|r| step_payload(&r)).map_err(|e| runtime(&e))
            }
            "add_extrudes_by_target_face" => {
                let actions: Vec<Map<String, Value>> = param(params, "actions")?;
                let revert = params.get("revert").and_then(Value::as_bool).unwrap_or(false);
                let parsed = actions.iter().map(|a| self.face_extrude(a)).collect::<Result<Vec<_>, _>>()?;
                if revert {
                    self.env.revert_to_target().map_err(|_| fail("no_target", "set_target first"))?;
                }
                let mut last = None;
                for a in &parsed {
                    last = Some(self.env.step_face_extrude(a).map_err(|e| runtime(&e))?);
                }
                match last {
                    Some(r) => Ok(step_payload(&r)),
                    None => self.env.revert_to_target().map(|r| step_payload(&r)).map_err(|_| fail("no_target", "set_target first")),
                }
            }
            "add_sketch" => {
                let plane: PlaneRef = param(params, "sketch_plane")?;
                self.sketch_step(SketchAction::Sketch { plane })
            }
            "add_line" => self.sketch_step(SketchAction::Line { start: param(params, "p1")?, end: param(params, "p2")? }),
            "add_arc" => self.sketch_step(SketchAction::Arc { start: param(params, "p1")?, center: param(params, "p2")?, angle: param(params, "angle")? }),
            "add_circle" => {
                let center: Vec2 = param(params, "p")?;
                self.sketch_step(SketchAction::Circle { center, radius: param(params, "radius")? })
            }
            "add_extrude" => {
                let profiles = match params.get("profile_id") {
                    Some(Value::String(s)) => vec![s.clone()],
                    _ => param(params, "profile_id")?,
                };
                self.sketch_step(SketchAction::Extrude { profiles, distance: param(params, "distance")?, operation: operation(params)? })
            }
            "graph" => {
                let which = params.get("which").and_then(Value::as_str).unwrap_or("current");
                match which {
                    "current" => Ok(self.env.current_graph().to_json()),
                    "target" => self.env.target_graph().map(|g| g.to_json()).ok_or_else(|| fail("no_target", "set_target first")),
                    _ => Err(fail("invalid_params", "`which` must be current or target")),
                }
            }
            "mesh" => Ok(json!({"obj": write_obj(self.env.current())})),
            "sketches" | "screenshot" => Err(fail("unsupported", format!("{command}: image and DXF export are not available"))),
            _ => Err(fail("unknown_command", format!("unknown command `{command}`"))),
        }
    }

    fn set_target(&mut self, program: &Program) -> Result<Value, Failure> {
        let trace = execute(program).map_err(|e| fail("invalid_params", e.to_string()))?;
        let (graph, bbox) = self.env.set_target(trace.final_bodies().to_vec()).map_err(|e| fail("runtime", e.to_string()))?;
        Ok(json!({"graph": graph.to_json(), "bounding_box": bbox_json(&bbox)}))
    }
}

fn error_response(id: Value, f: Failure) -> Value {
    json!({"id": id, "protocol": PROTOCOL, "status": "error", "error": {"code": f.code, "message": f.message}})
}

/// Serves one connection until the peer closes it or asks for a
/// protocol the server does not speak.
pub fn handle_connection(stream: TcpStream) -> std::io::Result<()> {
    let mut writer = stream.try_clone()?;
    let reader = BufReader::new(stream);
    let mut session = Session::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let (response, close) = session.handle_line(&line);
        writeln!(writer, "{response}")?;
        writer.flush()?;
        if close {
            break;
        }
    }
    Ok(())
}

/// Accepts connections forever, one thread per connection.
pub fn serve(listener: TcpListener) -> std::io::Result<()> {
    for stream in listener.incoming() {
        let stream = stream?;
        std::thread::spawn(move || {
            let _ = handle_connection(stream);
        });
    }
    Ok(())
}

/// Port from [`PORT_VAR`], else [`DEFAULT_PORT`].
pub fn default_port() -> u16 {
    std::env::var(PORT_VAR).ok().and_then(|v| v.parse().ok()).unwrap_or(DEFAULT_PORT)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::serialize_program;
    use crate::fixtures;

    fn req(id: u64, command: &str, params: Value) -> String {
        json!({"id": id, "command": command, "params": params}).to_string()
    }

    fn cube_target(s: &mut Session) -> Value {
        let program: Value = serde_json::from_str(&serialize_program(&fixtures::cube(1.0))).unwrap();
        s.handle_line(&req(1, "set_target", json!({"program": program}))).0
    }

    #[test]
    fn set_target_then_face_extrude() {
        let mut s = Session::new();
        let r = cube_target(&mut s);
        assert_eq!(r["status"], "ok");
        assert_eq!(r["payload"]["graph"]["nodes"].as_array().unwrap().len(), 6);
        assert_eq!(r["payload"]["graph"]["edges"].as_array().unwrap().len(), 12);
        let a = crate::env::convert_to_face_extrusion(&fixtures::cube(1.0)).unwrap()[0];
        let r = s.handle_line(&req(2, "add_extrude_by_target_face", json!({"start_face": a.start, "end_face": a.end, "operation": "new_body"}))).0;
        assert_eq!(r["payload"]["iou"], 1.0);
        assert_eq!(r["id"], 2);
    }

    #[test]
    fn error_codes() {
        let mut s = Session::new();
        assert_eq!(s.handle_line(&req(1, "frobnicate", json!({}))).0["error"]["code"], "unknown_command");
        assert_eq!(s.handle_line(&req(2, "screenshot", json!({}))).0["error"]["code"], "unsupported");
        let (r, close) = s.handle_line("{not json");
        assert_eq!((r["error"]["code"].as_str(), close), (Some("malformed_request"), false));
        let (r, close) = s.handle_line(r#"{"id":3,"command":"mesh","protocol":"v0"}"#);
        assert_eq!((r["error"]["code"].as_str(), close), (Some("protocol_mismatch"), true));
        assert_eq!(s.handle_line(&req(4, "revert_to_target", json!({}))).0["error"]["code"], "no_target");
    }

    #[test]
    fn sketch_commands_build_geometry() {
        let mut s = Session::new();
        cube_target(&mut s);
        s.handle_line(&req(2, "add_sketch", json!({"sketch_plane": "XY"})));
        let pts = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
        let mut last = Value::Null;
        for k in 0..4 {
            last = s.handle_line(&req(3 + k as u64, "add_line", json!({"p1": pts[k], "p2": pts[(k + 1) % 4]}))).0;
        }
        let id = last["payload"]["profiles"][0].clone();
        let r = s.handle_line(&req(9, "add_extrude", json!({"profile_id": id, "distance": 1.0, "operation": "NewBodyFeatureOperation"}))).0;
        assert_eq!(r["payload"]["exact"], true);
        let obj = s.handle_line(&req(10, "mesh", json!({}))).0;
        assert_eq!(obj["payload"]["obj"].as_str().unwrap().lines().filter(|l| l.starts_with("g ")).count(), 6);
    }
}

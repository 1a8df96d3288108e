use std::fs;
use std::io::Write;
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use cadrecon_core::agent::{build_imitation_dataset, policy_for, train, AgentKind, PolicyParams, TrainConfig, HIDDEN};
use cadrecon_core::brep::extract_graph;
use cadrecon_core::dsl::{execute, import_dataset_record, parse_program, serialize_program, Program};
use cadrecon_core::env::{convert_to_face_extrusion, Env};
use cadrecon_core::eval::{run_benchmark, write_csv};
use cadrecon_core::kernel::solid::bodies_bbox;
use cadrecon_core::kernel::write_obj;
use cadrecon_core::search::{search, Procedure, SearchConfig};
use cadrecon_core::server::{default_port, serve, PORT_VAR};
use cadrecon_core::synth::{generate_convertible_corpus, generate_corpus, read_manifest, write_manifest, GenConfig};
use clap::{Args, Parser, Subcommand, ValueEnum};

/// Sketch-and-extrude CAD reconstruction toolkit.
#[derive(Parser)]
#[command(name = "cadrecon", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a program and write its geometry.
    Exec {
        program: PathBuf,
        /// OBJ output, one `g` group per face.
        #[arg(long)]
        obj: Option<PathBuf>,
        /// Face-adjacency graph output (JSON).
        #[arg(long)]
        graph: Option<PathBuf>,
    },
    /// Generate a synthetic corpus manifest (JSON lines).
    Gen {
        #[arg(long, default_value_t = 100)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        min_extrudes: usize,
        #[arg(long, default_value_t = 3)]
        max_extrudes: usize,
        /// Keep only designs convertible to face extrusions.
        #[arg(long)]
        convertible: bool,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Train a policy checkpoint by imitation on a corpus.
    Train {
        corpus: PathBuf,
        #[arg(long, value_enum, default_value_t = Agent::Gcn)]
        agent: Agent,
        #[arg(long, default_value_t = 100)]
        epochs: usize,
        #[arg(long, default_value_t = 1e-4)]
        lr: f64,
        #[arg(long, default_value_t = 32)]
        batch_size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Search for a reconstruction of one target program.
    Reconstruct {
        target: PathBuf,
        #[command(flatten)]
        search: SearchArgs,
        /// SearchReport output (JSON); stdout when omitted.
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Benchmark an agent and search procedure over a corpus.
    Bench {
        corpus: PathBuf,
        #[command(flatten)]
        search: SearchArgs,
        /// Per-design CSV; stdout when omitted.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Aggregate JSON; stderr when omitted.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Convert between formats.
    Export {
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = From::Dsl)]
        from: From,
        #[arg(long, value_enum)]
        to: To,
        /// Output path; stdout when omitted.
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Serve the environment over line-delimited JSON on TCP.
    Serve {
        /// Port; defaults to the CADRECON_PORT environment variable or 8765.
        #[arg(long)]
        port: Option<u16>,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
    },
}

#[derive(Args)]
struct SearchArgs {
    #[arg(long, value_enum, default_value_t = Agent::Rand)]
    agent: Agent,
    /// Trained checkpoint; neural agents without one use seeded initial weights.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = SearchKind::Rollout)]
    search: SearchKind,
    #[arg(long, default_value_t = 100)]
    budget: usize,
    #[arg(long, default_value_t = 5)]
    beam_width: usize,
    /// Per-design time limit in seconds.
    #[arg(long, default_value_t = 600)]
    time_limit: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum Agent {
    Rand,
    Mlp,
    Gcn,
}

impl Agent {
    fn kind(self) -> AgentKind {
        match self {
            Agent::Rand => AgentKind::Rand,
            Agent::Mlp => AgentKind::Mlp,
            Agent::Gcn => AgentKind::Gcn,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SearchKind {
    Rollout,
    Beam,
    BestFirst,
}

#[derive(Clone, Copy, ValueEnum)]
enum From {
    /// Canonical program JSON.
    Dsl,
    /// Reconstruction-dataset design record.
    Dataset,
}

#[derive(Clone, Copy, ValueEnum)]
enum To {
    Dsl,
    Obj,
    Graph,
    /// Face-extrusion action sequence.
    Actions,
}

fn read_program(path: &Path) -> Result<Program, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    parse_program(&text).map_err(|e| format!("{}: {e}", path.display()))
}

fn read_corpus(path: &Path) -> Result<Vec<Program>, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    read_manifest(&text).map_err(|(line, e)| format!("{}:{line}: {e}", path.display()))
}

fn write_out(path: Option<&Path>, text: &str) -> Result<(), String> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| format!("{}: {e}", p.display())),
        None => std::io::stdout().write_all(text.as_bytes()).map_err(|e| e.to_string()),
    }
}

fn graph_json(program: &Program) -> Result<String, String> {
    let bodies = execute(program).map_err(|e| e.to_string())?.final_bodies().to_vec();
    let g = extract_graph(&bodies, &bodies_bbox(&bodies)).map_err(|e| e.to_string())?;
    Ok(g.to_json().to_string() + "\n")
}

impl SearchArgs {
    fn config(&self) -> SearchConfig {
        let procedure = match self.search {
            SearchKind::Rollout => Procedure::Rollout,
            SearchKind::Beam => Procedure::Beam,
            SearchKind::BestFirst => Procedure::BestFirst,
        };
        let mut c = SearchConfig::new(procedure, self.budget.max(1), self.seed);
        c.beam_width = self.beam_width.max(1);
        c.time_limit = Duration::from_secs(self.time_limit);
        c
    }

    fn policy(&self) -> Result<Box<dyn cadrecon_core::agent::Policy>, String> {
        let kind = self.agent.kind();
        let params = match (&self.checkpoint, kind) {
            (_, AgentKind::Rand) => None,
            (Some(p), _) => Some(PolicyParams::load(p).map_err(|e| e.to_string())?),
            (None, _) => {
                eprintln!("warning: no --checkpoint given; {kind} uses untrained weights");
                Some(PolicyParams::init(kind, HIDDEN, self.seed))
            }
        };
        policy_for(kind, params).map_err(|e| e.to_string())
    }
}

fn run(cmd: Cmd) -> Result<(), String> {
    match cmd {
        Cmd::Exec { program, obj, graph } => {
            let p = read_program(&program)?;
            let trace = execute(&p).map_err(|e| e.to_string())?;
            let bodies = trace.final_bodies();
            if let Some(path) = obj {
                fs::write(&path, write_obj(bodies)).map_err(|e| format!("{}: {e}", path.display()))?;
            }
            if let Some(path) = graph {
                fs::write(&path, graph_json(&p)?).map_err(|e| format!("{}: {e}", path.display()))?;
            }
            let volume: f64 = bodies.iter().map(|b| b.signed_volume()).sum();
            let faces: usize = bodies.iter().map(|b| b.face_count()).sum();
            println!("bodies {} faces {faces} volume {volume:.6}", bodies.len());
            Ok(())
        }
        Cmd::Gen { count, seed, min_extrudes, max_extrudes, convertible, out } => {
            if min_extrudes == 0 || min_extrudes > max_extrudes {
                return Err("need 1 <= --min-extrudes <= --max-extrudes".into());
            }
            let config = GenConfig::synthetic(seed, (min_extrudes, max_extrudes));
            let corpus = if convertible {
                generate_convertible_corpus(&config, count, 1)
            } else {
                generate_corpus(&config, count)
            };
            fs::write(&out, write_manifest(&corpus)).map_err(|e| format!("{}: {e}", out.display()))?;
            eprintln!("wrote {} designs to {}", corpus.len(), out.display());
            Ok(())
        }
        Cmd::Train { corpus, agent, epochs, lr, batch_size, seed, out } => {
            let programs = read_corpus(&corpus)?;
            let ds = build_imitation_dataset(&programs);
            eprintln!(
                "{} examples from {}/{} convertible designs ({:.1}%)",
                ds.examples.len(),
                ds.convertible,
                ds.designs,
                100.0 * ds.convertible_fraction()
            );
            let mut cfg = TrainConfig::new(agent.kind(), seed);
            cfg.epochs = epochs;
            cfg.learning_rate = lr;
            cfg.batch_size = batch_size;
            let report = train(&ds.examples, &cfg, |s| eprintln!("epoch {:>3} loss {:.5} lr {:.0e}", s.epoch, s.loss, s.learning_rate))
                .map_err(|e| e.to_string())?;
            report.params.save(&out).map_err(|e| e.to_string())?;
            if let Some(b) = report.best_epoch {
                eprintln!("saved epoch {b} to {}", out.display());
            }
            Ok(())
        }
        Cmd::Reconstruct { target, search: args, out } => {
            let p = read_program(&target)?;
            let bodies = execute(&p).map_err(|e| e.to_string())?.final_bodies().to_vec();
            let mut env = Env::new();
            env.set_target(bodies).map_err(|e| e.to_string())?;
            let mut policy = args.policy()?;
            let report = search(&mut env, policy.as_mut(), &args.config()).map_err(|e| e.to_string())?;
            let text = serde_json::to_string_pretty(&report).map_err(|e| e.to_string())? + "\n";
            write_out(out.as_deref(), &text)
        }
        Cmd::Bench { corpus, search: args, csv, json } => {
            let programs = read_corpus(&corpus)?;
            let mut policy = args.policy()?;
            let bench = run_benchmark(&programs, policy.as_mut(), &args.config(), |_| {});
            let mut buf = Vec::new();
            write_csv(&bench.rows, &mut buf).map_err(|e| e.to_string())?;
            write_out(csv.as_deref(), &String::from_utf8(buf).map_err(|e| e.to_string())?)?;
            let summary = serde_json::to_string_pretty(&bench.summary).map_err(|e| e.to_string())? + "\n";
            match json {
                Some(p) => fs::write(&p, summary).map_err(|e| format!("{}: {e}", p.display())),
                None => {
                    eprint!("{summary}");
                    Ok(())
                }
            }
        }
        Cmd::Export { input, from, to, out } => {
            let program = match from {
                From::Dsl => read_program(&input)?,
                From::Dataset => {
                    let text = fs::read_to_string(&input).map_err(|e| format!("{}: {e}", input.display()))?;
                    let v: serde_json::Value = serde_json::from_str(&text).map_err(|e| format!("{}: {e}", input.display()))?;
                    import_dataset_record(&v).map_err(|e| e.to_string())?
                }
            };
            let text = match to {
                To::Dsl => serialize_program(&program) + "\n",
                To::Obj => write_obj(execute(&program).map_err(|e| e.to_string())?.final_bodies()),
                To::Graph => graph_json(&program)?,
                To::Actions => {
                    let actions = convert_to_face_extrusion(&program).map_err(|e| e.to_string())?;
                    serde_json::to_string(&actions).map_err(|e| e.to_string())? + "\n"
                }
            };
            write_out(out.as_deref(), &text)
        }
        Cmd::Serve { port, host } => {
            let port = port.unwrap_or_else(default_port);
            let listener = TcpListener::bind((host.as_str(), port)).map_err(|e| format!("{host}:{port}: {e}"))?;
            let addr = listener.local_addr().map_err(|e| e.to_string())?;
            eprintln!("listening on {addr} (protocol v1; default port from {PORT_VAR})");
            serve(listener).map_err(|e| e.to_string())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

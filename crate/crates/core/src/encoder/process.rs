//! Backends that run in a child process and speak JSON Lines over stdio.
//!
//! The child prints one handshake line on startup:
//!
//! ```text
//! {"ready": true, "model": "msclap-2023", "dimension": 1024, "sample_rate": 44100, "seed_sensitive": true}
//! ```
//!
//! `seed_sensitive` (default false) says the request seed can change the
//! output, e.g. through random cropping of long clips.
//!
//! then answers each request line with one response line:
//!
//! ```text
//! {"op": "text", "texts": ["..."], "seed": 0}      -> {"embeddings": [[...], ...]}
//! {"op": "audio", "paths": ["/abs/a.wav"], "seed": 0} -> {"embeddings": [[...], ...]}
//! ```
//!
//! Failures come back as `{"error": "..."}`. `scripts/msclap_encoder.py`
//! implements this for the MS-CLAP checkpoints.

use std::io::{BufRead, BufReader, Write};
use std::path::PathBuf;
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::Mutex;

use serde::Deserialize;
use serde_json::json;

use super::{AudioClip, BackendConfig, Capabilities, EncoderBackend, EncoderError, Preprocessing};

const DEFAULT_SCRIPT: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../../scripts/msclap_encoder.py");

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProcessConfig {
    pub backend_id: String,
    pub command: Vec<String>,
}

fn env_key(backend_id: &str, suffix: &str) -> String {
    format!("TSPE_{}_{suffix}", backend_id.to_uppercase().replace('-', "_"))
}

impl ProcessConfig {
    /// Command line for `backend_id`, from config, then `TSPE_<ID>_CMD`, then
    /// the bundled script. A checkpoint from config or `TSPE_<ID>_WEIGHTS` is
    /// passed as `--weights <path>`.
    pub fn resolve(backend_id: &str, config: &BackendConfig) -> Result<Self, EncoderError> {
        let mut command = match config.commands.get(backend_id) {
            Some(c) => c.clone(),
            None => match std::env::var(env_key(backend_id, "CMD")) {
                Ok(c) => c.split_whitespace().map(String::from).collect(),
                Err(_) => {
                    let version = backend_id.trim_start_matches("msclap");
                    vec!["python3".into(), DEFAULT_SCRIPT.into(), "--version".into(), version.into()]
                }
            },
        };
        if command.is_empty() {
            return Err(EncoderError::BackendLoad(format!("empty command for `{backend_id}`")));
        }
        let weights = config
            .checkpoints
            .get(backend_id)
            .cloned()
            .or_else(|| std::env::var(env_key(backend_id, "WEIGHTS")).ok().map(PathBuf::from));
        if let Some(w) = weights {
            if !w.exists() {
                return Err(EncoderError::BackendLoad(format!("checkpoint {} does not exist", w.display())));
            }
            command.push("--weights".into());
            command.push(w.display().to_string());
        }
        Ok(Self {
            backend_id: backend_id.into(),
            command,
        })
    }
}

#[derive(Deserialize)]
struct Handshake {
    ready: bool,
    #[serde(default)]
    error: Option<String>,
    #[serde(default)]
    model: String,
    #[serde(default)]
    dimension: usize,
    #[serde(default)]
    sample_rate: u32,
    #[serde(default)]
    seed_sensitive: bool,
}

#[derive(Deserialize)]
struct Reply {
    #[serde(default)]
    embeddings: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    error: Option<String>,
}

struct Pipe {
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
}

pub struct ProcessBackend {
    config: ProcessConfig,
    model: String,
    dimension: usize,
    sample_rate: u32,
    seed_sensitive: bool,
    pipe: Mutex<Pipe>,
}

impl ProcessBackend {
    pub fn spawn(config: ProcessConfig) -> Result<Self, EncoderError> {
        let load = |m: String| EncoderError::BackendLoad(format!("{}: {m}", config.backend_id));
        let mut child = Command::new(&config.command[0])
            .args(&config.command[1..])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| load(format!("cannot start `{}`: {e}", config.command.join(" "))))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let mut stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        let mut line = String::new();
        let read = stdout.read_line(&mut line).map_err(|e| load(e.to_string()));
        let hs: Result<Handshake, EncoderError> = read.and_then(|n| {
            if n == 0 {
                Err(load("process exited before the handshake".into()))
            } else {
                serde_json::from_str(&line).map_err(|e| load(format!("bad handshake `{}`: {e}", line.trim())))
            }
        });
        let hs = match hs {
            Ok(h) if h.ready && h.dimension > 0 => h,
            Ok(h) => {
                let _ = child.kill();
                let _ = child.wait();
                return Err(load(h.error.unwrap_or_else(|| "backend not ready".into())));
            }
            Err(e) => {
                let _ = child.kill();
                let _ = child.wait();
                return Err(e);
            }
        };
        Ok(Self {
            model: if hs.model.is_empty() { config.backend_id.clone() } else { hs.model },
            config,
            dimension: hs.dimension,
            sample_rate: hs.sample_rate,
            seed_sensitive: hs.seed_sensitive,
            pipe: Mutex::new(Pipe { child, stdin, stdout }),
        })
    }

    fn request(&self, body: serde_json::Value) -> Result<Vec<Vec<f64>>, EncoderError> {
        let mut pipe = self.pipe.lock().expect("backend pipe lock");
        let io = |e: std::io::Error| EncoderError::Encode(format!("{}: {e}", self.config.backend_id));
        writeln!(pipe.stdin, "{body}").map_err(io)?;
        pipe.stdin.flush().map_err(io)?;
        let mut line = String::new();
        if pipe.stdout.read_line(&mut line).map_err(io)? == 0 {
            return Err(EncoderError::Encode(format!("{}: backend process exited", self.config.backend_id)));
        }
        let reply: Reply = serde_json::from_str(&line)
            .map_err(|e| EncoderError::Encode(format!("{}: bad reply: {e}", self.config.backend_id)))?;
        match (reply.embeddings, reply.error) {
            (_, Some(err)) => Err(EncoderError::Encode(format!("{}: {err}", self.config.backend_id))),
            (Some(v), None) => Ok(v),
            (None, None) => Err(EncoderError::Encode(format!("{}: reply without embeddings", self.config.backend_id))),
        }
    }
}

impl Drop for ProcessBackend {
    fn drop(&mut self) {
        if let Ok(pipe) = self.pipe.get_mut() {
            let _ = pipe.child.kill();
            let _ = pipe.child.wait();
        }
    }
}

impl EncoderBackend for ProcessBackend {
    fn backend_id(&self) -> &str {
        &self.config.backend_id
    }

    fn fingerprint(&self) -> String {
        format!("{}-{}-d{}", self.config.backend_id, self.model, self.dimension)
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities::BOTH
    }

    fn preprocessing(&self) -> Preprocessing {
        Preprocessing {
            sample_rate: self.sample_rate,
            mono: true,
            clip_policy: format!("delegated to {}", self.model),
        }
    }

    fn seed_sensitive(&self) -> bool {
        self.seed_sensitive
    }

    fn encode_text(&self, texts: &[String], seed: u64) -> Result<Vec<Vec<f64>>, EncoderError> {
        self.request(json!({"op": "text", "texts": texts, "seed": seed}))
    }

    fn encode_audio(&self, clips: &[AudioClip], seed: u64) -> Result<Vec<Vec<f64>>, EncoderError> {
        let paths: Vec<String> = clips
            .iter()
            .map(|c| {
                std::path::absolute(&c.path)
                    .unwrap_or_else(|_| c.path.clone())
                    .display()
                    .to_string()
            })
            .collect();
        self.request(json!({"op": "audio", "paths": paths, "seed": seed}))
    }
}

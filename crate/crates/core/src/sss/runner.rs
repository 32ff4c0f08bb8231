//! Executing one sample on one argument tuple.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{mpsc, Arc};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::toy::{Dialect, Program, ToyError};
use crate::corpus::CodeSample;
use crate::error::{Error, Result};

/// Command template that selects the in-process toy interpreter.
pub const BUILTIN_TOY: &str = "builtin:toy";

/// Absolute tolerance for comparing numeric outputs.
pub const FLOAT_TOLERANCE: f64 = 1e-6;

const POLL_INTERVAL: Duration = Duration::from_millis(2);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecStatus {
    Ok,
    Crash,
    Timeout,
    ParseFailure,
}

/// Outcome of one execution. `output` is present exactly when the status is
/// [`ExecStatus::Ok`].
#[derive(Debug, Clone, PartialEq)]
pub struct ExecutionResult {
    status: ExecStatus,
    output: Option<Value>,
    /// Wall-clock seconds.
    pub duration: f64,
    /// Human-readable reason for a failure.
    pub detail: Option<String>,
}

impl ExecutionResult {
    pub fn ok(output: Value, duration: f64) -> Self {
        ExecutionResult {
            status: ExecStatus::Ok,
            output: Some(output),
            duration,
            detail: None,
        }
    }

    pub fn failed(status: ExecStatus, detail: impl Into<String>, duration: f64) -> Self {
        assert!(status != ExecStatus::Ok, "a failed result needs a failure status");
        ExecutionResult {
            status,
            output: None,
            duration,
            detail: Some(detail.into()),
        }
    }

    pub fn status(&self) -> ExecStatus {
        self.status
    }

    pub fn output(&self) -> Option<&Value> {
        self.output.as_ref()
    }

    /// Both executions succeeded with equal outputs.
    pub fn matches(&self, other: &ExecutionResult) -> bool {
        match (&self.output, &other.output) {
            (Some(a), Some(b)) => values_match(a, b),
            _ => false,
        }
    }
}

/// Structural equality with numbers compared within [`FLOAT_TOLERANCE`].
/// Two integers compare exactly.
pub fn values_match(a: &Value, b: &Value) -> bool {
    match (a, b) {
        (Value::Number(x), Value::Number(y)) => match (x.as_i64(), y.as_i64()) {
            (Some(i), Some(j)) => i == j,
            _ => match (x.as_f64(), y.as_f64()) {
                (Some(p), Some(q)) => (p - q).abs() <= FLOAT_TOLERANCE,
                _ => x == y,
            },
        },
        (Value::Array(xs), Value::Array(ys)) => {
            xs.len() == ys.len() && xs.iter().zip(ys).all(|(x, y)| values_match(x, y))
        }
        (Value::Object(xs), Value::Object(ys)) => {
            xs.len() == ys.len()
                && xs
                    .iter()
                    .all(|(k, x)| ys.get(k).is_some_and(|y| values_match(x, y)))
        }
        _ => a == b,
    }
}

fn default_timeout() -> f64 {
    5.0
}

fn default_max_output() -> usize {
    1 << 20
}

/// How to run samples of one language.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LanguageRunner {
    /// Whitespace-separated command; `{file}` expands to the sample path.
    /// [`BUILTIN_TOY`] selects the in-process interpreter.
    pub command_template: String,
    #[serde(default = "default_timeout")]
    pub timeout_s: f64,
    #[serde(default = "default_max_output")]
    pub max_output_bytes: usize,
}

impl LanguageRunner {
    pub fn command(template: impl Into<String>) -> Self {
        LanguageRunner {
            command_template: template.into(),
            timeout_s: default_timeout(),
            max_output_bytes: default_max_output(),
        }
    }

    fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.timeout_s)
    }
}

/// Language tag to runner settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RunnerConfig {
    pub languages: BTreeMap<String, LanguageRunner>,
}

impl Default for RunnerConfig {
    /// Both toy dialects on the built-in interpreter.
    fn default() -> Self {
        let languages = Dialect::ALL
            .iter()
            .map(|d| (d.language().to_string(), LanguageRunner::command(BUILTIN_TOY)))
            .collect();
        RunnerConfig { languages }
    }
}

impl RunnerConfig {
    pub fn empty() -> Self {
        RunnerConfig {
            languages: BTreeMap::new(),
        }
    }

    /// Read a runner config; `.json` files are JSON, anything else TOML.
    pub fn read(path: &Path) -> Result<Self> {
        let text = crate::codec::read_to_string(path)?;
        let config: RunnerConfig = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))?
        } else {
            toml::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))?
        };
        config.validate()?;
        Ok(config)
    }

    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (lang, r) in &self.languages {
            if r.command_template.split_whitespace().next().is_none() {
                out.push(format!("runner.{lang}.command_template is empty"));
            }
            if r.command_template.starts_with("builtin:") && r.command_template != BUILTIN_TOY {
                out.push(format!(
                    "runner.{lang}.command_template names unknown builtin {:?}",
                    r.command_template
                ));
            }
            if r.command_template == BUILTIN_TOY && Dialect::for_language(lang).is_none() {
                out.push(format!("runner.{lang}: the builtin interpreter only runs toy and toyb"));
            }
            if !(r.timeout_s.is_finite() && r.timeout_s > 0.0) {
                out.push(format!("runner.{lang}.timeout_s = {} must be > 0", r.timeout_s));
            }
            if r.max_output_bytes == 0 {
                out.push(format!("runner.{lang}.max_output_bytes must be at least 1"));
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let problems = self.problems();
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }

    /// Settings for a language, or a configuration error.
    pub fn for_language(&self, language: &str) -> Result<&LanguageRunner> {
        self.languages
            .get(language)
            .ok_or_else(|| Error::config(format!("no runner command template for language {language:?}")))
    }
}

/// Runs samples according to a [`RunnerConfig`], counting what it does.
#[derive(Debug)]
pub struct SampleRunner {
    config: RunnerConfig,
    executions: AtomicUsize,
    subprocesses: AtomicUsize,
}

impl SampleRunner {
    pub fn new(config: RunnerConfig) -> Result<Self> {
        config.validate()?;
        Ok(SampleRunner {
            config,
            executions: AtomicUsize::new(0),
            subprocesses: AtomicUsize::new(0),
        })
    }

    pub fn config(&self) -> &RunnerConfig {
        &self.config
    }

    /// Executions performed so far, in-process ones included.
    pub fn executions(&self) -> usize {
        self.executions.load(Ordering::SeqCst)
    }

    /// Child processes spawned so far.
    pub fn subprocesses(&self) -> usize {
        self.subprocesses.load(Ordering::SeqCst)
    }

    /// Fail early if any of the languages has no runner.
    pub fn check_languages<'a>(&self, languages: impl IntoIterator<Item = &'a str>) -> Result<()> {
        let mut missing: Vec<String> = languages
            .into_iter()
            .filter(|l| !self.config.languages.contains_key(*l))
            .map(|l| format!("no runner command template for language {l:?}"))
            .collect();
        missing.sort();
        missing.dedup();
        if missing.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(missing))
        }
    }

    /// Run once. Program misbehavior is reported in the result's status;
    /// only configuration problems are errors.
    pub fn run(&self, sample: &CodeSample, input: &[Value]) -> Result<ExecutionResult> {
        let settings = self.config.for_language(&sample.language)?;
        self.executions.fetch_add(1, Ordering::SeqCst);
        if settings.command_template == BUILTIN_TOY {
            let dialect = Dialect::for_language(&sample.language).ok_or_else(|| {
                Error::config(format!("builtin interpreter cannot run language {:?}", sample.language))
            })?;
            return Ok(run_toy(&sample.text, dialect, input, settings));
        }
        self.subprocesses.fetch_add(1, Ordering::SeqCst);
        run_command(sample, input, settings)
    }
}

/// Execute `sample` on `input` under `runner`.
pub fn run_sample(sample: &CodeSample, input: &[Value], runner: &SampleRunner) -> Result<ExecutionResult> {
    runner.run(sample, input)
}

fn run_toy(text: &str, dialect: Dialect, input: &[Value], settings: &LanguageRunner) -> ExecutionResult {
    let start = Instant::now();
    let outcome = Program::parse(text, dialect).and_then(|p| p.run(input, settings.timeout()));
    let elapsed = start.elapsed().as_secs_f64();
    match outcome {
        Ok(value) => {
            let size = serde_json::to_string(&value).map(|s| s.len()).unwrap_or(usize::MAX);
            if size > settings.max_output_bytes {
                ExecutionResult::failed(ExecStatus::Crash, "output limit exceeded", elapsed)
            } else {
                ExecutionResult::ok(value, elapsed)
            }
        }
        Err(ToyError::Timeout) => ExecutionResult::failed(ExecStatus::Timeout, "time limit exceeded", elapsed),
        Err(e) => ExecutionResult::failed(ExecStatus::Crash, e.to_string(), elapsed),
    }
}

fn expand(template: &str, file: &Path) -> Vec<String> {
    let file = file.to_string_lossy();
    template
        .split_whitespace()
        .map(|part| part.replace("{file}", &file))
        .collect()
}

fn run_command(sample: &CodeSample, input: &[Value], settings: &LanguageRunner) -> Result<ExecutionResult> {
    // Samples built in memory get a temporary file that lives for the run.
    let mut _scratch = None;
    let path: PathBuf = match &sample.path {
        Some(p) => p.clone(),
        None => {
            let mut f = tempfile::Builder::new()
                .prefix("sample-")
                .suffix(&format!(".{}", sample.language))
                .tempfile()
                .map_err(|e| Error::io(std::env::temp_dir(), e))?;
            f.write_all(sample.text.as_bytes())
                .map_err(|e| Error::io(f.path(), e))?;
            let p = f.path().to_path_buf();
            _scratch = Some(f);
            p
        }
    };
    let argv = expand(&settings.command_template, &path);
    let start = Instant::now();
    let elapsed = |s: Instant| s.elapsed().as_secs_f64();

    let mut child = match Command::new(&argv[0])
        .args(&argv[1..])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
    {
        Ok(c) => c,
        Err(e) => {
            return Ok(ExecutionResult::failed(
                ExecStatus::Crash,
                format!("could not start {:?}: {e}", argv[0]),
                elapsed(start),
            ))
        }
    };

    let payload = format!("{}\n", Value::Array(input.to_vec()));
    let mut stdin = child.stdin.take().expect("stdin is piped");
    std::thread::spawn(move || {
        // A program that never reads its input closes the pipe early.
        let _ = stdin.write_all(payload.as_bytes());
    });

    let cap = settings.max_output_bytes;
    let overflow = Arc::new(AtomicBool::new(false));
    let mut stdout = child.stdout.take().expect("stdout is piped");
    let (tx, rx) = mpsc::channel();
    {
        let overflow = Arc::clone(&overflow);
        std::thread::spawn(move || {
            let mut buf = Vec::new();
            let mut chunk = [0u8; 8192];
            loop {
                match stdout.read(&mut chunk) {
                    Ok(0) | Err(_) => break,
                    Ok(n) => {
                        buf.extend_from_slice(&chunk[..n]);
                        if buf.len() > cap {
                            overflow.store(true, Ordering::SeqCst);
                            break;
                        }
                    }
                }
            }
            let _ = tx.send(buf);
        });
    }

    let deadline = start + settings.timeout();
    let status = loop {
        match child.try_wait() {
            Ok(Some(status)) => break status,
            Ok(None) => {}
            Err(e) => {
                let _ = child.kill();
                let _ = child.wait();
                return Ok(ExecutionResult::failed(ExecStatus::Crash, e.to_string(), elapsed(start)));
            }
        }
        if overflow.load(Ordering::SeqCst) {
            let _ = child.kill();
            let _ = child.wait();
            return Ok(ExecutionResult::failed(
                ExecStatus::Crash,
                "output limit exceeded",
                elapsed(start),
            ));
        }
        if Instant::now() >= deadline {
            let _ = child.kill();
            let _ = child.wait();
            return Ok(ExecutionResult::failed(
                ExecStatus::Timeout,
                "time limit exceeded",
                elapsed(start),
            ));
        }
        std::thread::sleep(POLL_INTERVAL);
    };

    // A grandchild holding the pipe open must not stall us past the deadline.
    let remaining = deadline.saturating_duration_since(Instant::now()) + Duration::from_millis(100);
    let out = match rx.recv_timeout(remaining) {
        Ok(buf) => buf,
        Err(_) => {
            return Ok(ExecutionResult::failed(
                ExecStatus::Timeout,
                "output stream not closed",
                elapsed(start),
            ))
        }
    };
    let took = elapsed(start);
    if out.len() > cap {
        return Ok(ExecutionResult::failed(ExecStatus::Crash, "output limit exceeded", took));
    }
    if !status.success() {
        return Ok(ExecutionResult::failed(ExecStatus::Crash, format!("exited with {status}"), took));
    }
    Ok(match serde_json::from_slice::<Value>(&out) {
        Ok(v) => ExecutionResult::ok(v, took),
        Err(e) => ExecutionResult::failed(ExecStatus::ParseFailure, format!("output is not JSON: {e}"), took),
    })
}

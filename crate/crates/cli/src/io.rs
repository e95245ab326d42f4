use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Serialize;
use serde_json::Value;

use tableforge::dataset::{ingest, Format, Ingested};

use crate::RunConfig;

/// Bad flag combinations or values; exits with status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage<T>(msg: impl Into<String>) -> Result<T> {
    Err(UsageError(msg.into()).into())
}

pub fn require_file(path: &Path) -> Result<()> {
    if !path.is_file() {
        bail!("{} is not a readable file", path.display());
    }
    Ok(())
}

/// JSON objects of a JSONL file with their 1-based line numbers. Blank
/// lines are skipped; any malformed line is an error.
pub fn read_objects(path: &Path) -> Result<Vec<(usize, Value)>> {
    require_file(path)?;
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.with_context(|| format!("reading {}", path.display()))?;
        if line.trim().is_empty() {
            continue;
        }
        let v: Value =
            serde_json::from_str(&line).with_context(|| format!("{}:{}: invalid JSON", path.display(), i + 1))?;
        if !v.is_object() {
            bail!("{}:{}: expected a JSON object", path.display(), i + 1);
        }
        out.push((i + 1, v));
    }
    Ok(out)
}

pub fn string_field(v: &Value, key: &str, path: &Path, line: usize) -> Result<String> {
    match v.get(key) {
        Some(Value::String(s)) => Ok(s.clone()),
        Some(other) => Ok(other.to_string()),
        None => bail!("{}:{line}: missing \"{key}\"", path.display()),
    }
}

/// Reads records, reporting rejected lines on stderr.
pub fn load_records(path: &Path, format: Format, cfg: &RunConfig) -> Result<Ingested> {
    require_file(path)?;
    let got = ingest(path, format)?;
    if !got.failures.is_empty() {
        eprintln!("{}: {} invalid record(s)", path.display(), got.failures.len());
        if cfg.verbose > 0 {
            for f in &got.failures {
                eprintln!("  line {}: {}", f.line, f.reason);
            }
        }
    }
    Ok(got)
}

pub fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

pub fn write_json_file<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

/// Prints the command result on stdout.
pub fn emit<T: Serialize>(value: &T, cfg: &RunConfig) -> Result<()> {
    let v = serde_json::to_value(value)?;
    let stdout = io::stdout();
    let mut out = stdout.lock();
    if cfg.pretty {
        let mut lines = Vec::new();
        flatten("", &v, &mut lines);
        for l in lines {
            writeln!(out, "{l}")?;
        }
    } else {
        serde_json::to_writer(&mut out, &v)?;
        writeln!(out)?;
    }
    Ok(())
}

/// `key.sub: value` lines; long arrays are summarised by their length.
fn flatten(prefix: &str, v: &Value, out: &mut Vec<String>) {
    let key = |k: &str| if prefix.is_empty() { k.to_string() } else { format!("{prefix}.{k}") };
    match v {
        Value::Object(map) => {
            for (k, x) in map {
                flatten(&key(k), x, out);
            }
        }
        Value::Array(xs) if xs.len() > 8 || xs.iter().any(|x| x.is_object() || x.is_array()) => {
            out.push(format!("{prefix}: {} entries", xs.len()));
        }
        Value::Array(xs) => {
            let items: Vec<String> = xs.iter().map(scalar).collect();
            out.push(format!("{prefix}: [{}]", items.join(", ")));
        }
        other => out.push(format!("{prefix}: {}", scalar(other))),
    }
}

fn scalar(v: &Value) -> String {
    match v {
        Value::Null => "-".into(),
        Value::String(s) => s.clone(),
        Value::Number(n) => match n.as_f64() {
            Some(f) if !n.is_i64() && !n.is_u64() => format!("{f:.4}"),
            _ => n.to_string(),
        },
        other => other.to_string(),
    }
}

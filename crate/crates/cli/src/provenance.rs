//! Provenance headers, output guards, and the CLI failure type.
//!
//! Every file the tool writes carries the tool version, the command that
//! produced it, the seed (or `none`), and the parameters. The timestamp is
//! the only non-deterministic byte and always occupies its own line — strip
//! the `generated` line and two runs with identical flags compare equal.

use std::fmt::Display;
use std::fs;
use std::path::Path;

use chrono::{SecondsFormat, Utc};
use serde_json::{json, Map, Value};

/// Command outcomes that should not look like a crash: validation and
/// runtime problems exit 1, audit-suite violations exit 2.
#[derive(Debug)]
pub enum Failure {
    Invalid(String),
    Verification(String),
}

impl From<msl_core::Error> for Failure {
    fn from(err: msl_core::Error) -> Self {
        Failure::Invalid(err.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(err: std::io::Error) -> Self {
        Failure::Invalid(err.to_string())
    }
}

pub struct Provenance {
    tool: String,
    generated: String,
    command: String,
    seed: Option<u64>,
    params: Vec<(String, String)>,
}

impl Provenance {
    pub fn new(command: &str, seed: Option<u64>) -> Self {
        Self {
            tool: format!("msl {}", env!("CARGO_PKG_VERSION")),
            generated: Utc::now().to_rfc3339_opts(SecondsFormat::Secs, true),
            command: command.to_string(),
            seed,
            params: Vec::new(),
        }
    }

    pub fn param(mut self, key: &str, value: impl Display) -> Self {
        self.params.push((key.to_string(), value.to_string()));
        self
    }

    /// `#`-prefixed block prepended to CSV outputs.
    pub fn csv_header(&self) -> String {
        let mut out = format!(
            "# tool: {}\n# generated: {}\n# command: {}\n",
            self.tool, self.generated, self.command
        );
        match self.seed {
            Some(seed) => out.push_str(&format!("# seed: {seed}\n")),
            None => out.push_str("# seed: none\n"),
        }
        if !self.params.is_empty() {
            let kv: Vec<String> = self
                .params
                .iter()
                .map(|(k, v)| format!("{k}={v}"))
                .collect();
            out.push_str(&format!("# params: {}\n", kv.join(" ")));
        }
        out
    }

    /// The `provenance` object embedded in JSON outputs.
    pub fn json_value(&self) -> Value {
        let mut params = Map::new();
        for (k, v) in &self.params {
            params.insert(k.clone(), Value::String(v.clone()));
        }
        json!({
            "tool": self.tool,
            "generated": self.generated,
            "command": self.command,
            "seed": self.seed,
            "params": Value::Object(params),
        })
    }

    /// Single-line `key=value` form for sample-file chain labels.
    pub fn label(&self) -> String {
        let mut parts = vec![self.command.replace(' ', "-"), format!("tool={}", self.tool.replace(' ', "-"))];
        for (k, v) in &self.params {
            parts.push(format!("{k}={v}"));
        }
        parts.join(" ")
    }
}

/// Refuse to clobber existing files unless --force was given.
pub fn guard(path: &Path, force: bool) -> Result<(), Failure> {
    if path.exists() && !force {
        return Err(Failure::Invalid(format!(
            "{} already exists (pass --force to overwrite)",
            path.display()
        )));
    }
    Ok(())
}

/// Write a CSV payload (or print it when `out` is `None`).
pub fn emit_csv(
    out: Option<&Path>,
    force: bool,
    prov: &Provenance,
    columns: &str,
    rows: &[String],
) -> Result<(), Failure> {
    let mut text = prov.csv_header();
    text.push_str(columns);
    text.push('\n');
    for row in rows {
        text.push_str(row);
        text.push('\n');
    }
    match out {
        Some(path) => {
            guard(path, force)?;
            fs::write(path, text)?;
            println!("wrote {}", path.display());
        }
        None => print!("{text}"),
    }
    Ok(())
}

/// Write a JSON report `{provenance, report}` (or print it).
pub fn emit_json(
    out: Option<&Path>,
    force: bool,
    prov: &Provenance,
    report: Value,
) -> Result<(), Failure> {
    let doc = json!({ "provenance": prov.json_value(), "report": report });
    let mut text =
        serde_json::to_string_pretty(&doc).expect("JSON reports serialize infallibly");
    text.push('\n');
    match out {
        Some(path) => {
            guard(path, force)?;
            fs::write(path, text)?;
            println!("wrote {}", path.display());
        }
        None => print!("{text}"),
    }
    Ok(())
}

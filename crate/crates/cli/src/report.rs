//! Run reports and the output directory.

use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{Map, Value};

use crate::scenario::Scenario;
use crate::CliError;

#[derive(Clone, Debug, Serialize)]
pub struct OutputFile {
    /// Relative to the output directory.
    pub path: String,
    pub bytes: usize,
}

/// `report.json`: the resolved scenario, headline numbers and the files
/// written. Timing is deliberately left out so reruns are byte-identical.
#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub command: String,
    pub version: String,
    pub scenario: Scenario,
    pub headline: Map<String, Value>,
    pub notes: Vec<String>,
    pub outputs: Vec<OutputFile>,
}

/// Collects artifacts for one run.
pub struct Output {
    dir: PathBuf,
    files: Vec<OutputFile>,
    headline: Map<String, Value>,
    notes: Vec<String>,
}

impl Output {
    pub fn new(dir: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir).map_err(|e| {
            CliError::io(
                format!("cannot create output directory {}", dir.display()),
                e,
            )
        })?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
            headline: Map::new(),
            notes: Vec::new(),
        })
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<(), CliError> {
        if contents.is_empty() {
            return Err(CliError::Runtime(anyhow::anyhow!(
                "refusing to write empty artifact {name}"
            )));
        }
        let path = self.dir.join(name);
        std::fs::write(&path, contents)
            .map_err(|e| CliError::io(format!("cannot write {}", path.display()), e))?;
        self.files.push(OutputFile {
            path: name.to_string(),
            bytes: contents.len(),
        });
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, &text)
    }

    pub fn headline(&mut self, key: &str, value: impl Serialize) {
        let v = serde_json::to_value(value).unwrap_or(Value::Null);
        self.headline.insert(key.to_string(), v);
    }

    pub fn note(&mut self, text: impl Into<String>) {
        self.notes.push(text.into());
    }

    /// Writes `report.json` and returns the report.
    pub fn finish(mut self, scenario: &Scenario) -> Result<RunReport, CliError> {
        let mut report = RunReport {
            command: scenario.command().to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            scenario: scenario.clone(),
            headline: std::mem::take(&mut self.headline),
            notes: std::mem::take(&mut self.notes),
            outputs: self.files.clone(),
        };
        let mut text = serde_json::to_string_pretty(&report)?;
        text.push('\n');
        let path = self.dir.join("report.json");
        std::fs::write(&path, &text)
            .map_err(|e| CliError::io(format!("cannot write {}", path.display()), e))?;
        report.outputs.push(OutputFile {
            path: "report.json".into(),
            bytes: text.len(),
        });
        Ok(report)
    }
}

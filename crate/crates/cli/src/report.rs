use clap::ValueEnum;
use serde::Serialize;
use serde_json::{json, Value};

use crate::error::EXIT_OK;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
    Csv,
}

/// The output of one command in every format, with its exit status.
pub struct Report {
    pub command: &'static str,
    pub model_hash: Option<String>,
    pub result: Value,
    pub text: String,
    pub csv: String,
    pub status: u8,
}

impl Report {
    pub fn new(command: &'static str, model_hash: Option<String>, result: impl Serialize) -> Self {
        Report {
            command,
            model_hash,
            result: serde_json::to_value(result).expect("results serialize"),
            text: String::new(),
            csv: String::new(),
            status: EXIT_OK,
        }
    }

    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Json => {
                let doc = json!({
                    "tool": "conewalk",
                    "version": conewalk::VERSION,
                    "command": self.command,
                    "model_hash": self.model_hash,
                    "result": self.result,
                });
                let mut s = serde_json::to_string_pretty(&doc).expect("documents serialize");
                s.push('\n');
                s
            }
            Format::Text => format!("{}\n{}", self.provenance(""), self.text),
            Format::Csv => format!("{}{}", self.provenance("# "), self.csv),
        }
    }

    /// Version and hash lines, commented out in CSV output.
    fn provenance(&self, prefix: &str) -> String {
        let hash = self.model_hash.as_deref().unwrap_or("none");
        format!(
            "{prefix}conewalk {} {}\n{prefix}model {hash}\n",
            conewalk::VERSION,
            self.command
        )
    }
}

pub fn vector(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x}")).collect();
    format!("({})", parts.join(", "))
}

pub fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.15}")).unwrap_or_else(|| "-".into())
}

//! The run report: human-readable lines, then a JSON block between markers.

use std::collections::BTreeMap;
use std::io::Write;
use std::time::Duration;

use serde_json::{json, Map, Value};

use dirdesign::error::Error;

pub const EXIT_OK: u8 = 0;
pub const EXIT_VERIFY: u8 = 1;
pub const EXIT_GAP: u8 = 2;
pub const EXIT_IO: u8 = 3;

/// Line that precedes the JSON block on stdout.
pub const JSON_MARKER: &str = "--- report ---";

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn gap(message: String) -> Self {
        Failure { code: EXIT_GAP, message }
    }

    pub fn io(message: String) -> Self {
        Failure { code: EXIT_IO, message }
    }

    /// Bad flag values count with format errors: nothing was run.
    pub fn usage(message: String) -> Self {
        Failure { code: EXIT_IO, message }
    }

    pub fn from_core(e: Error) -> Self {
        let code = match &e {
            Error::ConstructionIntegrity { .. } | Error::CatalogIntegrity { .. } => EXIT_VERIFY,
            Error::Planning { .. } | Error::Unsupported(_) | Error::UnsatisfiedIngredient(_) | Error::Parameter(_) => {
                EXIT_GAP
            }
            Error::Structure(_)
            | Error::CatalogFormat { .. }
            | Error::UnknownEntry(_)
            | Error::Format(_)
            | Error::Io(_)
            | Error::Json(_) => EXIT_IO,
        };
        Failure { code, message: e.to_string() }
    }
}

#[derive(Debug)]
pub struct Report {
    command: &'static str,
    lines: Vec<String>,
    verdicts: BTreeMap<String, bool>,
    timings: BTreeMap<String, f64>,
    data: Map<String, Value>,
    failure: Option<Failure>,
}

impl Report {
    pub fn new(command: &'static str) -> Self {
        Report {
            command,
            lines: Vec::new(),
            verdicts: BTreeMap::new(),
            timings: BTreeMap::new(),
            data: Map::new(),
            failure: None,
        }
    }

    pub fn failed(command: &'static str, f: Failure) -> Self {
        let mut r = Report::new(command);
        r.failure = Some(f);
        r
    }

    pub fn line(&mut self, s: String) {
        self.lines.push(s);
    }

    pub fn verdict(&mut self, name: &str, pass: bool) {
        self.verdicts.insert(name.to_string(), pass);
    }

    pub fn timing(&mut self, name: &str, d: Duration) {
        self.timings.insert(name.to_string(), d.as_secs_f64());
    }

    pub fn set(&mut self, key: &str, v: Value) {
        self.data.insert(key.to_string(), v);
    }

    pub fn exit_code(&self) -> u8 {
        match &self.failure {
            Some(f) => f.code,
            None if self.verdicts.values().all(|&p| p) => EXIT_OK,
            None => EXIT_VERIFY,
        }
    }

    pub fn to_json(&self) -> Value {
        json!({
            "command": self.command,
            "exit_code": self.exit_code(),
            "ok": self.exit_code() == EXIT_OK,
            "error": self.failure.as_ref().map(|f| f.message.clone()),
            "verdicts": self.verdicts,
            "timings_s": self.timings,
            "data": self.data,
        })
    }

    /// Summary on stdout (errors also on stderr), then the JSON block. A
    /// closed stdout (e.g. piped into `head`) is not an error.
    pub fn print(&self) {
        let mut out = std::io::stdout().lock();
        let mut text = String::new();
        for l in &self.lines {
            text.push_str(l);
            text.push('\n');
        }
        for (name, pass) in &self.verdicts {
            text.push_str(&format!("{name}: {}\n", if *pass { "PASS" } else { "FAIL" }));
        }
        if let Some(f) = &self.failure {
            eprintln!("error: {}", f.message);
            text.push_str(&format!("error: {}\n", f.message));
        }
        text.push_str(JSON_MARKER);
        text.push('\n');
        text.push_str(&serde_json::to_string_pretty(&self.to_json()).expect("report serializes"));
        text.push('\n');
        let _ = out.write_all(text.as_bytes());
    }
}

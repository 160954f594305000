use anyhow::Context;
use serde::Serialize;
use serde_json::{json, Value};
use std::io::Write;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

/// Provenance block written at the top of every artifact.
#[derive(Debug, Clone, Serialize)]
pub struct Header {
    pub tool: &'static str,
    pub version: &'static str,
    pub git: &'static str,
    pub subcommand: String,
    pub seed: u64,
    pub trials: u64,
    /// flag name and value, in command-line order
    pub params: Vec<(String, String)>,
}

impl Header {
    pub fn new(subcommand: &str, seed: u64, trials: u64) -> Self {
        Self {
            tool: "dirmech",
            version: env!("CARGO_PKG_VERSION"),
            git: env!("DIRMECH_GIT_DESCRIBE"),
            subcommand: subcommand.to_string(),
            seed,
            trials,
            params: Vec::new(),
        }
    }

    pub fn param(mut self, name: &str, value: impl ToString) -> Self {
        self.params.push((name.to_string(), value.to_string()));
        self
    }

    /// The invocation that regenerates the artifact.
    pub fn command_line(&self) -> String {
        let mut s = format!("dirmech {} --seed {} --trials {}", self.subcommand, self.seed, self.trials);
        for (k, v) in &self.params {
            s.push_str(&format!(" --{k} {v}"));
        }
        s
    }

    fn csv_lines(&self) -> String {
        format!(
            "# {} {} git={}\n# seed={} trials={}\n# command: {}\n",
            self.tool,
            self.version,
            self.git,
            self.seed,
            self.trials,
            self.command_line()
        )
    }

    fn to_json(&self) -> Value {
        let params: serde_json::Map<String, Value> = self.params.iter().map(|(k, v)| (k.clone(), Value::String(v.clone()))).collect();
        json!({
            "tool": self.tool,
            "version": self.version,
            "git": self.git,
            "subcommand": self.subcommand,
            "seed": self.seed,
            "trials": self.trials,
            "params": params,
            "command": self.command_line(),
        })
    }
}

/// A result ready to be written in either format.
pub struct Artifact {
    pub header: Header,
    pub csv: String,
    pub json: Value,
}

impl Artifact {
    pub fn new(header: Header, csv: String, json: impl Serialize) -> anyhow::Result<Self> {
        Ok(Self {
            header,
            csv,
            json: serde_json::to_value(json).context("serializing result")?,
        })
    }

    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Csv => format!("{}{}", self.header.csv_lines(), self.csv),
            Format::Json => {
                let v = json!({ "header": self.header.to_json(), "result": self.json });
                serde_json::to_string_pretty(&v).expect("JSON value serializes") + "\n"
            }
        }
    }

    /// Instance files carry the header as an extra top-level key, which the
    /// instance parsers ignore.
    pub fn render_instance(&self) -> String {
        let mut v = self.json.clone();
        if let Value::Object(map) = &mut v {
            map.insert("header".into(), self.header.to_json());
        }
        serde_json::to_string_pretty(&v).expect("JSON value serializes") + "\n"
    }
}

pub fn write_output(out: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match out {
        Some(p) if p != Path::new("-") => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        _ => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes()).context("writing to stdout")?;
            stdout.flush().context("flushing stdout")
        }
    }
}

pub fn read_input(path: &Path) -> anyhow::Result<String> {
    if path == Path::new("-") {
        let mut s = String::new();
        std::io::Read::read_to_string(&mut std::io::stdin(), &mut s).context("reading stdin")?;
        Ok(s)
    } else {
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
    }
}

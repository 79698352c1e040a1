use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use nsum_core::NsumError;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Value};

#[derive(Debug)]
pub enum Failure {
    Param(String),
    Io(String),
    Validation(String),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Param(_) => 1,
            Failure::Io(_) => 2,
            Failure::Validation(_) => 3,
        }
    }

    /// Prefixes the message with `context`, keeping the exit code.
    pub fn context(self, context: impl fmt::Display) -> Self {
        match self {
            Failure::Param(m) => Failure::Param(format!("{context}: {m}")),
            Failure::Io(m) => Failure::Io(format!("{context}: {m}")),
            Failure::Validation(m) => Failure::Validation(format!("{context}: {m}")),
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Param(m) | Failure::Io(m) | Failure::Validation(m) => f.write_str(m),
        }
    }
}

impl From<NsumError> for Failure {
    fn from(e: NsumError) -> Self {
        if e.is_io() {
            Failure::Io(e.to_string())
        } else {
            Failure::Param(e.to_string())
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

pub struct Context {
    pub out: PathBuf,
    pub threads: usize,
    overrides: Option<(PathBuf, Value)>,
}

impl Context {
    pub fn new(out: PathBuf, threads: usize, config: Option<PathBuf>) -> Result<Self, Failure> {
        let overrides = match config {
            None => None,
            Some(path) => {
                let text = fs::read_to_string(&path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
                let value: Value = serde_json::from_str(&text)
                    .map_err(|e| Failure::Param(format!("{}: {e}", path.display())))?;
                Some((path, value))
            }
        };
        Ok(Context { out, threads, overrides })
    }

    /// Overlays the config file onto the parsed flags. A manifest is
    /// accepted when it was written by the same command.
    pub fn resolve<A: Serialize + DeserializeOwned>(&self, command: &str, args: A) -> Result<A, Failure> {
        let Some((path, value)) = &self.overrides else {
            return Ok(args);
        };
        let overlay = match value.get("config") {
            Some(inner) if value.get("tool").is_some() => {
                let recorded = value.get("command").and_then(Value::as_str).unwrap_or("");
                if recorded != command {
                    return Err(Failure::Param(format!(
                        "{} is a manifest for '{recorded}', not '{command}'",
                        path.display()
                    )));
                }
                inner
            }
            _ => value,
        };
        let Value::Object(overlay) = overlay else {
            return Err(Failure::Param(format!("{}: config must be a JSON object", path.display())));
        };
        let mut base = serde_json::to_value(&args).map_err(|e| Failure::Param(e.to_string()))?;
        let Value::Object(fields) = &mut base else {
            unreachable!("argument structs serialize to objects")
        };
        for (k, v) in overlay {
            if !fields.contains_key(k) {
                return Err(Failure::Param(format!("{}: unknown key '{k}' for {command}", path.display())));
            }
            fields.insert(k.clone(), v.clone());
        }
        serde_json::from_value(base).map_err(|e| Failure::Param(format!("{}: {e}", path.display())))
    }

    pub fn prepare_out(&self) -> Result<(), Failure> {
        fs::create_dir_all(&self.out).map_err(|e| Failure::Io(format!("{}: {e}", self.out.display())))
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    pub fn create(&self, name: &str) -> Result<BufWriter<File>, Failure> {
        let path = self.path(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        let file = File::create(&path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
        Ok(BufWriter::new(file))
    }

    pub fn write_json(&self, name: &str, value: &impl Serialize) -> Result<(), Failure> {
        let mut w = self.create(name)?;
        serde_json::to_writer_pretty(&mut w, value).map_err(|e| Failure::Io(e.to_string()))?;
        writeln!(w)?;
        w.flush()?;
        Ok(())
    }

    /// `manifest.json`: tool, version, command, resolved config and seed.
    pub fn write_manifest(&self, command: &str, config: &impl Serialize, base_seed: Option<u64>) -> Result<(), Failure> {
        let manifest = json!({
            "tool": "nsum",
            "version": env!("CARGO_PKG_VERSION"),
            "command": command,
            "config": config,
            "base_seed": base_seed,
            "output_dir": self.out,
            "threads": self.threads,
        });
        self.write_json("manifest.json", &manifest)
    }
}

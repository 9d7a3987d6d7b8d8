//! Output files, each tagged with the config hash.

use std::fs;
use std::path::{Path, PathBuf};

use fairaudit::config::RunConfig;
use fairaudit::{Error, Result};

pub struct Outputs {
    dir: PathBuf,
    hash: String,
}

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

impl Outputs {
    pub fn new(dir: &Path, hash: &str) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            hash: hash.to_string(),
        })
    }

    fn write(&self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.dir.join(name);
        log::debug!("writing {}", path.display());
        fs::write(&path, bytes).map_err(|e| io_err(&path, e))
    }

    /// Text that already carries the hash (reports).
    pub fn write_text(&self, name: &str, text: &str) -> Result<()> {
        self.write(name, text.as_bytes())
    }

    /// A JSON object; gains a top-level `config_hash` key.
    pub fn write_json(&self, name: &str, json: &str) -> Result<()> {
        self.write(name, tag_json(json, &self.hash)?.as_bytes())
    }

    /// CSV bytes; gains a trailing `config_hash` column.
    pub fn write_csv(&self, name: &str, bytes: Vec<u8>) -> Result<()> {
        self.write(name, &tag_csv(&bytes, &self.hash)?)
    }

    pub fn write_csv_with(&self, name: &str, f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
        let mut buf = Vec::new();
        f(&mut buf)?;
        self.write_csv(name, buf)
    }

    /// The effective configuration after flag overrides. The output
    /// directory is left out, as in the hash, so reruns elsewhere match.
    pub fn write_config(&self, cfg: &RunConfig) -> Result<()> {
        let mut config = serde_json::to_value(cfg)?;
        if let Some(obj) = config.as_object_mut() {
            obj.remove("output_dir");
        }
        let v = serde_json::json!({ "config_hash": self.hash, "config": config });
        self.write("run.json", (serde_json::to_string_pretty(&v)? + "\n").as_bytes())
    }
}

pub fn tag_json(json: &str, hash: &str) -> Result<String> {
    let mut v: serde_json::Value = serde_json::from_str(json)?;
    match v.as_object_mut() {
        Some(obj) => {
            obj.insert("config_hash".into(), hash.into());
        }
        None => v = serde_json::json!({ "config_hash": hash, "value": v }),
    }
    Ok(serde_json::to_string(&v)? + "\n")
}

pub fn tag_csv(bytes: &[u8], hash: &str) -> Result<Vec<u8>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).from_reader(bytes);
    let mut w = csv::Writer::from_writer(Vec::new());
    for (i, rec) in rdr.records().enumerate() {
        let mut rec = rec?;
        rec.push_field(if i == 0 { "config_hash" } else { hash });
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| io_err(Path::new("<csv buffer>"), e))?;
    w.into_inner()
        .map_err(|e| io_err(Path::new("<csv buffer>"), e.into_error()))
}

//! Adapter for models that live in another process.
//!
//! Each query writes the rows to `request-<n>.csv` (no header, features only)
//! in the exchange directory and runs `program args... <request> <response>`.
//! The child writes one decimal outcome per line to `<response>`.

use std::fs;
use std::io::Read;
use std::path::PathBuf;
use std::process::{Command, Stdio};
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use super::Predictor;
use crate::error::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
pub struct ExternalModel {
    pub program: String,
    #[serde(default)]
    pub args: Vec<String>,
    pub exchange_dir: PathBuf,
    pub n_features: usize,
    #[serde(with = "duration_secs", default = "default_timeout")]
    pub timeout: Duration,
    /// Serializes child invocations and numbers the exchange files.
    #[serde(skip)]
    calls: Mutex<u64>,
}

fn default_timeout() -> Duration {
    Duration::from_secs(60)
}

mod duration_secs {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let secs = f64::deserialize(d)?;
        Duration::try_from_secs_f64(secs).map_err(serde::de::Error::custom)
    }
}

impl ExternalModel {
    pub fn new(
        program: impl Into<String>,
        args: Vec<String>,
        exchange_dir: impl Into<PathBuf>,
        n_features: usize,
        timeout: Duration,
    ) -> Self {
        Self {
            program: program.into(),
            args,
            exchange_dir: exchange_dir.into(),
            n_features,
            timeout,
            calls: Mutex::new(0),
        }
    }

    pub fn run(&self, rows: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        let mut calls = self.calls.lock().unwrap_or_else(|e| e.into_inner());
        *calls += 1;
        let request = self.exchange_dir.join(format!("request-{}.csv", *calls));
        let response = self.exchange_dir.join(format!("response-{}.txt", *calls));
        fs::create_dir_all(&self.exchange_dir).map_err(|e| Error::io(&self.exchange_dir, e))?;

        let mut body = String::with_capacity(rows.len() * 8);
        for row in rows.rows() {
            let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            body.push_str(&line.join(","));
            body.push('\n');
        }
        fs::write(&request, body).map_err(|e| Error::io(&request, e))?;
        let _ = fs::remove_file(&response);

        let mut child = Command::new(&self.program)
            .args(&self.args)
            .arg(&request)
            .arg(&response)
            .stdin(Stdio::null())
            .stdout(Stdio::null())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| adapter(format!("cannot start `{}`: {e}", self.program), String::new()))?;

        let mut stderr_pipe = child.stderr.take().expect("stderr is piped");
        let stderr_reader = thread::spawn(move || {
            let mut s = String::new();
            let _ = stderr_pipe.read_to_string(&mut s);
            s
        });

        let started = Instant::now();
        let status = loop {
            match child.try_wait() {
                Ok(Some(status)) => break status,
                Ok(None) if started.elapsed() >= self.timeout => {
                    let _ = child.kill();
                    let _ = child.wait();
                    let stderr = stderr_reader.join().unwrap_or_default();
                    return Err(adapter(format!("timed out after {:?}", self.timeout), stderr));
                }
                Ok(None) => thread::sleep(Duration::from_millis(2)),
                Err(e) => return Err(adapter(format!("wait failed: {e}"), String::new())),
            }
        };
        let stderr = stderr_reader.join().unwrap_or_default();
        if !status.success() {
            return Err(adapter(format!("child exited with {status}"), stderr));
        }

        let text = fs::read_to_string(&response).map_err(|e| {
            adapter(
                format!("cannot read response {}: {e}", response.display()),
                stderr.clone(),
            )
        })?;
        let mut out = Vec::with_capacity(rows.nrows());
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            match line.parse::<f64>() {
                Ok(v) if (0.0..=1.0).contains(&v) => out.push(v),
                _ => return Err(adapter(format!("malformed response line {}: `{line}`", i + 1), stderr)),
            }
        }
        if out.len() != rows.nrows() {
            return Err(adapter(
                format!("response has {} outcomes for {} rows", out.len(), rows.nrows()),
                stderr,
            ));
        }
        let _ = fs::remove_file(&request);
        let _ = fs::remove_file(&response);
        Ok(out)
    }
}

fn adapter(message: String, stderr: String) -> Error {
    Error::Adapter { message, stderr }
}

impl Predictor for ExternalModel {
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn predict_batch(&self, rows: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        self.run(rows)
    }
}

#[cfg(all(test, unix))]
mod tests {
    use ndarray::Array2;

    use super::*;

    fn sh(script: &str, dir: &std::path::Path) -> ExternalModel {
        ExternalModel::new(
            "sh",
            vec!["-c".into(), script.into(), "stub".into()],
            dir,
            2,
            Duration::from_secs(10),
        )
    }

    #[test]
    fn echo_stub_returns_one_value_per_row() {
        let dir = tempfile::tempdir().unwrap();
        let model = sh(r#"while read -r _; do echo 0.5; done < "$1" > "$2""#, dir.path());
        let rows = Array2::<f64>::zeros((3, 2));
        assert_eq!(model.run(rows.view()).unwrap(), vec![0.5, 0.5, 0.5]);
    }

    #[test]
    fn nonzero_exit_carries_stderr() {
        let dir = tempfile::tempdir().unwrap();
        let model = sh("echo boom >&2; exit 3", dir.path());
        match model.run(Array2::<f64>::zeros((1, 2)).view()) {
            Err(Error::Adapter { stderr, .. }) => assert!(stderr.contains("boom")),
            other => panic!("expected adapter error, got {other:?}"),
        }
    }

    #[test]
    fn short_response_is_length_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let model = sh(r#"printf '0.1\n0.2\n' > "$2""#, dir.path());
        let err = model.run(Array2::<f64>::zeros((3, 2)).view()).unwrap_err();
        assert!(err.to_string().contains("2 outcomes for 3 rows"), "{err}");
    }

    #[test]
    fn malformed_and_out_of_range_values_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let model = sh(r#"printf 'abc\n' > "$2""#, dir.path());
        assert!(matches!(
            model.run(Array2::<f64>::zeros((1, 2)).view()),
            Err(Error::Adapter { .. })
        ));
        let model = sh(r#"printf '1.5\n' > "$2""#, dir.path());
        assert!(matches!(
            model.run(Array2::<f64>::zeros((1, 2)).view()),
            Err(Error::Adapter { .. })
        ));
    }

    #[test]
    fn timeout_kills_child() {
        let dir = tempfile::tempdir().unwrap();
        let mut model = sh("sleep 5", dir.path());
        model.timeout = Duration::from_millis(100);
        let err = model.run(Array2::<f64>::zeros((1, 2)).view()).unwrap_err();
        assert!(err.to_string().contains("timed out"), "{err}");
    }

    #[test]
    fn request_file_has_no_header() {
        let dir = tempfile::tempdir().unwrap();
        let model = sh(r#"cp "$1" "$(dirname "$1")/seen.csv"; echo 1 > "$2""#, dir.path());
        let rows = ndarray::array![[0.25, 1.0]];
        model.run(rows.view()).unwrap();
        let seen = std::fs::read_to_string(dir.path().join("seen.csv")).unwrap();
        assert_eq!(seen, "0.25,1\n");
    }
}

//! Run reports and exit codes.

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

/// Process exit status.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    /// Success, or the queried object is free.
    Ok,
    /// Domain negative: nonfree, infeasible, violations found.
    Negative,
    /// Usage, parse or input error.
    Usage,
    Inconclusive,
}

impl Status {
    pub fn code(self) -> i32 {
        match self {
            Status::Ok => 0,
            Status::Negative => 1,
            Status::Usage => 2,
            Status::Inconclusive => 3,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub command: Vec<String>,
    /// SHA-256 over every input, in order.
    pub inputs_digest: String,
    pub status: Status,
    pub outputs: Value,
    pub seconds: f64,
    pub tol: f64,
    pub seed: u64,
}

/// Incremental digest of the inputs a command reads.
#[derive(Clone, Default)]
pub struct InputDigest(Sha256);

impl InputDigest {
    pub fn add(&mut self, label: &str, bytes: &[u8]) {
        self.0.update((label.len() as u64).to_le_bytes());
        self.0.update(label.as_bytes());
        self.0.update((bytes.len() as u64).to_le_bytes());
        self.0.update(bytes);
    }

    pub fn finish(self) -> String {
        hex::encode(self.0.finalize())
    }
}

/// Flatten a JSON object into `key: value` lines for the human view.
pub fn human_lines(v: &Value, prefix: &str, out: &mut Vec<String>) {
    match v {
        Value::Object(m) => {
            for (k, x) in m {
                let key = if prefix.is_empty() { k.clone() } else { format!("{}.{}", prefix, k) };
                match x {
                    Value::Object(_) => human_lines(x, &key, out),
                    Value::Array(a) if a.iter().any(|e| e.is_object() || e.is_array()) => {
                        out.push(format!("{:<28} [{} entries]", key, a.len()));
                    }
                    _ => out.push(format!("{:<28} {}", key, scalar(x))),
                }
            }
        }
        other => out.push(format!("{:<28} {}", prefix, scalar(other))),
    }
}

fn scalar(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Number(n) => match n.as_f64() {
            Some(f) if n.is_f64() => format!("{:.10}", f),
            _ => n.to_string(),
        },
        other => other.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn digest_separates_inputs() {
        let mut a = InputDigest::default();
        a.add("x", b"ab");
        a.add("y", b"c");
        let mut b = InputDigest::default();
        b.add("x", b"a");
        b.add("y", b"bc");
        assert_ne!(a.finish(), b.finish());
    }

    #[test]
    fn human_view_flattens() {
        let mut lines = Vec::new();
        human_lines(&json!({"a": {"b": 1.5}, "c": "Free"}), "", &mut lines);
        assert_eq!(lines.len(), 2);
        assert!(lines[0].starts_with("a.b"));
        assert!(lines[1].ends_with("Free"));
    }
}

//! Canonical request hashing.
//!
//! Algorithm (stable across implementations):
//!
//! 1. Serialize the request to a JSON value with fields `model_ref`,
//!    `messages`, `tool_specs`, `temperature`. Message fields that are absent
//!    (`name`, `tool_calls`, `tool_call_id`) are omitted, not `null`.
//! 2. Emit that value with every object's keys sorted by byte order, no
//!    whitespace between tokens, strings escaped as JSON requires (`"`, `\`,
//!    control characters; everything else verbatim UTF-8), and numbers in
//!    shortest round-trip form.
//! 3. The digest is the lowercase hex SHA-256 of those UTF-8 bytes.
//!
//! Message content is hashed byte for byte; whitespace inside content is
//! significant.

use serde_json::Value;
use sha2::{Digest, Sha256};

use super::CompletionRequest;

pub fn canonical_value_string(value: &Value) -> String {
    let mut out = String::new();
    write_canonical(value, &mut out);
    out
}

fn write_canonical(value: &Value, out: &mut String) {
    match value {
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push('{');
            for (i, k) in keys.into_iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&serde_json::to_string(k).expect("string serializes"));
                out.push(':');
                write_canonical(&map[k], out);
            }
            out.push('}');
        }
        Value::Array(items) => {
            out.push('[');
            for (i, v) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_canonical(v, out);
            }
            out.push(']');
        }
        scalar => out.push_str(&serde_json::to_string(scalar).expect("scalar serializes")),
    }
}

pub fn canonical_json(req: &CompletionRequest) -> String {
    let value = serde_json::to_value(req).expect("request serializes");
    canonical_value_string(&value)
}

pub fn canonical_hash(req: &CompletionRequest) -> String {
    hex::encode(Sha256::digest(canonical_json(req).as_bytes()))
}

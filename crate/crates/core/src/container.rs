//! Binary container shared by snapshot sets, POD bases and regressors.
//!
//! Layout (little-endian): the 8-byte magic `NSROMv01`, a `u32` header
//! length, a UTF-8 JSON header, then `payload_len` `f64` values. The header
//! always carries `kind` and `payload_len`.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde_json::Value;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"NSROMv01";

/// Serialize a header and payload into container bytes.
pub fn encode(header: &Value, payload: &[f64]) -> Result<Vec<u8>> {
    let mut header = header.clone();
    let obj = header
        .as_object_mut()
        .ok_or_else(|| Error::Pipeline("container header must be a JSON object".into()))?;
    if !obj.contains_key("kind") {
        return Err(Error::Pipeline("container header lacks `kind`".into()));
    }
    obj.insert("payload_len".into(), Value::from(payload.len()));
    let text = serde_json::to_vec(&header)?;
    let len = u32::try_from(text.len()).map_err(|_| Error::Pipeline("container header too large".into()))?;
    let mut out = Vec::with_capacity(12 + text.len() + 8 * payload.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&len.to_le_bytes());
    out.extend_from_slice(&text);
    for x in payload {
        out.extend_from_slice(&x.to_le_bytes());
    }
    Ok(out)
}

/// Parse container bytes; every failure names the byte offset where it occurred.
pub fn decode(bytes: &[u8]) -> Result<(Value, Vec<f64>)> {
    let fail = |offset: usize, message: String| Err(Error::Container { offset, message });
    if bytes.len() < 8 {
        return fail(bytes.len(), format!("file ends inside the magic ({} of 8 bytes)", bytes.len()));
    }
    if &bytes[..8] != MAGIC {
        return fail(0, format!("bad magic {:?}, expected \"NSROMv01\"", String::from_utf8_lossy(&bytes[..8])));
    }
    if bytes.len() < 12 {
        return fail(bytes.len(), "file ends inside the header length".into());
    }
    let hlen = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let hend = 12 + hlen;
    if bytes.len() < hend {
        return fail(bytes.len(), format!("file ends inside the {hlen}-byte header"));
    }
    let text = match std::str::from_utf8(&bytes[12..hend]) {
        Ok(t) => t,
        Err(e) => return fail(12 + e.valid_up_to(), "header is not valid UTF-8".into()),
    };
    let header: Value = match serde_json::from_str(text) {
        Ok(v) => v,
        Err(e) => {
            // Convert the JSON line/column into an absolute offset.
            let line_start: usize = text.split_inclusive('\n').take(e.line().saturating_sub(1)).map(str::len).sum();
            return fail(12 + line_start + e.column().saturating_sub(1), format!("malformed header JSON: {e}"));
        }
    };
    if !header.is_object() || header.get("kind").and_then(Value::as_str).is_none() {
        return fail(12, "header must be an object with a string `kind`".into());
    }
    let n = match header.get("payload_len").and_then(Value::as_u64) {
        Some(n) => n as usize,
        None => return fail(12, "header lacks an integer `payload_len`".into()),
    };
    let body = &bytes[hend..];
    if body.len() < 8 * n {
        let complete = body.len() / 8;
        return fail(
            hend + 8 * complete,
            format!("payload truncated: {complete} of {n} values present"),
        );
    }
    if body.len() > 8 * n {
        return fail(hend + 8 * n, format!("{} trailing bytes after the payload", body.len() - 8 * n));
    }
    let payload = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    Ok((header, payload))
}

/// Write atomically: a sibling temporary file is renamed over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    let tmp = path.with_extension(format!(
        "{}.tmp",
        path.extension().and_then(|e| e.to_str()).unwrap_or("")
    ));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn write_container(path: &Path, header: &Value, payload: &[f64]) -> Result<()> {
    write_atomic(path, &encode(header, payload)?)
}

pub fn read_container(path: &Path) -> Result<(Value, Vec<f64>)> {
    decode(&fs::read(path)?)
}

/// Fetch the `kind` tag and check it.
pub fn expect_kind(header: &Value, kind: &str) -> Result<()> {
    let found = header.get("kind").and_then(Value::as_str).unwrap_or("");
    if found != kind {
        return Err(Error::Container {
            offset: 12,
            message: format!("expected a `{kind}` container, found `{found}`"),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn round_trip_is_bitwise() {
        let payload = vec![0.1, -0.0, f64::MIN_POSITIVE, 1e300, std::f64::consts::PI];
        let bytes = encode(&json!({"kind": "test", "x": 3}), &payload).unwrap();
        let (h, p) = decode(&bytes).unwrap();
        assert_eq!(h["x"], 3);
        assert_eq!(h["payload_len"], 5);
        let a: Vec<u64> = payload.iter().map(|x| x.to_bits()).collect();
        let b: Vec<u64> = p.iter().map(|x| x.to_bits()).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn truncation_reports_offset() {
        let bytes = encode(&json!({"kind": "test"}), &[1.0, 2.0, 3.0]).unwrap();
        // Cutting 12 bytes leaves one complete value of three.
        let cut = bytes.len() - 12;
        match decode(&bytes[..cut]) {
            Err(Error::Container { offset, .. }) => assert_eq!(offset, bytes.len() - 16),
            other => panic!("unexpected {other:?}"),
        }
        match decode(&bytes[..10]) {
            Err(Error::Container { offset, .. }) => assert_eq!(offset, 10),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_magic_and_header() {
        let mut bytes = encode(&json!({"kind": "test"}), &[]).unwrap();
        bytes[3] = b'X';
        assert!(matches!(decode(&bytes), Err(Error::Container { offset: 0, .. })));
        let mut bytes = encode(&json!({"kind": "test"}), &[]).unwrap();
        bytes[12] = b'[';
        assert!(matches!(decode(&bytes), Err(Error::Container { .. })));
    }
}

//! Shared plumbing for the line-oriented `REINF-*` file formats.
//!
//! Every format is UTF-8 text: a single header line of space-separated
//! `key=value` fields after a magic tag, followed by tab-separated rows.
//! Sample ids are written as JSON string literals so any id survives the
//! trip; vectors are base64 of little-endian `f32`.

use base64::engine::general_purpose::STANDARD;
use base64::Engine as _;

use crate::error::{Error, Result};

/// One line of an input file with its position.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Line<'a> {
    pub text: &'a str,
    /// 1-based line number.
    pub number: usize,
    /// Byte offset of the first character of the line.
    pub offset: usize,
}

impl<'a> Line<'a> {
    pub fn error(&self, format: &'static str, message: impl Into<String>) -> Error {
        Error::Parse {
            format,
            line: self.number,
            offset: self.offset,
            message: message.into(),
        }
    }
}

/// Split text into lines, requiring every line (header included) to be
/// newline-terminated so truncation is always detected.
pub(crate) fn lines<'a>(format: &'static str, text: &'a str) -> Result<Vec<Line<'a>>> {
    let mut out = Vec::new();
    let mut offset = 0;
    let mut number = 1;
    let mut rest = text;
    while !rest.is_empty() {
        match rest.find('\n') {
            Some(end) => {
                out.push(Line {
                    text: &rest[..end],
                    number,
                    offset,
                });
                offset += end + 1;
                number += 1;
                rest = &rest[end + 1..];
            }
            None => {
                return Err(Error::Parse {
                    format,
                    line: number,
                    offset,
                    message: "truncated line (missing newline)".into(),
                })
            }
        }
    }
    Ok(out)
}

/// Parsed header: the magic tag followed by `key=value` fields. The last
/// field may contain spaces when `trailing` names it.
pub(crate) struct Header<'a> {
    fields: Vec<(&'a str, &'a str)>,
    line: Line<'a>,
    format: &'static str,
}

impl<'a> Header<'a> {
    pub fn parse(
        format: &'static str,
        magic: &str,
        line: Option<&Line<'a>>,
        trailing: Option<&str>,
    ) -> Result<Self> {
        let Some(line) = line else {
            return Err(Error::Parse {
                format,
                line: 1,
                offset: 0,
                message: "missing header".into(),
            });
        };
        let Some(rest) = line.text.strip_prefix(magic) else {
            return Err(line.error(format, format!("expected header starting with {magic:?}")));
        };
        let mut fields = Vec::new();
        let mut rest = rest.trim_start_matches(' ');
        while !rest.is_empty() {
            let (key, after) = rest
                .split_once('=')
                .ok_or_else(|| line.error(format, format!("malformed header field {rest:?}")))?;
            if key.contains(' ') || key.is_empty() {
                return Err(line.error(format, format!("malformed header field {rest:?}")));
            }
            if Some(key) == trailing {
                fields.push((key, after));
                break;
            }
            let (value, next) = after.split_once(' ').unwrap_or((after, ""));
            fields.push((key, value));
            rest = next.trim_start_matches(' ');
        }
        Ok(Header {
            fields,
            line: *line,
            format,
        })
    }

    pub fn get(&self, key: &str) -> Result<&'a str> {
        self.fields
            .iter()
            .find(|(k, _)| *k == key)
            .map(|(_, v)| *v)
            .ok_or_else(|| self.line.error(self.format, format!("header missing {key:?}")))
    }

    pub fn get_parsed<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let raw = self.get(key)?;
        raw.parse()
            .map_err(|_| self.line.error(self.format, format!("invalid value {raw:?} for {key:?}")))
    }
}

pub(crate) fn quote(id: &str) -> String {
    serde_json::to_string(id).expect("string serialization is infallible")
}

pub(crate) fn unquote(format: &'static str, line: &Line<'_>, field: &str) -> Result<String> {
    if !field.starts_with('"') {
        return Err(line.error(format, format!("expected quoted id, found {field:?}")));
    }
    serde_json::from_str::<String>(field)
        .map_err(|e| line.error(format, format!("bad quoted id {field:?}: {e}")))
}

pub(crate) fn encode_f32(values: impl IntoIterator<Item = f32>) -> String {
    let mut bytes = Vec::new();
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    STANDARD.encode(bytes)
}

pub(crate) fn decode_f32(
    format: &'static str,
    line: &Line<'_>,
    field: &str,
    expected_len: usize,
) -> Result<Vec<f32>> {
    let bytes = STANDARD
        .decode(field)
        .map_err(|e| line.error(format, format!("bad base64 payload: {e}")))?;
    if bytes.len() != expected_len * 4 {
        return Err(line.error(
            format,
            format!(
                "vector length {} does not match expected {expected_len}",
                bytes.len() as f64 / 4.0
            ),
        ));
    }
    let values: Vec<f32> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(line.error(format, "non-finite vector entry"));
    }
    Ok(values)
}

/// Hex-encoded SHA-256.
pub fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Seeded 64-bit string hash: FNV-1a followed by a splitmix64 finalizer.
///
/// Stable across platforms and toolchains, which `std`'s hashers are not.
pub fn stable_hash(seed: u64, text: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ seed.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    for b in text.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    splitmix64(h ^ seed)
}

pub(crate) fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub(crate) fn read_to_string(path: &std::path::Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_string(path: &std::path::Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

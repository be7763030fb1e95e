//! `key = value` text files: one pair per line, `#` starts a comment, keys
//! may repeat.

use std::str::FromStr;

use super::FormatError;

#[derive(Clone, Debug, PartialEq)]
pub struct Entry {
    pub key: String,
    pub value: String,
    pub line: usize,
}

pub fn parse(text: &str) -> Result<Vec<Entry>, FormatError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            FormatError::Malformed(format!("line {}: expected key = value, got {raw:?}", i + 1))
        })?;
        let key = key.trim();
        if key.is_empty() {
            return Err(FormatError::Malformed(format!("line {}: empty key", i + 1)));
        }
        out.push(Entry {
            key: key.to_ascii_lowercase(),
            value: value.trim().to_owned(),
            line: i + 1,
        });
    }
    Ok(out)
}

/// Parses `value` or reports the offending key and line.
pub fn value<T: FromStr>(entry: &Entry) -> Result<T, FormatError> {
    entry.value.parse().map_err(|_| {
        FormatError::Malformed(format!(
            "line {}: invalid value {:?} for {}",
            entry.line, entry.value, entry.key
        ))
    })
}

/// Splits `AxB` (or `A,B` / `A:B`) into two parsed halves.
pub fn pair<T: FromStr>(text: &str) -> Option<(T, T)> {
    let (a, b) = text.split_once(['x', 'X', ',', ':'])?;
    Some((a.trim().parse().ok()?, b.trim().parse().ok()?))
}

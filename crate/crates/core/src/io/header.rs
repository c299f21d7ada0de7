//! Text header shared by the binary formats: a magic line, `key = value`
//! lines, one empty line, then the raw payload.

use std::io::Write;

use crate::error::{MoccaError, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub(crate) struct Header {
    pub magic: String,
    pub fields: Vec<(String, String)>,
}

impl Header {
    pub fn new(magic: &str) -> Self {
        Self { magic: magic.to_string(), fields: Vec::new() }
    }

    pub fn field(mut self, key: &str, value: impl ToString) -> Self {
        self.fields.push((key.to_string(), value.to_string()));
        self
    }

    pub fn write(&self, w: &mut impl Write) -> Result<()> {
        writeln!(w, "{}", self.magic)?;
        for (k, v) in &self.fields {
            writeln!(w, "{k} = {v}")?;
        }
        writeln!(w)?;
        Ok(())
    }

    /// Splits `bytes` into a header with the expected magic and the payload.
    pub fn parse<'a>(bytes: &'a [u8], magic: &str) -> Result<(Header, &'a [u8])> {
        let end = bytes
            .windows(2)
            .position(|w| w == b"\n\n")
            .ok_or_else(|| MoccaError::Format("header is not terminated by an empty line".into()))?;
        let text = std::str::from_utf8(&bytes[..end])
            .map_err(|_| MoccaError::Format("header is not valid UTF-8".into()))?;
        let mut lines = text.lines();
        let found = lines.next().unwrap_or_default();
        if found != magic {
            return Err(MoccaError::Format(format!("expected magic {magic:?}, found {found:?}")));
        }
        let mut fields = Vec::new();
        for line in lines {
            let (k, v) = line
                .split_once(" = ")
                .ok_or_else(|| MoccaError::Format(format!("malformed header line {line:?}")))?;
            fields.push((k.to_string(), v.to_string()));
        }
        Ok((Header { magic: magic.to_string(), fields }, &bytes[end + 2..]))
    }

    pub fn get(&self, key: &str) -> Result<&str> {
        self.fields
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| MoccaError::Format(format!("header field {key:?} is missing")))
    }

    pub fn get_usize(&self, key: &str) -> Result<usize> {
        let v = self.get(key)?;
        v.parse().map_err(|_| MoccaError::Format(format!("header field {key:?} is not an integer: {v:?}")))
    }

    pub fn expect(&self, key: &str, want: &str) -> Result<()> {
        let v = self.get(key)?;
        if v != want {
            return Err(MoccaError::Format(format!("header field {key:?} is {v:?}, expected {want:?}")));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip() {
        let h = Header::new("X/1").field("n", 4).field("kind", "cols:2");
        let mut buf = Vec::new();
        h.write(&mut buf).unwrap();
        buf.extend_from_slice(&[0, 1, 2]);
        let (back, payload) = Header::parse(&buf, "X/1").unwrap();
        assert_eq!(back, h);
        assert_eq!(payload, &[0, 1, 2]);
        assert_eq!(back.get_usize("n").unwrap(), 4);
        assert!(back.get("missing").is_err());
    }

    #[test]
    fn rejects_wrong_magic_and_garbage() {
        assert!(Header::parse(b"Y/1\n\n", "X/1").is_err());
        assert!(Header::parse(b"X/1\nnokey\n\n", "X/1").is_err());
        assert!(Header::parse(b"X/1\nn = 3\n", "X/1").is_err());
    }
}

//! Little-endian byte packing for versioned binary snapshot formats.

use crate::error::{Error, Result};

/// Append-only encoder.
#[derive(Debug, Default)]
pub(crate) struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn new() -> Self {
        Writer::default()
    }

    pub fn put_u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn put_u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn put_f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn put_bytes(&mut self, v: &[u8]) {
        self.buf.extend_from_slice(v);
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }
}

/// Checked sequential decoder; every read reports the stream name on
/// truncation.
#[derive(Debug)]
pub(crate) struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    what: &'static str,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8], what: &'static str) -> Self {
        Reader { buf, pos: 0, what }
    }

    pub fn corrupt(&self, reason: impl Into<String>) -> Error {
        Error::Corrupt {
            what: self.what,
            reason: reason.into(),
        }
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(self.corrupt(format!(
                "truncated: wanted {n} bytes at offset {}, have {}",
                self.pos,
                self.buf.len() - self.pos
            )));
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    /// A length field that must fit in memory-sized collections.
    pub fn len(&mut self) -> Result<usize> {
        let v = self.u64()?;
        usize::try_from(v).map_err(|_| self.corrupt(format!("length {v} exceeds address space")))
    }

    pub fn finish(self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(self.corrupt(format!(
                "{} trailing bytes after the last field",
                self.buf.len() - self.pos
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_all_field_types() {
        let mut w = Writer::new();
        w.put_u32(7);
        w.put_u64(u64::MAX - 3);
        w.put_f64(-0.5);
        w.put_bytes(b"xyz");
        let bytes = w.finish();
        let mut r = Reader::new(&bytes, "test blob");
        assert_eq!(r.u32().unwrap(), 7);
        assert_eq!(r.u64().unwrap(), u64::MAX - 3);
        assert_eq!(r.f64().unwrap(), -0.5);
        assert_eq!(r.take(3).unwrap(), b"xyz");
        r.finish().unwrap();
    }

    #[test]
    fn truncation_and_trailing_bytes_are_corrupt() {
        let mut w = Writer::new();
        w.put_u32(1);
        let bytes = w.finish();
        let mut r = Reader::new(&bytes, "test blob");
        assert!(matches!(r.u64(), Err(Error::Corrupt { .. })));

        let mut r = Reader::new(&bytes, "test blob");
        r.u32().unwrap();
        r.finish().unwrap();

        let mut w = Writer::new();
        w.put_u32(1);
        w.put_u32(2);
        let bytes = w.finish();
        let mut r = Reader::new(&bytes, "test blob");
        r.u32().unwrap();
        assert!(matches!(r.finish(), Err(Error::Corrupt { .. })));
    }
}

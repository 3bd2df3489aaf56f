//! Little-endian binary records with a magic tag, a format version and a
//! trailing SHA-256 over everything before it.

use thiserror::Error;

use crate::hashing::sha256;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CodecError {
    #[error("{what}: checksum mismatch")]
    Checksum { what: String },
    #[error("{what}: truncated record at byte {offset}")]
    Truncated { what: String, offset: usize },
    #[error("{what}: bad magic tag")]
    Magic { what: String },
    #[error("{what}: unsupported format version {found} (this build reads up to {supported})")]
    Version {
        what: String,
        found: u32,
        supported: u32,
    },
    #[error("{what}: {message}")]
    Invalid { what: String, message: String },
}

pub struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn new(magic: &[u8; 8], version: u32) -> Self {
        let mut buf = Vec::with_capacity(1024);
        buf.extend_from_slice(magic);
        buf.extend_from_slice(&version.to_le_bytes());
        Writer { buf }
    }

    pub fn u8(&mut self, v: u8) -> &mut Self {
        self.buf.push(v);
        self
    }

    pub fn u32(&mut self, v: u32) -> &mut Self {
        self.buf.extend_from_slice(&v.to_le_bytes());
        self
    }

    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.buf.extend_from_slice(&v.to_le_bytes());
        self
    }

    pub fn f64(&mut self, v: f64) -> &mut Self {
        self.buf.extend_from_slice(&v.to_le_bytes());
        self
    }

    pub fn bytes(&mut self, v: &[u8]) -> &mut Self {
        self.buf.extend_from_slice(v);
        self
    }

    pub fn str(&mut self, v: &str) -> &mut Self {
        self.u32(v.len() as u32);
        self.bytes(v.as_bytes())
    }

    pub fn f64s(&mut self, v: &[f64]) -> &mut Self {
        self.u32(v.len() as u32);
        for &x in v {
            self.f64(x);
        }
        self
    }

    pub fn finish(mut self) -> Vec<u8> {
        let digest = sha256(&self.buf);
        self.buf.extend_from_slice(&digest);
        self.buf
    }
}

pub struct Reader<'a> {
    what: String,
    body: &'a [u8],
    pos: usize,
    pub version: u32,
}

impl<'a> Reader<'a> {
    /// Verifies the checksum trailer, magic and version, and positions the
    /// reader after the header.
    pub fn open(
        what: impl Into<String>,
        data: &'a [u8],
        magic: &[u8; 8],
        max_version: u32,
    ) -> Result<Self, CodecError> {
        let what = what.into();
        if data.len() < 8 + 4 + 32 {
            return Err(CodecError::Truncated {
                what,
                offset: data.len(),
            });
        }
        let (body, trailer) = data.split_at(data.len() - 32);
        if sha256(body) != trailer {
            return Err(CodecError::Checksum { what });
        }
        if &body[..8] != magic {
            return Err(CodecError::Magic { what });
        }
        let version = u32::from_le_bytes(body[8..12].try_into().expect("4 bytes"));
        if version == 0 || version > max_version {
            return Err(CodecError::Version {
                what,
                found: version,
                supported: max_version,
            });
        }
        Ok(Reader {
            what,
            body,
            pos: 12,
            version,
        })
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], CodecError> {
        if self.body.len() - self.pos < n {
            return Err(CodecError::Truncated {
                what: self.what.clone(),
                offset: self.pos,
            });
        }
        let out = &self.body[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub fn u8(&mut self) -> Result<u8, CodecError> {
        Ok(self.take(1)?[0])
    }

    pub fn u32(&mut self) -> Result<u32, CodecError> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    pub fn u64(&mut self) -> Result<u64, CodecError> {
        Ok(u64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }

    pub fn f64(&mut self) -> Result<f64, CodecError> {
        Ok(f64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }

    pub fn bytes(&mut self, n: usize) -> Result<&'a [u8], CodecError> {
        self.take(n)
    }

    pub fn str(&mut self) -> Result<String, CodecError> {
        let n = self.u32()? as usize;
        let raw = self.take(n)?;
        String::from_utf8(raw.to_vec()).map_err(|_| self.invalid("string is not UTF-8"))
    }

    pub fn f64s(&mut self) -> Result<Vec<f64>, CodecError> {
        let n = self.u32()? as usize;
        if n > (self.body.len() - self.pos) / 8 {
            return Err(CodecError::Truncated {
                what: self.what.clone(),
                offset: self.pos,
            });
        }
        (0..n).map(|_| self.f64()).collect()
    }

    pub fn invalid(&self, message: impl Into<String>) -> CodecError {
        CodecError::Invalid {
            what: self.what.clone(),
            message: message.into(),
        }
    }

    /// Fails unless every byte has been consumed.
    pub fn finish(self) -> Result<(), CodecError> {
        if self.pos != self.body.len() {
            return Err(self.invalid(format!("{} trailing bytes", self.body.len() - self.pos)));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MAGIC: &[u8; 8] = b"TESTREC1";

    fn sample() -> Vec<u8> {
        let mut w = Writer::new(MAGIC, 2);
        w.u32(7).str("héllo").f64s(&[1.5, -0.25]).u8(9);
        w.finish()
    }

    #[test]
    fn round_trip() {
        let data = sample();
        let mut r = Reader::open("sample", &data, MAGIC, 2).unwrap();
        assert_eq!(r.version, 2);
        assert_eq!(r.u32().unwrap(), 7);
        assert_eq!(r.str().unwrap(), "héllo");
        assert_eq!(r.f64s().unwrap(), vec![1.5, -0.25]);
        assert_eq!(r.u8().unwrap(), 9);
        r.finish().unwrap();
    }

    #[test]
    fn detects_corruption() {
        let mut data = sample();
        data[14] ^= 1;
        assert!(matches!(
            Reader::open("s", &data, MAGIC, 2),
            Err(CodecError::Checksum { .. })
        ));
        let data = sample();
        assert!(matches!(
            Reader::open("s", &data[..data.len() - 3], MAGIC, 2),
            Err(CodecError::Checksum { .. })
        ));
        assert!(matches!(
            Reader::open("s", &data[..10], MAGIC, 2),
            Err(CodecError::Truncated { .. })
        ));
    }

    #[test]
    fn rejects_future_version_and_wrong_magic() {
        let data = sample();
        assert!(matches!(
            Reader::open("s", &data, MAGIC, 1),
            Err(CodecError::Version { found: 2, .. })
        ));
        assert!(matches!(
            Reader::open("s", &data, b"OTHERREC", 2),
            Err(CodecError::Magic { .. })
        ));
    }
}

//! Binary netpbm codecs: P6 (RGB) and P5 (grayscale), 8-bit only. Decode
//! errors carry the byte offset where parsing stopped making sense.

use std::fs;
use std::path::Path;

use crate::data::{GrayImage, SceneImage};
use crate::error::{Error, Result};

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Reader { bytes, pos: 0 }
    }

    fn fail(&self, msg: impl Into<String>) -> Error {
        Error::format(self.pos, msg)
    }

    fn expect_magic(&mut self, magic: &[u8; 2]) -> Result<()> {
        if self.bytes.len() < 2 || &self.bytes[..2] != magic {
            return Err(self.fail(format!(
                "expected {} signature",
                std::str::from_utf8(magic).unwrap()
            )));
        }
        self.pos = 2;
        Ok(())
    }

    // Header tokens are separated by whitespace; a '#' starts a comment that
    // runs to the end of the line.
    fn skip_separators(&mut self) -> Result<()> {
        let start = self.pos;
        loop {
            match self.bytes.get(self.pos) {
                Some(b) if b.is_ascii_whitespace() => self.pos += 1,
                Some(b'#') => {
                    while let Some(&b) = self.bytes.get(self.pos) {
                        self.pos += 1;
                        if b == b'\n' {
                            break;
                        }
                    }
                }
                _ => break,
            }
        }
        if self.pos == start {
            return Err(self.fail("expected whitespace"));
        }
        Ok(())
    }

    fn read_uint(&mut self, what: &str) -> Result<usize> {
        let start = self.pos;
        let mut value = 0usize;
        while let Some(&b) = self.bytes.get(self.pos) {
            if !b.is_ascii_digit() {
                break;
            }
            value = value
                .checked_mul(10)
                .and_then(|v| v.checked_add((b - b'0') as usize))
                .ok_or_else(|| Error::format(start, format!("{what} overflows")))?;
            self.pos += 1;
        }
        if self.pos == start {
            return Err(self.fail(format!("expected {what}")));
        }
        Ok(value)
    }

    // Dimensions, maxval, then exactly one whitespace byte before the payload.
    fn read_header(&mut self, magic: &[u8; 2]) -> Result<(usize, usize)> {
        self.expect_magic(magic)?;
        self.skip_separators()?;
        let width = self.read_uint("width")?;
        self.skip_separators()?;
        let height = self.read_uint("height")?;
        self.skip_separators()?;
        let maxval_at = self.pos;
        let maxval = self.read_uint("maxval")?;
        if maxval != 255 {
            return Err(Error::format(maxval_at, format!("maxval must be 255, got {maxval}")));
        }
        match self.bytes.get(self.pos) {
            Some(b) if b.is_ascii_whitespace() => self.pos += 1,
            _ => return Err(self.fail("expected single whitespace after maxval")),
        }
        if width == 0 || height == 0 {
            return Err(Error::format(2, "image extents must be positive"));
        }
        Ok((width, height))
    }

    fn read_payload(&mut self, want: usize) -> Result<&'a [u8]> {
        let have = self.bytes.len() - self.pos;
        if have < want {
            return Err(self.fail(format!("payload truncated: {have} of {want} bytes")));
        }
        if have > want {
            return Err(Error::format(
                self.pos + want,
                format!("{} trailing bytes after payload", have - want),
            ));
        }
        let s = &self.bytes[self.pos..self.pos + want];
        self.pos = self.bytes.len();
        Ok(s)
    }
}

pub fn decode_ppm(bytes: &[u8]) -> Result<SceneImage> {
    let mut r = Reader::new(bytes);
    let (w, h) = r.read_header(b"P6")?;
    let payload = r.read_payload(w * h * 3)?;
    SceneImage::new(w, h, payload.to_vec())
}

pub fn decode_pgm(bytes: &[u8]) -> Result<GrayImage> {
    let mut r = Reader::new(bytes);
    let (w, h) = r.read_header(b"P5")?;
    let payload = r.read_payload(w * h)?;
    GrayImage::new(w, h, payload.to_vec())
}

pub fn encode_ppm(img: &SceneImage) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend_from_slice(img.rgb());
    out
}

pub fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend_from_slice(img.pixels());
    out
}

pub fn load_ppm(path: &Path) -> Result<SceneImage> {
    decode_ppm(&fs::read(path)?)
}

pub fn save_ppm(path: &Path, img: &SceneImage) -> Result<()> {
    Ok(fs::write(path, encode_ppm(img))?)
}

pub fn load_pgm(path: &Path) -> Result<GrayImage> {
    decode_pgm(&fs::read(path)?)
}

pub fn save_pgm(path: &Path, img: &GrayImage) -> Result<()> {
    Ok(fs::write(path, encode_pgm(img))?)
}

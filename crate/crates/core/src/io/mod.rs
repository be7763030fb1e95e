//! File formats: binary PGM for integer views, little-endian PFM for real
//! valued maps, and the `LFRM` remap table container.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

pub mod kv;
mod pfm;
mod pgm;
mod remap;

pub use pfm::{read_pfm, write_pfm};
pub use pgm::{read_pgm, write_pgm, write_pgm16, Pgm};
pub use remap::{read_remap, write_remap, REMAP_MAGIC, REMAP_VERSION};

use crate::lightfield::{GrayImage, Image};
use crate::rectify::RemapTable;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("malformed header: {0}")]
    Malformed(String),
    #[error("truncated payload: expected {expected} bytes, found {actual}")]
    Truncated { expected: usize, actual: usize },
    #[error("big-endian PFM (positive scale {0}) is not supported; write with a negative scale")]
    BigEndian(f32),
    #[error("bad magic {0:02X?}")]
    BadMagic([u8; 4]),
    #[error("unsupported version {0}")]
    Version(u8),
    #[error("size inconsistency: {0}")]
    Size(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn read_all(path: &Path) -> Result<Vec<u8>, FormatError> {
    let mut buf = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut buf)?;
    Ok(buf)
}

fn write_with(path: &Path, f: impl FnOnce(&mut dyn Write) -> Result<(), FormatError>) -> Result<(), FormatError> {
    let mut w = BufWriter::new(File::create(path)?);
    f(&mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_pgm(path: &Path) -> Result<Pgm, FormatError> {
    read_pgm(&mut read_all(path)?.as_slice())
}

pub fn save_pgm(path: &Path, img: &GrayImage) -> Result<(), FormatError> {
    write_with(path, |w| write_pgm(w, img))
}

pub fn load_pfm(path: &Path) -> Result<Image<f32>, FormatError> {
    read_pfm(&mut read_all(path)?.as_slice())
}

pub fn save_pfm(path: &Path, map: &Image<f32>) -> Result<(), FormatError> {
    write_with(path, |w| write_pfm(w, map))
}

pub fn load_remap(path: &Path) -> Result<RemapTable, FormatError> {
    read_remap(&mut read_all(path)?.as_slice())
}

pub fn save_remap(path: &Path, table: &RemapTable) -> Result<(), FormatError> {
    write_with(path, |w| write_remap(w, table))
}

/// Cursor over a Netpbm-style ASCII header.
struct Header<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Header<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    fn skip_space_and_comments(&mut self) {
        while self.pos < self.buf.len() {
            match self.buf[self.pos] {
                b'#' => {
                    while self.pos < self.buf.len() && self.buf[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                c if c.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn token(&mut self, what: &str) -> Result<&'a str, FormatError> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.buf.len() && !self.buf[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(FormatError::Malformed(format!("missing {what}")));
        }
        std::str::from_utf8(&self.buf[start..self.pos])
            .map_err(|_| FormatError::Malformed(format!("non-ASCII {what}")))
    }

    fn number<T: std::str::FromStr>(&mut self, what: &str) -> Result<T, FormatError> {
        let tok = self.token(what)?;
        tok.parse()
            .map_err(|_| FormatError::Malformed(format!("invalid {what} {tok:?}")))
    }

    /// Consumes the single whitespace byte that ends the header.
    fn end(mut self) -> Result<&'a [u8], FormatError> {
        match self.buf.get(self.pos) {
            Some(c) if c.is_ascii_whitespace() => {
                self.pos += 1;
                Ok(&self.buf[self.pos..])
            }
            _ => Err(FormatError::Malformed("header not terminated by whitespace".into())),
        }
    }
}

fn take_payload<'a>(rest: &'a [u8], expected: usize) -> Result<&'a [u8], FormatError> {
    if rest.len() < expected {
        return Err(FormatError::Truncated {
            expected,
            actual: rest.len(),
        });
    }
    Ok(&rest[..expected])
}

fn positive_dims(width: usize, height: usize) -> Result<(), FormatError> {
    if width == 0 || height == 0 {
        return Err(FormatError::Malformed(format!("zero dimension {width}x{height}")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bits(map: &Image<f32>) -> Vec<u32> {
        map.data().iter().map(|x| x.to_bits()).collect()
    }

    #[test]
    fn file_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let img = Image::from_fn(5, 3, |u, v| (u * 40 + v) as u8);
        let p = dir.path().join("a.pgm");
        save_pgm(&p, &img).unwrap();
        assert_eq!(load_pgm(&p).unwrap().to_gray8(), img);
        let first = std::fs::read(&p).unwrap();
        save_pgm(&p, &load_pgm(&p).unwrap().to_gray8()).unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), first);

        let map = Image::new(3, 2, vec![1.5f32, f32::NAN, -0.0, 7.0, f32::INFINITY, 1e-30]).unwrap();
        let p = dir.path().join("a.pfm");
        save_pfm(&p, &map).unwrap();
        assert_eq!(bits(&load_pfm(&p).unwrap()), bits(&map));

        let t = RemapTable::identity(2, 3, 4, 5);
        let p = dir.path().join("a.lfrm");
        save_remap(&p, &t).unwrap();
        assert_eq!(load_remap(&p).unwrap(), t);
    }

    proptest! {
        #[test]
        fn pfm_write_read_write_is_stable(
            w in 1usize..6, h in 1usize..6,
            raw in proptest::collection::vec(any::<u32>(), 36),
        ) {
            let map = Image::new(w, h, raw[..w * h].iter().map(|&b| f32::from_bits(b)).collect()).unwrap();
            let mut a = Vec::new();
            write_pfm(&mut a, &map).unwrap();
            let back = read_pfm(&mut a.as_slice()).unwrap();
            prop_assert_eq!(bits(&back), bits(&map));
            let mut b = Vec::new();
            write_pfm(&mut b, &back).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn pgm16_round_trip(w in 1usize..6, h in 1usize..6, raw in proptest::collection::vec(any::<u16>(), 36)) {
            let img = Image::new(w, h, raw[..w * h].to_vec()).unwrap();
            let mut a = Vec::new();
            write_pgm16(&mut a, &img).unwrap();
            match read_pgm(&mut a.as_slice()).unwrap() {
                Pgm::Gray16(back) => prop_assert_eq!(back, img),
                Pgm::Gray8(_) => prop_assert!(false, "expected 16-bit"),
            }
        }
    }
}

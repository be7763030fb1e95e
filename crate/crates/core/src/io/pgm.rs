use std::io::{Read, Write};

use super::{positive_dims, take_payload, FormatError, Header};
use crate::lightfield::{GrayImage, Image};

/// A decoded binary PGM.
#[derive(Clone, Debug, PartialEq)]
pub enum Pgm {
    Gray8(GrayImage),
    /// 16-bit samples with their declared maximum value.
    Gray16(Image<u16>),
}

impl Pgm {
    pub fn width(&self) -> usize {
        match self {
            Pgm::Gray8(i) => i.width(),
            Pgm::Gray16(i) => i.width(),
        }
    }

    pub fn height(&self) -> usize {
        match self {
            Pgm::Gray8(i) => i.height(),
            Pgm::Gray16(i) => i.height(),
        }
    }

    /// 16-bit images keep their high byte.
    pub fn to_gray8(&self) -> GrayImage {
        match self {
            Pgm::Gray8(i) => i.clone(),
            Pgm::Gray16(i) => i.map(|&x| (x >> 8) as u8),
        }
    }
}

/// Reads a P5 image with maxval up to 65535. Samples above 255 are stored
/// big-endian, two bytes each.
pub fn read_pgm<R: Read>(reader: &mut R) -> Result<Pgm, FormatError> {
    let mut buf = Vec::new();
    reader.read_to_end(&mut buf)?;
    let mut header = Header::new(&buf);
    let magic = header.token("magic")?;
    if magic != "P5" {
        return Err(FormatError::Malformed(format!("expected P5, got {magic:?}")));
    }
    let width: usize = header.number("width")?;
    let height: usize = header.number("height")?;
    let maxval: u32 = header.number("maxval")?;
    positive_dims(width, height)?;
    if maxval == 0 || maxval > 65535 {
        return Err(FormatError::Malformed(format!("maxval {maxval} out of range")));
    }
    let rest = header.end()?;
    let n = width * height;
    if maxval < 256 {
        let payload = take_payload(rest, n)?;
        Ok(Pgm::Gray8(Image::new(width, height, payload.to_vec()).expect("checked dims")))
    } else {
        let payload = take_payload(rest, 2 * n)?;
        let data = payload
            .chunks_exact(2)
            .map(|b| u16::from_be_bytes([b[0], b[1]]))
            .collect();
        Ok(Pgm::Gray16(Image::new(width, height, data).expect("checked dims")))
    }
}

pub fn write_pgm<W: Write + ?Sized>(writer: &mut W, img: &GrayImage) -> Result<(), FormatError> {
    write!(writer, "P5\n{} {}\n255\n", img.width(), img.height())?;
    writer.write_all(img.data())?;
    Ok(())
}

pub fn write_pgm16<W: Write + ?Sized>(writer: &mut W, img: &Image<u16>) -> Result<(), FormatError> {
    write!(writer, "P5\n{} {}\n65535\n", img.width(), img.height())?;
    let bytes: Vec<u8> = img.data().iter().flat_map(|x| x.to_be_bytes()).collect();
    writer.write_all(&bytes)?;
    Ok(())
}

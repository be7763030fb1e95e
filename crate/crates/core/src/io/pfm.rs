use std::io::{Read, Write};

use super::{positive_dims, take_payload, FormatError, Header};
use crate::lightfield::Image;

/// Reads a single-channel little-endian PFM (`Pf`, negative scale). Rows are
/// stored bottom to top in the file and returned top to bottom.
pub fn read_pfm<R: Read>(reader: &mut R) -> Result<Image<f32>, FormatError> {
    let mut buf = Vec::new();
    reader.read_to_end(&mut buf)?;
    let mut header = Header::new(&buf);
    let magic = header.token("magic")?;
    if magic != "Pf" {
        return Err(FormatError::Malformed(format!(
            "expected single-channel Pf, got {magic:?}"
        )));
    }
    let width: usize = header.number("width")?;
    let height: usize = header.number("height")?;
    let scale: f32 = header.number("scale")?;
    positive_dims(width, height)?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(FormatError::Malformed(format!("invalid scale {scale}")));
    }
    if scale > 0.0 {
        return Err(FormatError::BigEndian(scale));
    }
    let payload = take_payload(header.end()?, 4 * width * height)?;
    let mut data = vec![0f32; width * height];
    for (file_row, chunk) in payload.chunks_exact(4 * width).enumerate() {
        let row = height - 1 - file_row;
        for (u, b) in chunk.chunks_exact(4).enumerate() {
            data[row * width + u] = f32::from_le_bytes([b[0], b[1], b[2], b[3]]);
        }
    }
    Ok(Image::new(width, height, data).expect("checked dims"))
}

pub fn write_pfm<W: Write + ?Sized>(writer: &mut W, map: &Image<f32>) -> Result<(), FormatError> {
    let (w, h) = (map.width(), map.height());
    write!(writer, "Pf\n{w} {h}\n-1.0\n")?;
    let mut bytes = Vec::with_capacity(4 * w * h);
    for v in (0..h).rev() {
        for &x in &map.data()[v * w..(v + 1) * w] {
            bytes.extend_from_slice(&x.to_le_bytes());
        }
    }
    writer.write_all(&bytes)?;
    Ok(())
}

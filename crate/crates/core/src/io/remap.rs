//! `LFRM` container: magic, version byte, `u16` rows, `u16` cols, `u32` width,
//! `u32` height, then per view (row-major over `(t, s)`) all X coordinates
//! followed by all Y coordinates as `f32`. Little-endian throughout.

use std::io::{Read, Write};

use super::FormatError;
use crate::rectify::RemapTable;

pub const REMAP_MAGIC: [u8; 4] = *b"LFRM";
pub const REMAP_VERSION: u8 = 1;
const HEADER_LEN: usize = 17;

pub fn write_remap<W: Write + ?Sized>(writer: &mut W, table: &RemapTable) -> Result<(), FormatError> {
    let rows = u16::try_from(table.rows())
        .map_err(|_| FormatError::Size(format!("{} grid rows", table.rows())))?;
    let cols = u16::try_from(table.cols())
        .map_err(|_| FormatError::Size(format!("{} grid columns", table.cols())))?;
    let width = u32::try_from(table.width())
        .map_err(|_| FormatError::Size(format!("width {}", table.width())))?;
    let height = u32::try_from(table.height())
        .map_err(|_| FormatError::Size(format!("height {}", table.height())))?;
    let n = table.width() * table.height();
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * n * table.view_count());
    out.extend_from_slice(&REMAP_MAGIC);
    out.push(REMAP_VERSION);
    out.extend_from_slice(&rows.to_le_bytes());
    out.extend_from_slice(&cols.to_le_bytes());
    out.extend_from_slice(&width.to_le_bytes());
    out.extend_from_slice(&height.to_le_bytes());
    for view in 0..table.view_count() {
        for map in [table.map_x(), table.map_y()] {
            for x in &map[view * n..(view + 1) * n] {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
    }
    writer.write_all(&out)?;
    Ok(())
}

pub fn read_remap<R: Read>(reader: &mut R) -> Result<RemapTable, FormatError> {
    let mut buf = Vec::new();
    reader.read_to_end(&mut buf)?;
    if buf.len() < HEADER_LEN {
        return Err(FormatError::Size(format!(
            "{} bytes is shorter than the {HEADER_LEN}-byte header",
            buf.len()
        )));
    }
    let magic = [buf[0], buf[1], buf[2], buf[3]];
    if magic != REMAP_MAGIC {
        return Err(FormatError::BadMagic(magic));
    }
    if buf[4] != REMAP_VERSION {
        return Err(FormatError::Version(buf[4]));
    }
    let rows = u16::from_le_bytes([buf[5], buf[6]]) as usize;
    let cols = u16::from_le_bytes([buf[7], buf[8]]) as usize;
    let width = u32::from_le_bytes([buf[9], buf[10], buf[11], buf[12]]) as usize;
    let height = u32::from_le_bytes([buf[13], buf[14], buf[15], buf[16]]) as usize;
    let n = width * height;
    let views = rows * cols;
    let expected = HEADER_LEN + 8 * n * views;
    if buf.len() != expected {
        return Err(FormatError::Size(format!(
            "{rows}x{cols} views of {width}x{height} need {expected} bytes, file has {}",
            buf.len()
        )));
    }
    let floats = |offset: usize| -> Vec<f32> {
        buf[offset..offset + 4 * n]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect()
    };
    let mut map_x = Vec::with_capacity(n * views);
    let mut map_y = Vec::with_capacity(n * views);
    for view in 0..views {
        let base = HEADER_LEN + view * 8 * n;
        map_x.extend(floats(base));
        map_y.extend(floats(base + 4 * n));
    }
    RemapTable::new(rows, cols, width, height, map_x, map_y)
        .map_err(|e| FormatError::Size(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn golden_header() {
        let t = RemapTable::identity(4, 4, 704, 704);
        let mut out = Vec::new();
        write_remap(&mut out, &t).unwrap();
        assert_eq!(
            &out[..HEADER_LEN],
            &[0x4C, 0x46, 0x52, 0x4D, 0x01, 0x04, 0x00, 0x04, 0x00, 0xC0, 0x02, 0x00, 0x00, 0xC0, 0x02, 0x00, 0x00]
        );
        assert_eq!(out.len(), HEADER_LEN + 16 * 704 * 704 * 8);
    }

    #[test]
    fn view_major_layout() {
        let t = RemapTable::from_fn(1, 2, 2, 1, |view, u, _| (10.0 * view as f32 + u as f32, -1.0));
        let mut out = Vec::new();
        write_remap(&mut out, &t).unwrap();
        let f: Vec<f32> = out[HEADER_LEN..]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        assert_eq!(f, vec![0.0, 1.0, -1.0, -1.0, 10.0, 11.0, -1.0, -1.0]);
        assert_eq!(read_remap(&mut out.as_slice()).unwrap(), t);
    }

    #[test]
    fn errors() {
        let mut out = Vec::new();
        write_remap(&mut out, &RemapTable::identity(2, 2, 3, 3)).unwrap();
        let truncated = &out[..out.len() - 1];
        assert!(matches!(read_remap(&mut &truncated[..]), Err(FormatError::Size(_))));
        let mut bad = out.clone();
        bad[0] = b'X';
        assert!(matches!(read_remap(&mut bad.as_slice()), Err(FormatError::BadMagic(_))));
        let mut bad = out.clone();
        bad[4] = 2;
        assert!(matches!(read_remap(&mut bad.as_slice()), Err(FormatError::Version(2))));
        assert!(matches!(read_remap(&mut &out[..5]), Err(FormatError::Size(_))));
    }
}

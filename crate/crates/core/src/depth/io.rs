//! `#farsec-depth v1` files: one ASCII header line followed by
//! `width * height` little-endian f32 samples, row-major.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::{DepthError, DepthField};

pub const DEPTH_MAGIC: &str = "#farsec-depth v1";

pub fn write_depth_to<W: Write>(field: &DepthField, mut out: W) -> std::io::Result<()> {
    writeln!(out, "{DEPTH_MAGIC} width={} height={}", field.width(), field.height())?;
    let mut bytes = Vec::with_capacity(field.values().len() * 4);
    for v in field.values() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    out.write_all(&bytes)?;
    out.flush()
}

pub fn write_depth(field: &DepthField, path: &Path) -> Result<(), DepthError> {
    write_depth_to(field, BufWriter::new(File::create(path)?))?;
    Ok(())
}

pub fn parse_depth<R: BufRead>(mut reader: R) -> Result<DepthField, DepthError> {
    let mut header = Vec::new();
    reader.read_until(b'\n', &mut header)?;
    if header.last() != Some(&b'\n') {
        return Err(DepthError::Format("missing header line".into()));
    }
    let header = std::str::from_utf8(&header[..header.len() - 1])
        .map_err(|_| DepthError::Format("header is not UTF-8".into()))?;
    let rest = header
        .strip_prefix(DEPTH_MAGIC)
        .ok_or_else(|| DepthError::Format(format!("expected header starting with {DEPTH_MAGIC:?}")))?;
    let (mut width, mut height) = (None, None);
    for field in rest.split_whitespace() {
        match field.split_once('=') {
            Some(("width", v)) => width = v.parse::<u32>().ok(),
            Some(("height", v)) => height = v.parse::<u32>().ok(),
            _ => return Err(DepthError::Format(format!("unexpected header field {field:?}"))),
        }
    }
    let (Some(w), Some(h)) = (width, height) else {
        return Err(DepthError::Format("header needs width= and height=".into()));
    };
    let n = w as usize * h as usize;
    let mut bytes = vec![0u8; n * 4];
    reader
        .read_exact(&mut bytes)
        .map_err(|e| DepthError::Format(format!("expected {n} samples: {e}")))?;
    let mut trailing = [0u8; 1];
    if reader.read(&mut trailing)? != 0 {
        return Err(DepthError::Format("trailing bytes after depth samples".into()));
    }
    let values = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    DepthField::new(w, h, values)
}

pub fn read_depth(path: &Path) -> Result<DepthField, DepthError> {
    parse_depth(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    #[test]
    fn header_layout_is_exact() {
        let f = DepthField::new(2, 1, vec![1.0, 0.5]).unwrap();
        let mut buf = Vec::new();
        write_depth_to(&f, &mut buf).unwrap();
        let header = b"#farsec-depth v1 width=2 height=1\n";
        assert_eq!(&buf[..header.len()], header);
        assert_eq!(&buf[header.len()..], &[0, 0, 0x80, 0x3f, 0, 0, 0, 0x3f]);
    }

    #[test]
    fn truncated_and_padded_files_fail() {
        let mut buf = b"#farsec-depth v1 width=2 height=2\n".to_vec();
        buf.extend_from_slice(&[0u8; 12]);
        assert!(parse_depth(buf.as_slice()).is_err());
        buf.extend_from_slice(&[0u8; 5]);
        assert!(parse_depth(buf.as_slice()).is_err());
        assert!(parse_depth(&b"#farsec-depth v2 width=1 height=1\n\0\0\0\0"[..]).is_err());
    }

    proptest! {
        #[test]
        fn round_trip(w in 1u32..20, h in 1u32..20, seed in any::<u32>()) {
            let values: Vec<f32> = (0..w * h).map(|i| (i ^ seed) as f32 * 0.37 + 0.01).collect();
            let f = DepthField::new(w, h, values).unwrap();
            let mut buf = Vec::new();
            write_depth_to(&f, &mut buf).unwrap();
            prop_assert_eq!(parse_depth(buf.as_slice()).unwrap(), f);
        }
    }
}

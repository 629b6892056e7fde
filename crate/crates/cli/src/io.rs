//! Image readers (IDX3-ubyte, CSV matrices, binary PGM) and the CSV matrix writer.

use std::fs;
use std::io::{Cursor, Write};
use std::path::Path;

use byteorder::{BigEndian, ReadBytesExt};

use crate::error::{io_err, CliError, Result};
use crate::image::{ImageInstance, ImageSource};

pub const IDX3_MAGIC: u32 = 0x0000_0803;
const IDX3_HEADER_LEN: usize = 16;

/// Parses an IDX3-ubyte buffer: magic, then big-endian count, rows and
/// columns, then row-major unsigned bytes.
pub fn parse_idx(bytes: &[u8], path: &Path) -> Result<Vec<ImageInstance>> {
    if bytes.len() < IDX3_HEADER_LEN {
        return Err(CliError::Truncated {
            what: "IDX header",
            expected: IDX3_HEADER_LEN,
            found: bytes.len(),
        });
    }
    let mut cur = Cursor::new(bytes);
    let magic = cur.read_u32::<BigEndian>().expect("header length checked");
    if magic != IDX3_MAGIC {
        return Err(CliError::BadMagic { found: magic });
    }
    let count = cur.read_u32::<BigEndian>().expect("header length checked") as usize;
    let rows = cur.read_u32::<BigEndian>().expect("header length checked") as usize;
    let cols = cur.read_u32::<BigEndian>().expect("header length checked") as usize;

    let per_image = rows.checked_mul(cols);
    let payload = per_image.and_then(|p| p.checked_mul(count));
    let (Some(per_image), Some(payload)) = (per_image, payload) else {
        return Err(CliError::DimensionOverflow { count, rows, cols });
    };
    let body = &bytes[IDX3_HEADER_LEN..];
    if body.len() < payload {
        return Err(CliError::Truncated {
            what: "IDX payload",
            expected: payload,
            found: body.len(),
        });
    }
    if body.len() > payload {
        return Err(CliError::Parse(format!(
            "{} trailing bytes after IDX payload",
            body.len() - payload
        )));
    }
    if count > 0 && per_image == 0 {
        return Err(CliError::Image(format!("{rows}x{cols} images are empty")));
    }

    body.chunks_exact(per_image.max(1))
        .take(count)
        .map(|chunk| {
            let pixels = chunk.iter().map(|&b| b as f64).collect();
            ImageInstance::new(cols, rows, pixels, ImageSource::File(path.to_path_buf()))
        })
        .collect()
}

pub fn load_idx(path: impl AsRef<Path>) -> Result<Vec<ImageInstance>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(io_err(path))?;
    parse_idx(&bytes, path)
}

/// Reads a dense numeric matrix: one row per line, comma separated. Blank
/// lines and lines starting with `#` are skipped.
pub fn parse_csv_matrix(text: &str) -> Result<(usize, usize, Vec<f64>)> {
    let mut width = None;
    let mut rows = 0;
    let mut values = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let before = values.len();
        for field in line.split(',') {
            let field = field.trim();
            let v: f64 = field.parse().map_err(|_| {
                CliError::Parse(format!("line {}: bad number {field:?}", lineno + 1))
            })?;
            values.push(v);
        }
        let w = values.len() - before;
        match width {
            None => width = Some(w),
            Some(expected) if expected != w => {
                return Err(CliError::Parse(format!(
                    "line {}: {w} columns, expected {expected}",
                    lineno + 1
                )))
            }
            _ => {}
        }
        rows += 1;
    }
    let width = width.ok_or_else(|| CliError::Parse("no data rows".into()))?;
    Ok((width, rows, values))
}

pub fn load_csv_matrix(path: impl AsRef<Path>) -> Result<ImageInstance> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let (width, height, pixels) = parse_csv_matrix(&text)?;
    ImageInstance::new(width, height, pixels, ImageSource::File(path.to_path_buf()))
}

/// Writes values with shortest round-trip formatting, so reading the file
/// back gives identical floats.
pub fn write_csv_matrix(path: impl AsRef<Path>, width: usize, values: &[f64]) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for row in values.chunks(width.max(1)) {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    fs::File::create(path)
        .and_then(|mut f| f.write_all(out.as_bytes()))
        .map_err(io_err(path))
}

/// Binary PGM (`P5`), 8- or 16-bit samples.
pub fn parse_pgm(bytes: &[u8], path: &Path) -> Result<ImageInstance> {
    let mut pos = 0;
    let mut header = [0usize; 3];
    if !bytes.starts_with(b"P5") {
        return Err(CliError::Parse("not a binary PGM (missing P5)".into()));
    }
    pos += 2;
    for slot in header.iter_mut() {
        // Whitespace and comments may separate header fields.
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(CliError::Parse(format!(
                "PGM header: expected a number at byte {pos}"
            )));
        }
        *slot = std::str::from_utf8(&bytes[start..pos])
            .expect("ascii digits")
            .parse()
            .map_err(|_| CliError::Parse("PGM header: number out of range".into()))?;
    }
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => {
            return Err(CliError::Parse(
                "PGM header: missing separator before raster".into(),
            ))
        }
    }
    let [width, height, maxval] = header;
    if maxval == 0 || maxval > 65535 {
        return Err(CliError::Parse(format!(
            "PGM maxval {maxval} outside 1..=65535"
        )));
    }
    let sample = if maxval < 256 { 1 } else { 2 };
    let payload = width
        .checked_mul(height)
        .and_then(|p| p.checked_mul(sample))
        .ok_or(CliError::DimensionOverflow {
            count: 1,
            rows: height,
            cols: width,
        })?;
    let body = &bytes[pos..];
    if body.len() < payload {
        return Err(CliError::Truncated {
            what: "PGM raster",
            expected: payload,
            found: body.len(),
        });
    }
    let pixels = if sample == 1 {
        body[..payload].iter().map(|&b| b as f64).collect()
    } else {
        body[..payload]
            .chunks_exact(2)
            .map(|p| u16::from_be_bytes([p[0], p[1]]) as f64)
            .collect()
    };
    ImageInstance::new(width, height, pixels, ImageSource::File(path.to_path_buf()))
}

pub fn load_pgm(path: impl AsRef<Path>) -> Result<ImageInstance> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(io_err(path))?;
    parse_pgm(&bytes, path)
}

/// Loads every image in a file, choosing the reader from the content: `P5`
/// for PGM, the IDX3 magic for IDX, CSV otherwise.
pub fn load_images(path: impl AsRef<Path>) -> Result<Vec<ImageInstance>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(io_err(path))?;
    if bytes.starts_with(b"P5") {
        return Ok(vec![parse_pgm(&bytes, path)?]);
    }
    if bytes.starts_with(&IDX3_MAGIC.to_be_bytes()) {
        return parse_idx(&bytes, path);
    }
    let text = String::from_utf8(bytes)
        .map_err(|_| CliError::Parse(format!("{}: not IDX, PGM or UTF-8 CSV", path.display())))?;
    let (width, height, pixels) = parse_csv_matrix(&text)?;
    Ok(vec![ImageInstance::new(
        width,
        height,
        pixels,
        ImageSource::File(path.to_path_buf()),
    )?])
}

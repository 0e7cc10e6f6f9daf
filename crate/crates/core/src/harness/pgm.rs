//! Binary greyscale PGM (`P5`, max value 255).

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Encodes a 2-D image whose intensities span `[0, value_range]`.
pub fn encode_pgm(image: &Tensor, value_range: f64) -> Result<Vec<u8>> {
    let shape = image.shape();
    if shape.len() != 2 {
        return Err(Error::ShapeMismatch(format!("PGM needs a 2-D image, got {shape:?}")));
    }
    if !(value_range > 0.0) {
        return Err(Error::InvalidArgument(format!("value range must be positive, got {value_range}")));
    }
    let mut out = format!("P5\n{} {}\n255\n", shape[1], shape[0]).into_bytes();
    out.extend(
        image
            .data()
            .iter()
            .map(|&v| (v / value_range * 255.0).round().clamp(0.0, 255.0) as u8),
    );
    Ok(out)
}

pub fn write_pgm(image: &Tensor, value_range: f64, path: &Path) -> Result<()> {
    let bytes = encode_pgm(image, value_range)?;
    let mut f = fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

/// Decodes a `P5` file back to `[0, value_range]`.
pub fn decode_pgm(bytes: &[u8], value_range: f64) -> Result<Tensor> {
    // Header: magic, width, height, maxval, separated by whitespace; comments skipped.
    let mut fields = Vec::with_capacity(4);
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Truncated("PGM header".into()));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    pos += 1;
    if fields[0] != "P5" {
        return Err(Error::Format(format!("not a binary PGM: {}", fields[0])));
    }
    let parse = |s: &str| s.parse::<usize>().map_err(|e| Error::Format(format!("PGM header: {e}")));
    let (width, height, maxval) = (parse(&fields[1])?, parse(&fields[2])?, parse(&fields[3])?);
    if maxval == 0 || maxval > 255 {
        return Err(Error::Format(format!("unsupported PGM max value {maxval}")));
    }
    let body = bytes.get(pos..pos + width * height).ok_or_else(|| Error::Truncated("PGM body".into()))?;
    Tensor::matrix(
        height,
        width,
        body.iter().map(|&b| b as f64 / maxval as f64 * value_range).collect(),
    )
}

pub fn read_pgm(path: &Path, value_range: f64) -> Result<Tensor> {
    decode_pgm(&fs::read(path)?, value_range)
}

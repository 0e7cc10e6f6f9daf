//! IDX (MNIST) image and label files.

use std::fs;
use std::io::{Cursor, Read};
use std::path::Path;

use byteorder::{BigEndian, ReadBytesExt};

use crate::error::{Error, Result};
use crate::nn::Sample;
use crate::tensor::Tensor;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

fn read_u32(cur: &mut Cursor<&[u8]>, what: &str) -> Result<u32> {
    cur.read_u32::<BigEndian>()
        .map_err(|_| Error::Truncated(format!("{what} header")))
}

fn check_magic(found: u32, expected: u32) -> Result<()> {
    if found != expected {
        return Err(Error::BadMagic { expected, found });
    }
    Ok(())
}

/// Parses an IDX3 image file into `[rows x cols]` tensors with pixel values
/// kept in `[0, 255]`.
pub fn parse_images(bytes: &[u8]) -> Result<Vec<Tensor>> {
    let mut cur = Cursor::new(bytes);
    check_magic(read_u32(&mut cur, "image")?, IMAGES_MAGIC)?;
    let count = read_u32(&mut cur, "image")? as usize;
    let rows = read_u32(&mut cur, "image")? as usize;
    let cols = read_u32(&mut cur, "image")? as usize;
    let pixels = rows * cols;
    let mut buf = vec![0u8; pixels];
    let mut images = Vec::with_capacity(count);
    for i in 0..count {
        cur.read_exact(&mut buf)
            .map_err(|_| Error::Truncated(format!("image {i} of {count}")))?;
        images.push(Tensor::matrix(rows, cols, buf.iter().map(|&b| b as f64).collect())?);
    }
    Ok(images)
}

pub fn parse_labels(bytes: &[u8]) -> Result<Vec<usize>> {
    let mut cur = Cursor::new(bytes);
    check_magic(read_u32(&mut cur, "label")?, LABELS_MAGIC)?;
    let count = read_u32(&mut cur, "label")? as usize;
    let body = &bytes[8..];
    if body.len() < count {
        return Err(Error::Truncated(format!("{} of {count} labels present", body.len())));
    }
    Ok(body[..count].iter().map(|&b| b as usize).collect())
}

/// Loads matching image and label files.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Vec<Sample>> {
    let images = parse_images(&fs::read(images_path)?)?;
    let labels = parse_labels(&fs::read(labels_path)?)?;
    if images.len() != labels.len() {
        return Err(Error::CountMismatch { images: images.len(), labels: labels.len() });
    }
    Ok(images.into_iter().zip(labels).map(|(x, label)| Sample { x, label }).collect())
}

//! IDX container format used by the MNIST distribution: a big-endian `u32`
//! magic (`0x0000_0803` images, `0x0000_0801` labels), big-endian `u32`
//! dimension sizes, then raw `u8` payload.

use std::fs;
use std::io::{Cursor, Read};
use std::path::Path;

use byteorder::{BigEndian, ReadBytesExt, WriteBytesExt};

use crate::{Error, Result};

pub const IMAGE_MAGIC: u32 = 2051;
pub const LABEL_MAGIC: u32 = 2049;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    /// Row-major pixels, `count * rows * cols` bytes.
    pub pixels: Vec<u8>,
}

impl IdxImages {
    pub fn pixels_per_image(&self) -> usize {
        self.rows * self.cols
    }

    pub fn image(&self, i: usize) -> &[u8] {
        let n = self.pixels_per_image();
        &self.pixels[i * n..(i + 1) * n]
    }
}

/// Images and labels as stored on disk.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawMnist {
    pub images: IdxImages,
    pub labels: Vec<u8>,
}

impl RawMnist {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Pixels of image `i` scaled to `[0, 1]`.
    pub fn features(&self, i: usize) -> Vec<f32> {
        self.images.image(i).iter().map(|&p| f32::from(p) / 255.0).collect()
    }
}

pub fn parse_images(bytes: &[u8]) -> Result<IdxImages> {
    let mut cur = Cursor::new(bytes);
    let magic = read_u32(&mut cur, "image header")?;
    if magic != IMAGE_MAGIC {
        return Err(Error::format("IDX image file", format!("magic {magic}, expected {IMAGE_MAGIC}")));
    }
    let count = read_u32(&mut cur, "image header")? as usize;
    let rows = read_u32(&mut cur, "image header")? as usize;
    let cols = read_u32(&mut cur, "image header")? as usize;
    let expected = count * rows * cols;
    let pixels = read_payload(&mut cur, expected, "IDX image file")?;
    Ok(IdxImages {
        count,
        rows,
        cols,
        pixels,
    })
}

pub fn parse_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    let mut cur = Cursor::new(bytes);
    let magic = read_u32(&mut cur, "label header")?;
    if magic != LABEL_MAGIC {
        return Err(Error::format("IDX label file", format!("magic {magic}, expected {LABEL_MAGIC}")));
    }
    let count = read_u32(&mut cur, "label header")? as usize;
    read_payload(&mut cur, count, "IDX label file")
}

pub fn encode_images(images: &IdxImages) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + images.pixels.len());
    for v in [IMAGE_MAGIC, images.count as u32, images.rows as u32, images.cols as u32] {
        out.write_u32::<BigEndian>(v).unwrap();
    }
    out.extend_from_slice(&images.pixels);
    out
}

pub fn encode_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.write_u32::<BigEndian>(LABEL_MAGIC).unwrap();
    out.write_u32::<BigEndian>(labels.len() as u32).unwrap();
    out.extend_from_slice(labels);
    out
}

pub fn load_mnist_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<RawMnist> {
    let images = parse_images(&fs::read(images_path)?)?;
    let labels = parse_labels(&fs::read(labels_path)?)?;
    if images.count != labels.len() {
        return Err(Error::format(
            "MNIST pair",
            format!("{} images but {} labels", images.count, labels.len()),
        ));
    }
    Ok(RawMnist { images, labels })
}

fn read_u32(cur: &mut Cursor<&[u8]>, what: &str) -> Result<u32> {
    cur.read_u32::<BigEndian>()
        .map_err(|_| Error::format("IDX file", format!("truncated {what}")))
}

fn read_payload(cur: &mut Cursor<&[u8]>, len: usize, kind: &'static str) -> Result<Vec<u8>> {
    let mut payload = vec![0u8; len];
    cur.read_exact(&mut payload)
        .map_err(|_| Error::format(kind, format!("payload shorter than {len} bytes")))?;
    let rest = cur.get_ref().len() as u64 - cur.position();
    if rest != 0 {
        return Err(Error::format(kind, format!("{rest} trailing bytes")));
    }
    Ok(payload)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_images() -> IdxImages {
        IdxImages {
            count: 2,
            rows: 2,
            cols: 3,
            pixels: vec![0, 255, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10],
        }
    }

    #[test]
    fn image_header_starts_with_0803() {
        let bytes = encode_images(&tiny_images());
        assert_eq!(&bytes[..4], &[0x00, 0x00, 0x08, 0x03]);
        assert_eq!(parse_images(&bytes).unwrap(), tiny_images());
    }

    #[test]
    fn label_magic_is_rejected_as_images() {
        let bytes = encode_labels(&[1, 2, 3]);
        assert!(matches!(parse_images(&bytes), Err(Error::Format { .. })));
        assert!(parse_labels(&encode_images(&tiny_images())).is_err());
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let mut bytes = encode_images(&tiny_images());
        bytes.pop();
        assert!(parse_images(&bytes).is_err());
        assert!(parse_images(&bytes[..10]).is_err());
    }

    #[test]
    fn trailing_bytes_are_rejected() {
        let mut bytes = encode_labels(&[4, 2]);
        bytes.push(0);
        assert!(parse_labels(&bytes).is_err());
    }

    #[test]
    fn full_white_image_scales_to_ones() {
        let raw = RawMnist {
            images: IdxImages {
                count: 1,
                rows: 28,
                cols: 28,
                pixels: vec![255; 784],
            },
            labels: vec![3],
        };
        let f = raw.features(0);
        assert_eq!(f.len(), 784);
        assert!(f.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn count_mismatch_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let img = dir.path().join("img");
        let lab = dir.path().join("lab");
        fs::write(&img, encode_images(&tiny_images())).unwrap();
        fs::write(&lab, encode_labels(&[1, 2, 3])).unwrap();
        assert!(load_mnist_idx(&img, &lab).is_err());
        fs::write(&lab, encode_labels(&[1, 2])).unwrap();
        assert_eq!(load_mnist_idx(&img, &lab).unwrap().len(), 2);
    }
}

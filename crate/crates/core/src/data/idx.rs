//! IDX files (the MNIST distribution format): a big-endian magic number
//! `0x0000_08_NN` where `NN` is the dimension count, one big-endian `u32` per
//! dimension, then unsigned bytes.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::{Dataset, DatasetKind, Image, Payload, Sample};
use crate::error::{Error, Result};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

/// Labels outside `0..MAX_LABEL` are rejected.
pub const MAX_LABEL: u8 = 10;

fn ingest(path: &Path, offset: usize, reason: impl Into<String>) -> Error {
    Error::Ingest {
        path: path.to_path_buf(),
        offset: offset as u64,
        reason: reason.into(),
    }
}

struct Reader<'a> {
    path: PathBuf,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn u32(&mut self, what: &str) -> Result<u32> {
        let end = self.pos + 4;
        let chunk = self
            .bytes
            .get(self.pos..end)
            .ok_or_else(|| ingest(&self.path, self.pos, format!("truncated header: missing {what}")))?;
        self.pos = end;
        Ok(u32::from_be_bytes(chunk.try_into().expect("4 bytes")))
    }

    fn magic(&mut self, expected: u32) -> Result<()> {
        let m = self.u32("magic number")?;
        if m != expected {
            return Err(ingest(
                &self.path,
                0,
                format!("bad magic 0x{m:08x}, expected 0x{expected:08x}"),
            ));
        }
        Ok(())
    }

    fn body(&self, len: usize) -> Result<&'a [u8]> {
        let available = self.bytes.len() - self.pos;
        if available < len {
            return Err(ingest(
                &self.path,
                self.bytes.len(),
                format!("truncated data: expected {len} bytes after header, found {available}"),
            ));
        }
        Ok(&self.bytes[self.pos..self.pos + len])
    }
}

/// Parsed image file: `count` grayscale images of `rows × cols` bytes.
#[derive(Clone, Debug, PartialEq)]
pub struct IdxImages {
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<Vec<u8>>,
}

pub fn parse_images(path: &Path, bytes: &[u8]) -> Result<IdxImages> {
    let mut r = Reader { path: path.to_path_buf(), bytes, pos: 0 };
    r.magic(IMAGES_MAGIC)?;
    let count = r.u32("image count")? as usize;
    let rows = r.u32("row count")? as usize;
    let cols = r.u32("column count")? as usize;
    let size = rows * cols;
    let body = r.body(count * size)?;
    if body.len() < bytes.len() - r.pos {
        return Err(ingest(path, r.pos + body.len(), "trailing bytes after image data"));
    }
    Ok(IdxImages {
        rows,
        cols,
        pixels: body.chunks_exact(size.max(1)).take(count).map(<[u8]>::to_vec).collect(),
    })
}

pub fn parse_labels(path: &Path, bytes: &[u8]) -> Result<Vec<u8>> {
    let mut r = Reader { path: path.to_path_buf(), bytes, pos: 0 };
    r.magic(LABELS_MAGIC)?;
    let count = r.u32("label count")? as usize;
    let body = r.body(count)?;
    if body.len() < bytes.len() - r.pos {
        return Err(ingest(path, r.pos + body.len(), "trailing bytes after label data"));
    }
    if let Some(i) = body.iter().position(|&l| l >= MAX_LABEL) {
        return Err(ingest(path, r.pos + i, format!("label {} outside 0..{}", body[i], MAX_LABEL)));
    }
    Ok(body.to_vec())
}

/// Loads an image/label file pair into a dataset with pixels scaled to `[0, 1]`.
pub fn load_idx(images: &Path, labels: &Path) -> Result<Dataset> {
    let img_bytes = fs::read(images)?;
    let lbl_bytes = fs::read(labels)?;
    let imgs = parse_images(images, &img_bytes)?;
    let lbls = parse_labels(labels, &lbl_bytes)?;
    if imgs.pixels.len() != lbls.len() {
        return Err(ingest(
            labels,
            4,
            format!("label count {} does not match image count {}", lbls.len(), imgs.pixels.len()),
        ));
    }
    let samples = imgs
        .pixels
        .iter()
        .zip(&lbls)
        .enumerate()
        .map(|(i, (px, &label))| Sample {
            id: i as u64,
            payload: Payload::Image(Image {
                channels: 1,
                height: imgs.rows,
                width: imgs.cols,
                data: px.iter().map(|&p| p as f64 / 255.0).collect(),
            }),
            label: label as usize,
        })
        .collect();
    Dataset::new(DatasetKind::IdxImage, MAX_LABEL as usize, samples)
}

pub fn encode_images(rows: usize, cols: usize, pixels: &[Vec<u8>]) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + pixels.len() * rows * cols);
    for v in [IMAGES_MAGIC, pixels.len() as u32, rows as u32, cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    for p in pixels {
        out.extend_from_slice(p);
    }
    out
}

pub fn encode_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

pub fn write_idx(images: &Path, labels: &Path, rows: usize, cols: usize, pixels: &[Vec<u8>], tags: &[u8]) -> Result<()> {
    fs::File::create(images)?.write_all(&encode_images(rows, cols, pixels))?;
    fs::File::create(labels)?.write_all(&encode_labels(tags))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture() -> (Vec<Vec<u8>>, Vec<u8>) {
        let pixels = (0..4u8)
            .map(|k| (0..784).map(|i| ((i * 7 + k as usize * 31) % 256) as u8).collect())
            .collect();
        (pixels, vec![3, 1, 4, 1])
    }

    #[test]
    fn header_layout_is_big_endian() {
        let (px, _) = fixture();
        let bytes = encode_images(28, 28, &px);
        assert_eq!(&bytes[..16], &[0, 0, 8, 3, 0, 0, 0, 4, 0, 0, 0, 28, 0, 0, 0, 28]);
        assert_eq!(bytes.len(), 16 + 4 * 784);
        assert_eq!(&encode_labels(&[3, 1])[..], &[0, 0, 8, 1, 0, 0, 0, 2, 3, 1]);
    }

    #[test]
    fn fixture_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = (dir.path().join("img"), dir.path().join("lbl"));
        let (px, lb) = fixture();
        write_idx(&ip, &lp, 28, 28, &px, &lb).unwrap();
        let ds = load_idx(&ip, &lp).unwrap();
        assert_eq!(ds.len(), 4);
        for (s, (p, &l)) in ds.samples.iter().zip(px.iter().zip(&lb)) {
            assert_eq!(s.label, l as usize);
            let Payload::Image(img) = &s.payload else { panic!("image payload") };
            assert_eq!((img.channels, img.height, img.width), (1, 28, 28));
            for (v, &b) in img.data.iter().zip(p) {
                assert_eq!(*v, b as f64 / 255.0);
            }
        }
    }

    #[test]
    fn rejects_bad_files_with_offsets() {
        let p = Path::new("x");
        let (px, lb) = fixture();
        let err = parse_images(p, &[]).unwrap_err();
        assert!(matches!(err, Error::Ingest { offset: 0, .. }), "{err}");

        let mut bytes = encode_images(28, 28, &px);
        bytes[3] = 0x02;
        assert!(matches!(parse_images(p, &bytes), Err(Error::Ingest { offset: 0, .. })));

        let bytes = encode_images(28, 28, &px);
        let cut = &bytes[..bytes.len() - 10];
        let err = parse_images(p, cut).unwrap_err();
        assert!(matches!(err, Error::Ingest { offset, .. } if offset == cut.len() as u64));
        assert!(err.to_string().contains("truncated"));

        let err = parse_images(p, &bytes[..10]).unwrap_err();
        assert!(matches!(err, Error::Ingest { offset: 8, .. }));

        let mut labels = encode_labels(&lb);
        labels[9] = 10;
        assert!(matches!(parse_labels(p, &labels), Err(Error::Ingest { offset: 9, .. })));
        assert!(parse_labels(p, &encode_images(28, 28, &px)).is_err());
    }

    #[test]
    fn count_mismatch_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = (dir.path().join("img"), dir.path().join("lbl"));
        let (px, _) = fixture();
        write_idx(&ip, &lp, 28, 28, &px, &[1, 2, 3]).unwrap();
        let err = load_idx(&ip, &lp).unwrap_err();
        assert!(matches!(err, Error::Ingest { offset: 4, .. }), "{err}");
    }
}

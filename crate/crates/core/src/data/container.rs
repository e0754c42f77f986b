//! Versioned little-endian dataset container.
//!
//! ```text
//! magic  b"SMDS"   version u16   kind u8   classes u32   count u64
//! per sample: id u64, label u32, tag u8,
//!   tag 0 (vector): len u32
//!   tag 1 (image):  channels u16, height u16, width u16
//!   values: f64 × n
//! ```

use std::io::{Read, Write};

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};

use super::{Dataset, DatasetKind, Image, Payload, Sample};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"SMDS";
pub const VERSION: u16 = 1;

pub fn write_container<W: Write>(mut w: W, ds: &Dataset) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_u16::<LE>(VERSION)?;
    w.write_u8(ds.kind.tag())?;
    w.write_u32::<LE>(ds.classes as u32)?;
    w.write_u64::<LE>(ds.samples.len() as u64)?;
    for s in &ds.samples {
        w.write_u64::<LE>(s.id)?;
        w.write_u32::<LE>(s.label as u32)?;
        match &s.payload {
            Payload::Vector(v) => {
                w.write_u8(0)?;
                w.write_u32::<LE>(v.len() as u32)?;
            }
            Payload::Image(img) => {
                w.write_u8(1)?;
                w.write_u16::<LE>(img.channels as u16)?;
                w.write_u16::<LE>(img.height as u16)?;
                w.write_u16::<LE>(img.width as u16)?;
            }
        }
        for &v in s.payload.values() {
            w.write_f64::<LE>(v)?;
        }
    }
    Ok(())
}

fn bad(msg: impl Into<String>) -> Error {
    Error::contract(format!("dataset container: {}", msg.into()))
}

pub fn read_container<R: Read>(mut r: R) -> Result<Dataset> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(bad("bad magic"));
    }
    let version = r.read_u16::<LE>()?;
    if version != VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let kind = DatasetKind::from_tag(r.read_u8()?).ok_or_else(|| bad("unknown dataset kind"))?;
    let classes = r.read_u32::<LE>()? as usize;
    let count = r.read_u64::<LE>()? as usize;
    let mut samples = Vec::with_capacity(count.min(1 << 20));
    for _ in 0..count {
        let id = r.read_u64::<LE>()?;
        let label = r.read_u32::<LE>()? as usize;
        let payload = match r.read_u8()? {
            0 => {
                let n = r.read_u32::<LE>()? as usize;
                let mut v = vec![0.0; n];
                r.read_f64_into::<LE>(&mut v)?;
                Payload::Vector(v)
            }
            1 => {
                let c = r.read_u16::<LE>()? as usize;
                let h = r.read_u16::<LE>()? as usize;
                let w = r.read_u16::<LE>()? as usize;
                let mut v = vec![0.0; c * h * w];
                r.read_f64_into::<LE>(&mut v)?;
                Payload::Image(Image::new(c, h, w, v)?)
            }
            t => return Err(bad(format!("unknown payload tag {t}"))),
        };
        samples.push(Sample { id, payload, label });
    }
    Dataset::new(kind, classes, samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gen_blobs, gen_shapes, BlobsSpec, ShapesSpec};

    #[test]
    fn round_trip_both_payloads() {
        for ds in [
            gen_shapes(&ShapesSpec { n_per_class: 2, ..Default::default() }).unwrap(),
            gen_blobs(&BlobsSpec { n_per_class: 3, ..Default::default() }).unwrap(),
        ] {
            let mut buf = Vec::new();
            write_container(&mut buf, &ds).unwrap();
            assert_eq!(&buf[..4], MAGIC);
            assert_eq!(read_container(&buf[..]).unwrap(), ds);
        }
    }

    #[test]
    fn rejects_corruption() {
        let ds = gen_blobs(&BlobsSpec { n_per_class: 1, ..Default::default() }).unwrap();
        let mut buf = Vec::new();
        write_container(&mut buf, &ds).unwrap();
        let mut bad_magic = buf.clone();
        bad_magic[0] = b'X';
        assert!(read_container(&bad_magic[..]).is_err());
        assert!(read_container(&buf[..buf.len() - 3]).is_err());
    }
}

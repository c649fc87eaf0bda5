//! The "FGD1" binary dataset format.
//!
//! Layout (all little-endian):
//! - magic `FGD1` (4 bytes)
//! - sample count (u32)
//! - per sample: label (u8), 64 thermal values (f32), 64 depth values (f32)
//!
//! 32-bit reals keep the file bit-exact across languages and platforms.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::data::{Dataset, FramePair, GestureClass, CELLS};
use crate::error::{Error, Result};

const MAGIC: [u8; 4] = *b"FGD1";

/// Writes a dataset file.
pub fn save_dataset(dataset: &Dataset, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&MAGIC)?;
    w.write_all(&(dataset.len() as u32).to_le_bytes())?;
    for sample in &dataset.samples {
        w.write_all(&[sample.label])?;
        for v in &sample.thermal {
            w.write_all(&v.to_le_bytes())?;
        }
        for v in &sample.depth {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a dataset file, reporting bad magic, truncation and invalid labels
/// as distinct errors.
pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let mut r = BufReader::new(File::open(path)?);

    let mut magic = [0u8; 4];
    read_exact(&mut r, &mut magic, "magic")?;
    if magic != MAGIC {
        return Err(Error::BadMagic { expected: MAGIC, found: magic });
    }

    let mut count_bytes = [0u8; 4];
    read_exact(&mut r, &mut count_bytes, "sample count")?;
    let count = u32::from_le_bytes(count_bytes) as usize;

    let mut samples = Vec::with_capacity(count);
    let mut payload = [0u8; 1 + 2 * 4 * CELLS];
    for _ in 0..count {
        read_exact(&mut r, &mut payload, "sample payload")?;
        let label = payload[0];
        if label as usize >= GestureClass::COUNT {
            return Err(Error::InvalidLabel { value: label as usize, num_classes: GestureClass::COUNT });
        }
        let mut thermal = [0f32; CELLS];
        let mut depth = [0f32; CELLS];
        for i in 0..CELLS {
            let o = 1 + i * 4;
            thermal[i] = f32::from_le_bytes(payload[o..o + 4].try_into().unwrap());
            let o = 1 + (CELLS + i) * 4;
            depth[i] = f32::from_le_bytes(payload[o..o + 4].try_into().unwrap());
        }
        samples.push(FramePair { thermal, depth, label });
    }
    Ok(Dataset { samples })
}

fn read_exact(r: &mut impl Read, buf: &mut [u8], what: &'static str) -> Result<()> {
    r.read_exact(buf).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            Error::Truncated(what)
        } else {
            Error::Io(e)
        }
    })
}

//! Binary time-tag files.
//!
//! Layout (little-endian): magic `DCTAG1`, version `u16`, channel `u8`,
//! quantization in ps `u32`, duration in tag units `u64`, seed `u64`,
//! count `u64`, then `count` tags as `u64`. A plain-text sidecar next to
//! the file holds the hash of the configuration that produced it.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::trajectory::{Channel, ClickStream};

pub const MAGIC: &[u8; 6] = b"DCTAG1";
pub const VERSION: u16 = 1;
const HEADER_LEN: usize = 6 + 2 + 1 + 4 + 8 + 8 + 8;

/// Sidecar path: `<file>.hash`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".hash");
    PathBuf::from(s)
}

pub fn encode(stream: &ClickStream) -> Vec<u8> {
    let mut buf = Vec::with_capacity(HEADER_LEN + 8 * stream.tags.len());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.push(stream.channel as u8);
    buf.extend_from_slice(&stream.quantization_ps.to_le_bytes());
    buf.extend_from_slice(&stream.duration.to_le_bytes());
    buf.extend_from_slice(&stream.seed.to_le_bytes());
    buf.extend_from_slice(&(stream.tags.len() as u64).to_le_bytes());
    for t in &stream.tags {
        buf.extend_from_slice(&t.to_le_bytes());
    }
    buf
}

fn take<const N: usize>(bytes: &[u8], at: &mut usize) -> Result<[u8; N]> {
    let slice = bytes
        .get(*at..*at + N)
        .ok_or_else(|| Error::Format(format!("truncated tag file at byte {}", *at)))?;
    *at += N;
    Ok(slice.try_into().expect("length checked"))
}

pub fn decode(bytes: &[u8]) -> Result<ClickStream> {
    let mut at = 0;
    let magic: [u8; 6] = take(bytes, &mut at)?;
    if &magic != MAGIC {
        return Err(Error::Format("bad magic: not a DCTAG1 file".into()));
    }
    let version = u16::from_le_bytes(take(bytes, &mut at)?);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported tag file version {version}")));
    }
    let [code] = take::<1>(bytes, &mut at)?;
    let channel = Channel::from_code(code).ok_or_else(|| Error::Format(format!("unknown channel code {code}")))?;
    let quantization_ps = u32::from_le_bytes(take(bytes, &mut at)?);
    if quantization_ps == 0 {
        return Err(Error::Format("zero quantization".into()));
    }
    let duration = u64::from_le_bytes(take(bytes, &mut at)?);
    let seed = u64::from_le_bytes(take(bytes, &mut at)?);
    let count = u64::from_le_bytes(take(bytes, &mut at)?);
    let body = bytes.len() - at;
    if (body as u64) != count.saturating_mul(8) {
        return Err(Error::Format(format!(
            "header announces {count} tags but body holds {body} bytes"
        )));
    }
    let tags: Vec<u64> = bytes[at..]
        .chunks_exact(8)
        .map(|c| u64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    if let Some(i) = tags.windows(2).position(|w| w[1] < w[0]) {
        return Err(Error::Format(format!("tags decrease at index {}", i + 1)));
    }
    Ok(ClickStream {
        channel,
        quantization_ps,
        duration,
        seed,
        tags,
    })
}

/// Write a tag file and its configuration-hash sidecar.
pub fn write(path: &Path, stream: &ClickStream, config_hash: &str) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&encode(stream))?;
    w.flush()?;
    std::fs::write(sidecar_path(path), format!("{config_hash}\n"))?;
    Ok(())
}

pub fn read(path: &Path) -> Result<ClickStream> {
    let mut bytes = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
    decode(&bytes)
}

/// Configuration hash recorded next to a tag file, if present.
pub fn read_config_hash(path: &Path) -> Result<Option<String>> {
    match std::fs::read_to_string(sidecar_path(path)) {
        Ok(s) => Ok(Some(s.trim().to_owned())),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(e.into()),
    }
}

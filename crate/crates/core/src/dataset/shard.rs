//! Binary shard format for labeled frames.
//!
//! ```text
//! header:  "IQS1" | version u16 | frame_count u32 | frame_length u32
//!          | num_classes u16 | num_classes x (name_len u16 | UTF-8 name)
//! record:  label u8 | snr_db i8 | frame_length x f32 I | frame_length x f32 Q
//! ```
//!
//! All integers and floats are little-endian.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{invalid, Error, Result};
use crate::signal::{IqFrame, ModulationMode};

pub const SHARD_MAGIC: &[u8; 4] = b"IQS1";
pub const SHARD_VERSION: u16 = 1;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ShardHeader {
    pub version: u16,
    pub frame_count: u32,
    pub frame_length: u32,
    pub label_names: Vec<String>,
}

impl ShardHeader {
    pub fn num_classes(&self) -> usize {
        self.label_names.len()
    }

    pub fn encoded_len(&self) -> usize {
        4 + 2 + 4 + 4 + 2 + self.label_names.iter().map(|n| 2 + n.len()).sum::<usize>()
    }

    pub fn record_len(&self) -> usize {
        2 + 8 * self.frame_length as usize
    }

    fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(SHARD_MAGIC)?;
        w.write_all(&self.version.to_le_bytes())?;
        w.write_all(&self.frame_count.to_le_bytes())?;
        w.write_all(&self.frame_length.to_le_bytes())?;
        w.write_all(&(self.label_names.len() as u16).to_le_bytes())?;
        for name in &self.label_names {
            w.write_all(&(name.len() as u16).to_le_bytes())?;
            w.write_all(name.as_bytes())?;
        }
        Ok(())
    }

    fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 4];
        read_exact(r, &mut magic)?;
        if &magic != SHARD_MAGIC {
            return Err(Error::Format(format!("bad shard magic {magic:?}")));
        }
        let version = u16::from_le_bytes(read_array(r)?);
        if version != SHARD_VERSION {
            return Err(Error::Format(format!("unsupported shard version {version}")));
        }
        let frame_count = u32::from_le_bytes(read_array(r)?);
        let frame_length = u32::from_le_bytes(read_array(r)?);
        let num_classes = u16::from_le_bytes(read_array(r)?);
        let mut label_names = Vec::with_capacity(num_classes as usize);
        for _ in 0..num_classes {
            let len = u16::from_le_bytes(read_array(r)?) as usize;
            let mut buf = vec![0u8; len];
            read_exact(r, &mut buf)?;
            label_names.push(
                String::from_utf8(buf).map_err(|_| Error::Format("label name is not UTF-8".into()))?,
            );
        }
        Ok(Self {
            version,
            frame_count,
            frame_length,
            label_names,
        })
    }
}

fn read_exact(r: &mut impl Read, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Format("shard truncated".into()),
        _ => Error::Io(e),
    })
}

fn read_array<const N: usize>(r: &mut impl Read) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    read_exact(r, &mut buf)?;
    Ok(buf)
}

/// Writes `frames` with labels indexed into `classes`; returns the count.
pub fn write_shard(frames: &[IqFrame], classes: &[ModulationMode], path: &Path) -> Result<usize> {
    let first = frames
        .first()
        .ok_or_else(|| invalid!("refusing to write an empty shard"))?;
    let frame_length = first.len();
    if classes.is_empty() || classes.len() > u8::MAX as usize + 1 {
        return Err(invalid!("shards hold between 1 and 256 classes"));
    }
    for f in frames {
        if f.i_samples.len() != frame_length || f.q_samples.len() != frame_length {
            return Err(invalid!(
                "heterogeneous frame lengths: {} / {} vs {frame_length}",
                f.i_samples.len(),
                f.q_samples.len()
            ));
        }
        if !classes.contains(&f.label) {
            return Err(invalid!("frame label {} missing from class table", f.label));
        }
        if i8::try_from(f.snr_db).is_err() {
            return Err(invalid!("SNR {} dB does not fit the i8 field", f.snr_db));
        }
    }
    let header = ShardHeader {
        version: SHARD_VERSION,
        frame_count: u32::try_from(frames.len()).map_err(|_| invalid!("too many frames"))?,
        frame_length: frame_length as u32,
        label_names: classes.iter().map(|m| m.name().to_string()).collect(),
    };
    let mut w = BufWriter::new(File::create(path)?);
    header.write_to(&mut w)?;
    for f in frames {
        let label = classes.iter().position(|&c| c == f.label).expect("validated") as u8;
        w.write_all(&[label, f.snr_db as i8 as u8])?;
        for v in f.i_samples.iter().chain(&f.q_samples) {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(frames.len())
}

/// A fully decoded shard.
#[derive(Clone, Debug, PartialEq)]
pub struct Shard {
    pub header: ShardHeader,
    pub classes: Vec<ModulationMode>,
    pub frames: Vec<IqFrame>,
}

pub fn read_shard_header(path: &Path) -> Result<ShardHeader> {
    ShardHeader::read_from(&mut BufReader::new(File::open(path)?))
}

pub fn read_shard(path: &Path) -> Result<Shard> {
    let mut r = BufReader::new(File::open(path)?);
    let header = ShardHeader::read_from(&mut r)?;
    let classes = header
        .label_names
        .iter()
        .map(|n| n.parse::<ModulationMode>())
        .collect::<Result<Vec<_>>>()?;
    let n = header.frame_length as usize;
    let mut record = vec![0u8; header.record_len()];
    let mut frames = Vec::with_capacity(header.frame_count as usize);
    for _ in 0..header.frame_count {
        read_exact(&mut r, &mut record)?;
        let label = record[0] as usize;
        let label = *classes
            .get(label)
            .ok_or_else(|| Error::Format(format!("label index {label} out of range")))?;
        let floats: Vec<f32> = record[2..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        frames.push(IqFrame {
            i_samples: floats[..n].to_vec(),
            q_samples: floats[n..].to_vec(),
            label,
            snr_db: record[1] as i8 as i32,
        });
    }
    let mut extra = [0u8; 1];
    if r.read(&mut extra)? != 0 {
        return Err(Error::Format(
            "frame_count does not match the records that follow".into(),
        ));
    }
    Ok(Shard {
        header,
        classes,
        frames,
    })
}

//! Binary checkpoints of the policy-value network and discriminator.
//!
//! Layout, little-endian throughout:
//!
//! ```text
//! b"RCKP"  u32 format_version  u32 section_count
//! per section:
//!   u8 name_len  name  u32 shape_len  u32 shape[shape_len]  u64 n  f64 data[n]
//! ```
//!
//! Sections: `theta`, `theta_v`, `theta_target` (shape = network layer
//! widths), optional `omega` (shape = discriminator layer sizes) and
//! optional `bounds` (six integers: encoding box min then max).

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::gail::Discriminator;
use crate::lattice::Bounds;
use crate::planner::PolicyValueNet;
use crate::FORMAT_VERSION;

const MAGIC: &[u8; 4] = b"RCKP";
/// Refuse absurd section lengths instead of allocating them.
const MAX_LEN: u64 = 1 << 32;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint file")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("missing section {0}")]
    MissingSection(&'static str),
    #[error("section {section}: {reason}")]
    Malformed { section: String, reason: &'static str },
}

#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub net: PolicyValueNet,
    pub discriminator: Option<Discriminator>,
    /// Encoding box the network was trained on.
    pub bounds: Option<Bounds>,
}

struct Section {
    shape: Vec<u32>,
    data: Vec<f64>,
}

fn write_section<W: Write>(w: &mut W, name: &str, shape: &[u32], data: &[f64]) -> std::io::Result<()> {
    w.write_u8(name.len() as u8)?;
    w.write_all(name.as_bytes())?;
    w.write_u32::<LittleEndian>(shape.len() as u32)?;
    for &s in shape {
        w.write_u32::<LittleEndian>(s)?;
    }
    w.write_u64::<LittleEndian>(data.len() as u64)?;
    for &x in data {
        w.write_f64::<LittleEndian>(x)?;
    }
    Ok(())
}

pub fn write_to<W: Write>(w: &mut W, ck: &Checkpoint) -> Result<(), CheckpointError> {
    let shape = ck.net.shape();
    let count = 3 + u32::from(ck.discriminator.is_some()) + u32::from(ck.bounds.is_some());
    w.write_all(MAGIC)?;
    w.write_u32::<LittleEndian>(FORMAT_VERSION)?;
    w.write_u32::<LittleEndian>(count)?;
    write_section(w, "theta", &shape, &ck.net.theta)?;
    write_section(w, "theta_v", &shape, &ck.net.theta_v)?;
    write_section(w, "theta_target", &shape, &ck.net.theta_target)?;
    if let Some(d) = &ck.discriminator {
        write_section(w, "omega", &d.layer_sizes(), &d.omega)?;
    }
    if let Some(b) = &ck.bounds {
        let v: Vec<f64> = b.min.iter().chain(&b.max).map(|&c| f64::from(c)).collect();
        write_section(w, "bounds", &[], &v)?;
    }
    Ok(())
}

fn read_len<R: Read>(r: &mut R, name: &str) -> Result<usize, CheckpointError> {
    let n = r.read_u64::<LittleEndian>()?;
    if n > MAX_LEN {
        return Err(malformed(name, "length out of range"));
    }
    Ok(n as usize)
}

fn malformed(section: &str, reason: &'static str) -> CheckpointError {
    CheckpointError::Malformed {
        section: section.to_string(),
        reason,
    }
}

pub fn read_from<R: Read>(r: &mut R) -> Result<Checkpoint, CheckpointError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = r.read_u32::<LittleEndian>()?;
    if version != FORMAT_VERSION {
        return Err(CheckpointError::Version(version));
    }
    let count = r.read_u32::<LittleEndian>()?;
    let mut sections = BTreeMap::new();
    for _ in 0..count {
        let mut name = vec![0u8; usize::from(r.read_u8()?)];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name).map_err(|_| malformed("?", "name is not UTF-8"))?;
        let shape_len = r.read_u32::<LittleEndian>()?;
        if u64::from(shape_len) > MAX_LEN {
            return Err(malformed(&name, "shape out of range"));
        }
        let shape = (0..shape_len)
            .map(|_| r.read_u32::<LittleEndian>())
            .collect::<std::io::Result<_>>()?;
        let n = read_len(r, &name)?;
        let mut data = vec![0.0; n];
        r.read_f64_into::<LittleEndian>(&mut data)?;
        sections.insert(name, Section { shape, data });
    }
    let mut take = |name: &'static str| sections.remove(name).ok_or(CheckpointError::MissingSection(name));
    let theta = take("theta")?;
    let theta_v = take("theta_v")?;
    let theta_target = take("theta_target")?;
    let mut net = PolicyValueNet::from_shape(&theta.shape).ok_or(malformed("theta", "bad network shape"))?;
    if theta_v.shape != theta.shape || theta_target.shape != theta.shape {
        return Err(malformed("theta_v", "shape differs from theta"));
    }
    for (name, dst, src) in [
        ("theta", &mut net.theta, theta.data),
        ("theta_v", &mut net.theta_v, theta_v.data),
        ("theta_target", &mut net.theta_target, theta_target.data),
    ] {
        if dst.len() != src.len() {
            return Err(malformed(name, "parameter count does not match shape"));
        }
        *dst = src;
    }
    let discriminator = match sections.remove("omega") {
        Some(s) => {
            Some(Discriminator::from_layer_sizes(&s.shape, s.data).ok_or(malformed("omega", "bad layer sizes"))?)
        }
        None => None,
    };
    let bounds = match sections.remove("bounds") {
        Some(s) => {
            let exact = s.data.len() == 6 && s.data.iter().all(|x| x.fract() == 0.0 && x.abs() < 1e9);
            if !exact {
                return Err(malformed("bounds", "expected six integers"));
            }
            let c = |i: usize| s.data[i] as i32;
            let b = Bounds {
                min: [c(0), c(1), c(2)],
                max: [c(3), c(4), c(5)],
            };
            if (0..3).any(|k| b.min[k] > b.max[k])
                || b.dims().iter().map(|&d| d as u32).ne(theta.shape[1..4].iter().copied())
            {
                return Err(malformed("bounds", "box does not match network input"));
            }
            Some(b)
        }
        None => None,
    };
    Ok(Checkpoint {
        net,
        discriminator,
        bounds,
    })
}

pub fn save(path: impl AsRef<Path>, ck: &Checkpoint) -> Result<(), CheckpointError> {
    let mut w = BufWriter::new(File::create(path)?);
    write_to(&mut w, ck)?;
    w.flush()?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<Checkpoint, CheckpointError> {
    read_from(&mut BufReader::new(File::open(path)?))
}

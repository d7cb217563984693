//! Binary checkpoint format.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! magic        6 bytes  "MLSTM1"
//! version      u32
//! hidden       u32
//! classes      u32
//! aspect_count u32
//! aspect_dims  aspect_count x u32
//! word_seed    u64
//! has_state    u8 (0 or 1)
//! params       every tensor in ModelParams::buffers order, f64 row-major
//! state        if has_state: rho f64, eps f64, then E[g^2] and E[dx^2]
//!              tensors in the same buffer order
//! ```
//!
//! The reader refuses unknown magic and versions, and treats both truncation
//! and trailing bytes as corruption, so a round trip is bit-exact or fails.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{ModelParams, FORMAT_VERSION};

use super::AdadeltaState;

const MAGIC: &[u8; 6] = b"MLSTM1";
// Guard against absurd allocations from corrupt headers.
const MAX_DIM: u32 = 1_000_000;

fn write_u32(w: &mut impl Write, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn write_u64(w: &mut impl Write, v: u64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn write_f64(w: &mut impl Write, v: f64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn read_exact(r: &mut impl Read, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            Error::Checkpoint("file is truncated".into())
        } else {
            Error::Io(e)
        }
    })
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut buf = [0u8; 4];
    read_exact(r, &mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut buf = [0u8; 8];
    read_exact(r, &mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

fn read_f64(r: &mut impl Read) -> Result<f64> {
    let mut buf = [0u8; 8];
    read_exact(r, &mut buf)?;
    Ok(f64::from_le_bytes(buf))
}

fn write_buffers(w: &mut impl Write, params: &ModelParams) -> Result<()> {
    for buf in params.buffers() {
        for &v in buf {
            write_f64(w, v)?;
        }
    }
    Ok(())
}

fn read_buffers(r: &mut impl Read, params: &mut ModelParams) -> Result<()> {
    for buf in params.buffers_mut() {
        for v in buf {
            *v = read_f64(r)?;
        }
    }
    Ok(())
}

/// Write a checkpoint, optionally including the optimizer state so training
/// can resume.
pub fn save_checkpoint(
    params: &ModelParams,
    state: Option<&AdadeltaState>,
    path: impl AsRef<Path>,
) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    write_u32(&mut w, params.version)?;
    write_u32(&mut w, params.hidden as u32)?;
    write_u32(&mut w, params.classes as u32)?;
    write_u32(&mut w, params.aspect_dims.len() as u32)?;
    for &d in &params.aspect_dims {
        write_u32(&mut w, d as u32)?;
    }
    write_u64(&mut w, params.word_seed)?;
    w.write_all(&[state.is_some() as u8])?;
    write_buffers(&mut w, params)?;
    if let Some(state) = state {
        write_f64(&mut w, state.rho)?;
        write_f64(&mut w, state.eps)?;
        write_buffers(&mut w, &state.eg2)?;
        write_buffers(&mut w, &state.edx2)?;
    }
    w.flush()?;
    Ok(())
}

/// Read a checkpoint written by [`save_checkpoint`].
pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(ModelParams, Option<AdadeltaState>)> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 6];
    read_exact(&mut r, &mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("bad magic; not a model checkpoint".into()));
    }
    let version = read_u32(&mut r)?;
    if version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported format version {version}, this build reads {FORMAT_VERSION}"
        )));
    }
    let hidden = read_u32(&mut r)?;
    let classes = read_u32(&mut r)?;
    let aspect_count = read_u32(&mut r)?;
    if !(1..=MAX_DIM).contains(&hidden)
        || !(2..=MAX_DIM).contains(&classes)
        || !(1..=MAX_DIM).contains(&aspect_count)
    {
        return Err(Error::Checkpoint("implausible header dimensions".into()));
    }
    let mut aspect_dims = Vec::with_capacity(aspect_count as usize);
    for _ in 0..aspect_count {
        let d = read_u32(&mut r)?;
        if d == 0 || d > MAX_DIM {
            return Err(Error::Checkpoint("implausible aspect dimension".into()));
        }
        aspect_dims.push(d as usize);
    }
    let word_seed = read_u64(&mut r)?;
    let mut flag = [0u8; 1];
    read_exact(&mut r, &mut flag)?;
    let has_state = match flag[0] {
        0 => false,
        1 => true,
        other => {
            return Err(Error::Checkpoint(format!("bad optimizer-state flag {other}")));
        }
    };

    let mut params = ModelParams::zeros(&aspect_dims, hidden as usize, classes as usize)
        .map_err(|e| Error::Checkpoint(e.to_string()))?;
    params.word_seed = word_seed;
    read_buffers(&mut r, &mut params)?;
    if !params.all_finite() {
        return Err(Error::Checkpoint("non-finite parameter values".into()));
    }

    let state = if has_state {
        let rho = read_f64(&mut r)?;
        let eps = read_f64(&mut r)?;
        let mut state = AdadeltaState::new(&params, rho, eps);
        read_buffers(&mut r, &mut state.eg2)?;
        read_buffers(&mut r, &mut state.edx2)?;
        let non_negative = |p: &ModelParams| {
            p.buffers().iter().all(|b| b.iter().all(|&v| v >= 0.0 && v.is_finite()))
        };
        if !non_negative(&state.eg2) || !non_negative(&state.edx2) {
            return Err(Error::Checkpoint("invalid optimizer accumulators".into()));
        }
        Some(state)
    } else {
        None
    };

    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(Error::Checkpoint("trailing bytes after checkpoint payload".into()));
    }
    Ok((params, state))
}

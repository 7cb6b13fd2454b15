//! OSEG weight checkpoints.
//!
//! Binary layout: magic `OSEG`, format version u32, parameter count u32,
//! then per parameter: name length u16, name bytes, rank u8, one u32 per
//! dimension, raw little-endian f32 data. Round trips are bit-exact.
//!
//! A structured-text descriptor (the `ModelSpec` plus the running-statistics
//! flag) sits next to the weights at `<path>.arch`, making checkpoints
//! self-describing.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{NnError, Result};
use crate::graph::Graph;
use crate::models::{build_graph, ModelSpec};
use crate::tensor::Tensor;

const MAGIC: &[u8; 4] = b"OSEG";
const VERSION: u32 = 1;

pub fn arch_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_os_string();
    s.push(".arch");
    PathBuf::from(s)
}

#[derive(Serialize, Deserialize)]
struct ArchDescriptor {
    model: ModelSpec,
    stats_ready: bool,
}

/// Write every named parameter (running statistics included) plus the
/// architecture descriptor.
pub fn save_model(spec: &ModelSpec, graph: &Graph, path: &Path) -> Result<()> {
    save_weights(graph, path)?;
    let desc = ArchDescriptor { model: spec.clone(), stats_ready: graph.stats_ready };
    let text = toml::to_string_pretty(&desc)
        .map_err(|e| NnError::Checkpoint(format!("descriptor encode: {e}")))?;
    std::fs::write(arch_path(path), text)?;
    Ok(())
}

/// Rebuild the described graph and load its weights bit-exactly.
pub fn load_model(path: &Path) -> Result<(ModelSpec, Graph)> {
    let text = std::fs::read_to_string(arch_path(path))
        .map_err(|e| NnError::Checkpoint(format!("missing descriptor {:?}: {e}", arch_path(path))))?;
    let desc: ArchDescriptor =
        toml::from_str(&text).map_err(|e| NnError::Checkpoint(format!("descriptor parse: {e}")))?;
    let mut graph = build_graph(&desc.model)?;
    load_weights(&mut graph, path)?;
    graph.stats_ready = desc.stats_ready;
    Ok((desc.model, graph))
}

pub fn save_weights(graph: &Graph, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(graph.params().len() as u32).to_le_bytes())?;
    for p in graph.params() {
        let name = p.name.as_bytes();
        if name.len() > u16::MAX as usize {
            return Err(NnError::Checkpoint(format!("parameter name too long: {}", p.name)));
        }
        w.write_all(&(name.len() as u16).to_le_bytes())?;
        w.write_all(name)?;
        let shape = p.value.shape();
        if shape.len() > u8::MAX as usize {
            return Err(NnError::Checkpoint(format!("rank too large for `{}`", p.name)));
        }
        w.write_all(&[shape.len() as u8])?;
        for &d in shape {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        for &v in p.value.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Load weights into an already-built graph; every stored parameter must
/// exist with a matching shape.
pub fn load_weights(graph: &mut Graph, path: &Path) -> Result<()> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    read_exact(&mut r, &mut magic, "magic")?;
    if &magic != MAGIC {
        return Err(NnError::Checkpoint(format!("bad magic {:?}", magic)));
    }
    let version = read_u32(&mut r, "version")?;
    if version != VERSION {
        return Err(NnError::Checkpoint(format!("unsupported version {version}")));
    }
    let count = read_u32(&mut r, "parameter count")? as usize;
    for _ in 0..count {
        let name_len = read_u16(&mut r, "name length")? as usize;
        let mut name = vec![0u8; name_len];
        read_exact(&mut r, &mut name, "name")?;
        let name = String::from_utf8(name)
            .map_err(|_| NnError::Checkpoint("parameter name is not UTF-8".into()))?;
        let rank = {
            let mut b = [0u8; 1];
            read_exact(&mut r, &mut b, "rank")?;
            b[0] as usize
        };
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(read_u32(&mut r, "dimension")? as usize);
        }
        let n: usize = shape.iter().product();
        let mut data = vec![0.0f32; n];
        let mut buf = vec![0u8; n * 4];
        read_exact(&mut r, &mut buf, "payload")?;
        for (v, c) in data.iter_mut().zip(buf.chunks_exact(4)) {
            *v = f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
        }
        let pid = graph.param_id(&name)?;
        let current = &graph.params()[pid].value;
        if current.shape() != shape.as_slice() {
            return Err(NnError::Checkpoint(format!(
                "parameter `{name}`: stored shape {:?} vs model {:?}",
                shape,
                current.shape()
            )));
        }
        let kind = graph.params()[pid].kind;
        let mut t = Tensor::from_vec(&shape, data);
        t.requires_grad = kind.trainable();
        graph.params_mut()[pid].value = t;
    }
    Ok(())
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf)
        .map_err(|_| NnError::Checkpoint(format!("truncated payload while reading {what}")))
}

fn read_u32<R: Read>(r: &mut R, what: &str) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b, what)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u16<R: Read>(r: &mut R, what: &str) -> Result<u16> {
    let mut b = [0u8; 2];
    read_exact(r, &mut b, what)?;
    Ok(u16::from_le_bytes(b))
}

//! Binary little-endian checkpoint:
//!
//! ```text
//! "MIXCKPT 1\n"
//! layers:u32 heads:u32 hidden:u32 edge_features:u8 negative_slope:f64
//! node_dim:u32 edge_dim:u32 seed:u64
//! mesh_hash:u64 virtual_nodes:u8 virtual_edges:u8
//! block_count:u32, per block: name_len:u32 name rows:u64 cols:u64 rows*cols f64
//! ```

use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};

use super::{ModelConfig, ModelParams};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::graph::GraphOptions;

pub const CHECKPOINT_MAGIC: &[u8; 10] = b"MIXCKPT 1\n";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub mesh_hash: u64,
    pub graph_options: GraphOptions,
}

pub fn write_checkpoint<W: Write>(ck: &Checkpoint, w: &mut W) -> std::io::Result<()> {
    let c = &ck.params.config;
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_u32::<LE>(c.layers as u32)?;
    w.write_u32::<LE>(c.heads as u32)?;
    w.write_u32::<LE>(c.hidden as u32)?;
    w.write_u8(c.use_edge_features as u8)?;
    w.write_f64::<LE>(c.negative_slope)?;
    w.write_u32::<LE>(c.node_dim as u32)?;
    w.write_u32::<LE>(c.edge_dim as u32)?;
    w.write_f64::<LE>(c.length_scale)?;
    w.write_u64::<LE>(c.seed)?;
    w.write_u64::<LE>(ck.mesh_hash)?;
    w.write_u8(ck.graph_options.virtual_nodes as u8)?;
    w.write_u8(ck.graph_options.virtual_edges as u8)?;
    w.write_u32::<LE>(ck.params.tensors.len() as u32)?;
    for (name, t) in ck.params.names.iter().zip(&ck.params.tensors) {
        w.write_u32::<LE>(name.len() as u32)?;
        w.write_all(name.as_bytes())?;
        w.write_u64::<LE>(t.rows() as u64)?;
        w.write_u64::<LE>(t.cols() as u64)?;
        for v in t.data() {
            w.write_f64::<LE>(*v)?;
        }
    }
    Ok(())
}

pub fn save_checkpoint(ck: &Checkpoint, path: &Path) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    write_checkpoint(ck, &mut w)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint<R: Read>(mut r: R, path: &Path) -> Result<Checkpoint> {
    let fail = |message: String| Error::Format {
        path: path.to_path_buf(),
        offset: 0,
        message,
    };
    let io = |e: std::io::Error| fail(format!("truncated checkpoint: {e}"));
    let mut magic = [0u8; 10];
    r.read_exact(&mut magic).map_err(io)?;
    if &magic != CHECKPOINT_MAGIC {
        if magic.starts_with(b"MIXCKPT ") {
            return Err(fail("unsupported checkpoint version (expected 1)".into()));
        }
        return Err(fail("not a checkpoint file".into()));
    }
    let config = ModelConfig {
        layers: r.read_u32::<LE>().map_err(io)? as usize,
        heads: r.read_u32::<LE>().map_err(io)? as usize,
        hidden: r.read_u32::<LE>().map_err(io)? as usize,
        use_edge_features: r.read_u8().map_err(io)? != 0,
        negative_slope: r.read_f64::<LE>().map_err(io)?,
        node_dim: r.read_u32::<LE>().map_err(io)? as usize,
        edge_dim: r.read_u32::<LE>().map_err(io)? as usize,
        length_scale: r.read_f64::<LE>().map_err(io)?,
        seed: r.read_u64::<LE>().map_err(io)?,
    };
    config.validate()?;
    let mesh_hash = r.read_u64::<LE>().map_err(io)?;
    let graph_options = GraphOptions {
        virtual_nodes: r.read_u8().map_err(io)? != 0,
        virtual_edges: r.read_u8().map_err(io)? != 0,
    };
    let count = r.read_u32::<LE>().map_err(io)? as usize;
    if count != config.layout().len() {
        return Err(fail(format!("block count {count} does not match the model configuration")));
    }
    let mut names = Vec::with_capacity(count);
    let mut tensors = Vec::with_capacity(count);
    for _ in 0..count {
        let len = r.read_u32::<LE>().map_err(io)? as usize;
        if len > 256 {
            return Err(fail(format!("parameter name length {len} is implausible")));
        }
        let mut name = vec![0u8; len];
        r.read_exact(&mut name).map_err(io)?;
        let name = String::from_utf8(name).map_err(|_| fail("parameter name is not UTF-8".into()))?;
        let rows = r.read_u64::<LE>().map_err(io)? as usize;
        let cols = r.read_u64::<LE>().map_err(io)? as usize;
        if rows.saturating_mul(cols) > 1 << 28 {
            return Err(fail(format!("block {name} is implausibly large")));
        }
        let data = (0..rows * cols)
            .map(|_| r.read_f64::<LE>().map_err(io))
            .collect::<Result<Vec<_>>>()?;
        names.push(name);
        tensors.push(Tensor::from_vec(rows, cols, data)?);
    }
    let params = ModelParams {
        config,
        names,
        tensors,
    };
    params.check_shapes()?;
    Ok(Checkpoint {
        params,
        mesh_hash,
        graph_options,
    })
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(BufReader::new(f), path)
}

//! Optional binary graph cache: per-sample feature and target blocks plus the
//! directed edge list. Regenerable from mesh + dataset and never read back by
//! the pipeline itself.
//!
//! ```text
//! "MIXGRAPH 1\n" mesh_hash:u64 flags:u8 sample_count:u64
//! per sample: nodes:u64 width:u64 edges:u64
//!             nodes*width f64, nodes*3 f64, edges*(src:u64 dst:u64)
//! ```

use std::io::{Read, Write};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};

use super::{GraphOptions, GraphSample};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};

pub const GRAPH_CACHE_MAGIC: &[u8; 11] = b"MIXGRAPH 1\n";

#[derive(Debug, Clone, PartialEq)]
pub struct CachedGraph {
    pub node_features: Tensor,
    pub targets: Tensor,
    pub edges: Vec<[usize; 2]>,
}

pub fn write_graph_cache<W: Write>(
    w: &mut W,
    mesh_hash: u64,
    options: GraphOptions,
    graphs: &[GraphSample],
) -> std::io::Result<()> {
    w.write_all(GRAPH_CACHE_MAGIC)?;
    w.write_u64::<LE>(mesh_hash)?;
    w.write_u8(options.virtual_nodes as u8 | (options.virtual_edges as u8) << 1)?;
    w.write_u64::<LE>(graphs.len() as u64)?;
    for g in graphs {
        let t = &g.topology;
        w.write_u64::<LE>(g.node_count() as u64)?;
        w.write_u64::<LE>(g.node_features.cols() as u64)?;
        w.write_u64::<LE>(t.edge_count() as u64)?;
        for v in g.node_features.data().iter().chain(g.targets.data()) {
            w.write_f64::<LE>(*v)?;
        }
        for (&s, &d) in t.src.iter().zip(t.dst.iter()) {
            w.write_u64::<LE>(s as u64)?;
            w.write_u64::<LE>(d as u64)?;
        }
    }
    Ok(())
}

pub fn read_graph_cache<R: Read>(r: &mut R, path: &Path) -> Result<(u64, GraphOptions, Vec<CachedGraph>)> {
    let fail = |message: String| Error::Format {
        path: path.to_path_buf(),
        offset: 0,
        message,
    };
    let io = |e: std::io::Error| fail(format!("truncated graph cache: {e}"));
    let mut magic = [0u8; 11];
    r.read_exact(&mut magic).map_err(io)?;
    if &magic != GRAPH_CACHE_MAGIC {
        return Err(fail("not a graph cache file".into()));
    }
    let hash = r.read_u64::<LE>().map_err(io)?;
    let flags = r.read_u8().map_err(io)?;
    let options = GraphOptions {
        virtual_nodes: flags & 1 != 0,
        virtual_edges: flags & 2 != 0,
    };
    let count = r.read_u64::<LE>().map_err(io)?;
    let mut graphs = Vec::new();
    for _ in 0..count {
        let n = r.read_u64::<LE>().map_err(io)? as usize;
        let w = r.read_u64::<LE>().map_err(io)? as usize;
        let e = r.read_u64::<LE>().map_err(io)? as usize;
        let mut read_block = |len: usize| -> Result<Vec<f64>> {
            (0..len).map(|_| r.read_f64::<LE>().map_err(io)).collect()
        };
        let node_features = Tensor::from_vec(n, w, read_block(n * w)?)?;
        let targets = Tensor::from_vec(n, 3, read_block(n * 3)?)?;
        let mut edges = Vec::with_capacity(e);
        for _ in 0..e {
            let s = r.read_u64::<LE>().map_err(io)? as usize;
            let d = r.read_u64::<LE>().map_err(io)? as usize;
            if s >= n || d >= n {
                return Err(fail(format!("edge ({s}, {d}) out of range for {n} nodes")));
            }
            edges.push([s, d]);
        }
        graphs.push(CachedGraph {
            node_features,
            targets,
            edges,
        });
    }
    Ok((hash, options, graphs))
}

//! Binary little-endian dataset file:
//!
//! ```text
//! "MIXDATA 1\n"  mesh_hash:u64  sample_count:u64  node_count:u64
//! per sample:
//!   grid_i:i32 grid_j:i32 angle_code:u8 depth:u32
//!   contact_count:u64  contact_count x index:u64  contact_count x 3 x f64
//!   node_count x 3 x f64 ground truth
//! ```

use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};

use super::{GridPos, ProbeAngle, ProbePose, SimulationSample};
use crate::error::{Error, Result};
use crate::mesh::Vec3;

pub const DATASET_MAGIC: &[u8; 10] = b"MIXDATA 1\n";

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub mesh_hash: u64,
    pub node_count: usize,
    pub samples: Vec<SimulationSample>,
}

impl Dataset {
    pub fn check_mesh(&self, mesh_hash: u64) -> Result<()> {
        if self.mesh_hash != mesh_hash {
            return Err(Error::HashMismatch {
                what: "dataset vs mesh",
                expected: mesh_hash,
                found: self.mesh_hash,
            });
        }
        Ok(())
    }
}

pub fn write_dataset<W: Write>(ds: &Dataset, w: &mut W) -> std::io::Result<()> {
    w.write_all(DATASET_MAGIC)?;
    w.write_u64::<LE>(ds.mesh_hash)?;
    w.write_u64::<LE>(ds.samples.len() as u64)?;
    w.write_u64::<LE>(ds.node_count as u64)?;
    for s in &ds.samples {
        w.write_i32::<LE>(s.pose.position.i)?;
        w.write_i32::<LE>(s.pose.position.j)?;
        w.write_u8(s.pose.angle.code())?;
        w.write_u32::<LE>(s.pose.depth)?;
        w.write_u64::<LE>(s.contact_nodes.len() as u64)?;
        for &c in &s.contact_nodes {
            w.write_u64::<LE>(c as u64)?;
        }
        for v in s.prescribed.iter().chain(&s.ground_truth) {
            for c in v.iter() {
                w.write_f64::<LE>(*c)?;
            }
        }
    }
    Ok(())
}

pub fn save_dataset(ds: &Dataset, path: &Path) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    write_dataset(ds, &mut w)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

struct Counting<R> {
    inner: R,
    offset: u64,
}

impl<R: Read> Read for Counting<R> {
    fn read(&mut self, buf: &mut [u8]) -> std::io::Result<usize> {
        let n = self.inner.read(buf)?;
        self.offset += n as u64;
        Ok(n)
    }
}

pub fn read_dataset<R: Read>(r: R, path: &Path) -> Result<Dataset> {
    let mut r = Counting { inner: r, offset: 0 };
    let fail = |offset: u64, message: String| Error::Format {
        path: path.to_path_buf(),
        offset,
        message,
    };
    let mut magic = [0u8; 10];
    r.read_exact(&mut magic)
        .map_err(|_| fail(0, "file too short for header".into()))?;
    if &magic != DATASET_MAGIC {
        if magic.starts_with(b"MIXDATA ") {
            let version = String::from_utf8_lossy(&magic[8..]).trim().to_string();
            return Err(fail(8, format!("unsupported dataset version `{version}` (expected 1)")));
        }
        return Err(fail(0, "not a dataset file (bad magic)".into()));
    }
    macro_rules! rd {
        ($e:expr, $what:expr) => {
            $e.map_err(|e| fail(r.offset, format!("reading {}: {e}", $what)))?
        };
    }
    let mesh_hash = rd!(r.read_u64::<LE>(), "mesh hash");
    let count = rd!(r.read_u64::<LE>(), "sample count") as usize;
    let node_count = rd!(r.read_u64::<LE>(), "node count") as usize;
    let mut samples = Vec::with_capacity(count.min(1 << 20));
    let read_vec3 = |r: &mut Counting<R>| -> std::io::Result<Vec3> {
        Ok(Vec3::new(r.read_f64::<LE>()?, r.read_f64::<LE>()?, r.read_f64::<LE>()?))
    };
    for _ in 0..count {
        let i = rd!(r.read_i32::<LE>(), "pose");
        let j = rd!(r.read_i32::<LE>(), "pose");
        let code = rd!(r.read_u8(), "angle code");
        let angle = ProbeAngle::from_code(code)
            .ok_or_else(|| fail(r.offset, format!("angle code {code} out of range")))?;
        let depth = rd!(r.read_u32::<LE>(), "depth");
        let nc = rd!(r.read_u64::<LE>(), "contact count") as usize;
        if nc > node_count {
            return Err(fail(r.offset, format!("contact count {nc} exceeds node count")));
        }
        let mut contact = Vec::with_capacity(nc);
        for _ in 0..nc {
            let c = rd!(r.read_u64::<LE>(), "contact index") as usize;
            if c >= node_count {
                return Err(fail(r.offset, format!("contact index {c} out of range")));
            }
            contact.push(c);
        }
        let mut prescribed = Vec::with_capacity(nc);
        for _ in 0..nc {
            prescribed.push(rd!(read_vec3(&mut r), "prescription"));
        }
        let mut gt = Vec::with_capacity(node_count);
        for _ in 0..node_count {
            gt.push(rd!(read_vec3(&mut r), "ground truth"));
        }
        samples.push(SimulationSample {
            pose: ProbePose {
                position: GridPos { i, j },
                angle,
                depth,
            },
            contact_nodes: contact,
            prescribed,
            ground_truth: gt,
        });
    }
    Ok(Dataset {
        mesh_hash,
        node_count,
        samples,
    })
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_dataset(BufReader::new(f), path)
}

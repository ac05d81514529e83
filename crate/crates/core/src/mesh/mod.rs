//! Labeled tetrahedral meshes and the box phantom with rigid inclusions.

mod io;
mod phantom;

pub use io::{load_mesh, parse_mesh, save_mesh, write_mesh};
pub use phantom::{generate_phantom, Aabb, Face, PhantomConfig};

use nalgebra::Vector3;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

/// Anatomy membership of a node or edge: 0 is soft tissue, `k > 0` is the
/// k-th rigid component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct AnatomyLabel(pub u8);

impl AnatomyLabel {
    pub const SOFT: AnatomyLabel = AnatomyLabel(0);

    pub fn is_rigid(self) -> bool {
        self.0 > 0
    }

    /// Zero-based component index for rigid labels.
    pub fn component(self) -> Option<usize> {
        (self.0 > 0).then(|| self.0 as usize - 1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub rest_positions: Vec<Vec3>,
    pub tetrahedra: Vec<[usize; 4]>,
    pub node_labels: Vec<AnatomyLabel>,
    pub edges: Vec<[usize; 2]>,
    pub edge_labels: Vec<AnatomyLabel>,
    /// Sorted, unique.
    pub fixed_nodes: Vec<usize>,
    /// Sorted, unique. Probe-facing surface.
    pub back_surface_nodes: Vec<usize>,
    /// Number of rigid components R (width of the one-hot masks).
    pub rigid_count: usize,
}

impl Mesh {
    /// Assembles a mesh from raw parts, deriving and labeling edges, then validates it.
    pub fn from_parts(
        rest_positions: Vec<Vec3>,
        tetrahedra: Vec<[usize; 4]>,
        node_labels: Vec<AnatomyLabel>,
        mut fixed_nodes: Vec<usize>,
        mut back_surface_nodes: Vec<usize>,
        rigid_count: usize,
    ) -> Result<Mesh> {
        fixed_nodes.sort_unstable();
        fixed_nodes.dedup();
        back_surface_nodes.sort_unstable();
        back_surface_nodes.dedup();
        let n = rest_positions.len();
        if node_labels.len() != n {
            return Err(Error::InvalidMesh(format!(
                "{} node labels for {} nodes",
                node_labels.len(),
                n
            )));
        }
        for (t, tet) in tetrahedra.iter().enumerate() {
            if let Some(&bad) = tet.iter().find(|&&v| v >= n) {
                return Err(Error::InvalidMesh(format!(
                    "tetrahedron {t} references node {bad} but the mesh has {n} nodes"
                )));
            }
        }
        let edges = derive_edges(&tetrahedra);
        let edge_labels = label_edges(&node_labels, &edges);
        let mesh = Mesh {
            rest_positions,
            tetrahedra,
            node_labels,
            edges,
            edge_labels,
            fixed_nodes,
            back_surface_nodes,
            rigid_count,
        };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn node_count(&self) -> usize {
        self.rest_positions.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.node_count();
        let bad = |msg: String| Err(Error::InvalidMesh(msg));
        if n == 0 {
            return bad("mesh has no nodes".into());
        }
        for &v in self.fixed_nodes.iter().chain(&self.back_surface_nodes) {
            if v >= n {
                return bad(format!("boundary node {v} out of range ({n} nodes)"));
            }
        }
        for (i, l) in self.node_labels.iter().enumerate() {
            if l.0 as usize > self.rigid_count {
                return bad(format!(
                    "node {i} has label {} but the mesh declares {} rigid components",
                    l.0, self.rigid_count
                ));
            }
        }
        if let Some(v) = intersect_sorted(&self.fixed_nodes, &self.back_surface_nodes) {
            return bad(format!("node {v} is both fixed and on the back surface"));
        }
        for (t, _) in self.tetrahedra.iter().enumerate() {
            let vol = self.signed_volume(t);
            if !(vol > 0.0) {
                return Err(Error::InvertedTet { tet: t, volume: vol });
            }
        }
        Ok(())
    }

    pub fn signed_volume(&self, tet: usize) -> f64 {
        tet_signed_volume(&self.rest_positions, self.tetrahedra[tet])
    }

    pub fn total_volume(&self) -> f64 {
        (0..self.tetrahedra.len()).map(|t| self.signed_volume(t)).sum()
    }

    /// Node indices of each rigid component, indexed by `label - 1`.
    pub fn rigid_components(&self) -> Vec<Vec<usize>> {
        let mut comps = vec![Vec::new(); self.rigid_count];
        for (i, l) in self.node_labels.iter().enumerate() {
            if let Some(c) = l.component() {
                comps[c].push(i);
            }
        }
        comps
    }

    pub fn is_fixed(&self, node: usize) -> bool {
        self.fixed_nodes.binary_search(&node).is_ok()
    }

    /// Stable 64-bit content hash used to pair downstream artifacts with their mesh.
    pub fn content_hash(&self) -> u64 {
        let mut h = Sha256::new();
        h.update(b"MIXMESH1");
        h.update((self.node_count() as u64).to_le_bytes());
        h.update((self.rigid_count as u64).to_le_bytes());
        for (p, l) in self.rest_positions.iter().zip(&self.node_labels) {
            for c in p.iter() {
                h.update(c.to_bits().to_le_bytes());
            }
            h.update([l.0]);
        }
        h.update((self.tetrahedra.len() as u64).to_le_bytes());
        for tet in &self.tetrahedra {
            for &v in tet {
                h.update((v as u64).to_le_bytes());
            }
        }
        for set in [&self.fixed_nodes, &self.back_surface_nodes] {
            h.update((set.len() as u64).to_le_bytes());
            for &v in set.iter() {
                h.update((v as u64).to_le_bytes());
            }
        }
        let digest = h.finalize();
        u64::from_le_bytes(digest[..8].try_into().expect("sha256 digest is 32 bytes"))
    }
}

pub fn tet_signed_volume(pos: &[Vec3], tet: [usize; 4]) -> f64 {
    let [a, b, c, d] = tet.map(|v| pos[v]);
    (b - a).cross(&(c - a)).dot(&(d - a)) / 6.0
}

fn intersect_sorted(a: &[usize], b: &[usize]) -> Option<usize> {
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => return Some(a[i]),
        }
    }
    None
}

/// Sorted unique undirected edges `[lo, hi]` of a tetrahedral mesh.
pub fn derive_edges(tetrahedra: &[[usize; 4]]) -> Vec<[usize; 2]> {
    const PAIRS: [(usize, usize); 6] = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];
    let mut edges: Vec<[usize; 2]> = tetrahedra
        .iter()
        .flat_map(|t| {
            PAIRS.iter().map(move |&(a, b)| {
                let (u, v) = (t[a], t[b]);
                [u.min(v), u.max(v)]
            })
        })
        .collect();
    edges.sort_unstable();
    edges.dedup();
    edges
}

/// An edge carries rigid label k iff both endpoints carry k; otherwise it is soft.
pub fn label_edges(node_labels: &[AnatomyLabel], edges: &[[usize; 2]]) -> Vec<AnatomyLabel> {
    edges
        .iter()
        .map(|&[a, b]| {
            let (la, lb) = (node_labels[a], node_labels[b]);
            if la.is_rigid() && la == lb {
                la
            } else {
                AnatomyLabel::SOFT
            }
        })
        .collect()
}

/// Translates rest positions so that their mean is the origin.
pub fn center_mesh(mesh: &Mesh) -> Mesh {
    let n = mesh.node_count().max(1) as f64;
    let mean = mesh.rest_positions.iter().fold(Vec3::zeros(), |acc, p| acc + p) / n;
    let mut out = mesh.clone();
    for p in &mut out.rest_positions {
        *p -= mean;
    }
    out
}

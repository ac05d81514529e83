//! Rigid-component reduction (6 DOFs per component) and exact rigid projection.

use nalgebra::Matrix3;

use super::sparse::SymSparse;
use crate::error::{Error, Result};
use crate::mesh::{AnatomyLabel, Mesh, Vec3};

/// Linearized rigid motion about a component centroid: u = t + θ × (r − c).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidMotion {
    pub translation: Vec3,
    pub rotation: Vec3,
}

impl RigidMotion {
    pub fn linear_displacement(&self, arm: &Vec3) -> Vec3 {
        self.translation + self.rotation.cross(arm)
    }

    /// Displacement under the exact rotation exp([θ]×) about the centroid plus t.
    pub fn exact_displacement(&self, arm: &Vec3) -> Vec3 {
        self.translation + rodrigues(&self.rotation) * arm - arm
    }
}

/// Rotation matrix exp([θ]×).
pub fn rodrigues(theta: &Vec3) -> Matrix3<f64> {
    let angle = theta.norm();
    let k = theta.cross_matrix();
    if angle < 1e-8 {
        // Series to second order is exact to rounding at this scale.
        return Matrix3::identity() + k + k * k * 0.5;
    }
    Matrix3::identity() + k * (angle.sin() / angle) + k * k * ((1.0 - angle.cos()) / (angle * angle))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeDof {
    /// First of three consecutive reduced DOFs.
    Soft(usize),
    /// Rigid component index.
    Rigid(usize),
}

/// Maps full nodal DOFs onto reduced DOFs: soft nodes keep their three,
/// each rigid component gets (t, θ) appended after all soft DOFs.
#[derive(Debug, Clone)]
pub struct RigidMap {
    pub node_dof: Vec<NodeDof>,
    pub components: Vec<Vec<usize>>,
    pub centroids: Vec<Vec3>,
    /// Lever arm r_i − c for every node (zero for soft nodes).
    pub arms: Vec<Vec3>,
    pub soft_dofs: usize,
}

impl RigidMap {
    pub fn new(labels: &[AnatomyLabel], rigid_count: usize, positions: &[Vec3]) -> Result<Self> {
        let mut components = vec![Vec::new(); rigid_count];
        for (i, l) in labels.iter().enumerate() {
            if let Some(c) = l.component() {
                components[c].push(i);
            }
        }
        if let Some(empty) = components.iter().position(|c| c.is_empty()) {
            return Err(Error::InvalidMesh(format!(
                "rigid component {} has no nodes",
                empty + 1
            )));
        }
        let centroids: Vec<Vec3> = components
            .iter()
            .map(|nodes| {
                nodes.iter().fold(Vec3::zeros(), |a, &i| a + positions[i]) / nodes.len() as f64
            })
            .collect();
        let mut node_dof = Vec::with_capacity(labels.len());
        let mut arms = vec![Vec3::zeros(); labels.len()];
        let mut next = 0;
        for (i, l) in labels.iter().enumerate() {
            match l.component() {
                Some(c) => {
                    node_dof.push(NodeDof::Rigid(c));
                    arms[i] = positions[i] - centroids[c];
                }
                None => {
                    node_dof.push(NodeDof::Soft(next));
                    next += 3;
                }
            }
        }
        Ok(RigidMap {
            node_dof,
            components,
            centroids,
            arms,
            soft_dofs: next,
        })
    }

    pub fn reduced_dim(&self) -> usize {
        self.soft_dofs + 6 * self.components.len()
    }

    pub fn component_dof(&self, c: usize) -> usize {
        self.soft_dofs + 6 * c
    }

    /// Nonzero entries of row `3 * node + axis` of the transform T (u = T q).
    fn t_row(&self, full_dof: usize, out: &mut Vec<(usize, f64)>) {
        out.clear();
        let node = full_dof / 3;
        let axis = full_dof % 3;
        match self.node_dof[node] {
            NodeDof::Soft(base) => out.push((base + axis, 1.0)),
            NodeDof::Rigid(c) => {
                let base = self.component_dof(c);
                let d = self.arms[node];
                out.push((base + axis, 1.0));
                // θ × d = -[d]× θ; row `axis` of -[d]×.
                let (a1, a2) = ((axis + 1) % 3, (axis + 2) % 3);
                // (θ × d)_axis = θ_a1 d_a2 − θ_a2 d_a1
                out.push((base + 3 + a1, d[a2]));
                out.push((base + 3 + a2, -d[a1]));
            }
        }
    }

    pub fn motions(&self, q: &[f64]) -> Vec<RigidMotion> {
        (0..self.components.len())
            .map(|c| {
                let b = self.component_dof(c);
                RigidMotion {
                    translation: Vec3::new(q[b], q[b + 1], q[b + 2]),
                    rotation: Vec3::new(q[b + 3], q[b + 4], q[b + 5]),
                }
            })
            .collect()
    }

    /// Full nodal field from reduced DOFs, rigid nodes by the linearized map.
    pub fn expand_linear(&self, q: &[f64]) -> Vec<Vec3> {
        let motions = self.motions(q);
        self.node_dof
            .iter()
            .enumerate()
            .map(|(i, nd)| match *nd {
                NodeDof::Soft(b) => Vec3::new(q[b], q[b + 1], q[b + 2]),
                NodeDof::Rigid(c) => motions[c].linear_displacement(&self.arms[i]),
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct ReducedSystem {
    pub matrix: SymSparse,
    pub map: RigidMap,
}

/// Congruence transform Tᵀ K T replacing each rigid component's nodal DOFs
/// by its 6 rigid-body DOFs about the component centroid (rest geometry).
pub fn reduce_rigid(system: &SymSparse, mesh: &Mesh) -> Result<ReducedSystem> {
    let map = RigidMap::new(&mesh.node_labels, mesh.rigid_count, &mesh.rest_positions)?;
    Ok(reduce_with_map(system, map))
}

pub fn reduce_with_map(system: &SymSparse, map: RigidMap) -> ReducedSystem {
    assert_eq!(system.dim(), 3 * map.node_dof.len(), "system/map size");
    let m = map.reduced_dim();
    let mut trip = Vec::with_capacity(system.nnz() + system.nnz() / 2);
    let (mut ra, mut rb) = (Vec::with_capacity(3), Vec::with_capacity(3));
    for a in 0..system.dim() {
        map.t_row(a, &mut ra);
        for (b, v) in system.row(a) {
            if ra.len() == 1 && matches!(map.node_dof[b / 3], NodeDof::Soft(_)) {
                let NodeDof::Soft(base) = map.node_dof[b / 3] else { unreachable!() };
                trip.push((ra[0].0, base + b % 3, ra[0].1 * v));
                continue;
            }
            map.t_row(b, &mut rb);
            for &(p, tp) in &ra {
                for &(q, tq) in &rb {
                    trip.push((p, q, tp * v * tq));
                }
            }
        }
    }
    ReducedSystem {
        matrix: SymSparse::from_triplets(m, trip),
        map,
    }
}

/// Least-squares linearized rigid motion of a node set:
/// t = mean displacement, θ solves (Σ |d|²I − d dᵀ) θ = Σ d × u.
pub fn fit_linear_motion(nodes: &[usize], positions: &[Vec3], field: &[Vec3]) -> RigidMotion {
    let k = nodes.len() as f64;
    let c = nodes.iter().fold(Vec3::zeros(), |a, &i| a + positions[i]) / k;
    let t = nodes.iter().fold(Vec3::zeros(), |a, &i| a + field[i]) / k;
    let mut inertia = Matrix3::zeros();
    let mut rhs = Vec3::zeros();
    for &i in nodes {
        let d = positions[i] - c;
        inertia += Matrix3::identity() * d.norm_squared() - d * d.transpose();
        rhs += d.cross(&(field[i] - t));
    }
    let scale = inertia.norm().max(f64::MIN_POSITIVE);
    let theta = inertia
        .svd(true, true)
        .solve(&rhs, 1e-12 * scale)
        .unwrap_or_else(|_| Vec3::zeros());
    RigidMotion {
        translation: t,
        rotation: theta,
    }
}

/// True when every pairwise distance in the set is preserved to `rel_tol`.
fn is_isometry(nodes: &[usize], positions: &[Vec3], field: &[Vec3], rel_tol: f64) -> bool {
    for (a, &i) in nodes.iter().enumerate() {
        let pi = positions[i] + field[i];
        for &j in &nodes[a + 1..] {
            let rest = (positions[i] - positions[j]).norm();
            let now = (pi - positions[j] - field[j]).norm();
            if (now - rest).abs() > rel_tol * rest {
                return false;
            }
        }
    }
    true
}

/// Replaces each component's motion by an exact rigid transform. Components
/// already moving isometrically are left untouched, so the map is idempotent.
pub fn project_rigid_components(
    field: &[Vec3],
    positions: &[Vec3],
    components: &[Vec<usize>],
) -> Vec<Vec3> {
    let mut out = field.to_vec();
    for nodes in components {
        if nodes.is_empty() || is_isometry(nodes, positions, field, 1e-13) {
            continue;
        }
        let motion = fit_linear_motion(nodes, positions, field);
        let c = nodes.iter().fold(Vec3::zeros(), |a, &i| a + positions[i]) / nodes.len() as f64;
        let rot = rodrigues(&motion.rotation);
        for &i in nodes {
            let arm = positions[i] - c;
            out[i] = motion.translation + rot * arm - arm;
        }
    }
    out
}

pub fn project_rigid(field: &[Vec3], mesh: &Mesh) -> Vec<Vec3> {
    project_rigid_components(field, &mesh.rest_positions, &mesh.rigid_components())
}

/// Largest relative length change over the given edges under `field`.
pub fn max_relative_edge_change(edges: &[[usize; 2]], positions: &[Vec3], field: &[Vec3]) -> f64 {
    edges
        .iter()
        .map(|&[a, b]| {
            let rest = (positions[a] - positions[b]).norm();
            let now = (positions[a] + field[a] - positions[b] - field[b]).norm();
            (now - rest).abs() / rest
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square() -> (Vec<Vec3>, Vec<Vec<usize>>, Vec<[usize; 2]>) {
        let pos = vec![
            Vec3::new(-1.0, -1.0, 0.0),
            Vec3::new(1.0, -1.0, 0.0),
            Vec3::new(1.0, 1.0, 0.0),
            Vec3::new(-1.0, 1.0, 0.0),
        ];
        (pos, vec![vec![0, 1, 2, 3]], vec![[0, 1], [1, 2], [2, 3], [3, 0], [0, 2]])
    }

    #[test]
    fn rodrigues_is_orthonormal() {
        let r = rodrigues(&Vec3::new(0.3, -0.2, 0.9));
        assert!((r.transpose() * r - Matrix3::identity()).norm() < 1e-14);
        assert!((r.determinant() - 1.0).abs() < 1e-14);
        assert_eq!(rodrigues(&Vec3::zeros()), Matrix3::identity());
    }

    #[test]
    fn zero_rotation_field_unchanged() {
        let (pos, comps, _) = square();
        let field = vec![Vec3::new(0.5, -0.25, 2.0); 4];
        assert_eq!(project_rigid_components(&field, &pos, &comps), field);
    }

    #[test]
    fn projection_restores_edge_lengths() {
        let (pos, comps, edges) = square();
        let m = RigidMotion {
            translation: Vec3::new(0.1, 0.0, 0.0),
            rotation: Vec3::new(0.0, 0.0, 0.1),
        };
        let linear: Vec<Vec3> = pos.iter().map(|p| m.linear_displacement(p)).collect();
        // Linearized rotation stretches every arm by sqrt(1 + 0.01).
        let before = max_relative_edge_change(&edges, &pos, &linear);
        assert!((before - (1.01f64.sqrt() - 1.0)).abs() < 1e-12);
        let projected = project_rigid_components(&linear, &pos, &comps);
        assert!(max_relative_edge_change(&edges, &pos, &projected) < 1e-15);
        // Hand-scripted rotation by 0.1 rad about z.
        let (s, c) = (0.1f64.sin(), 0.1f64.cos());
        for (p, u) in pos.iter().zip(&projected) {
            let expected = Vec3::new(c * p.x - s * p.y, s * p.x + c * p.y, p.z) - p
                + Vec3::new(0.1, 0.0, 0.0);
            assert!((u - expected).norm() < 1e-14);
        }
    }

    #[test]
    fn projection_is_idempotent() {
        let (pos, comps, _) = square();
        let m = RigidMotion {
            translation: Vec3::new(0.0, 0.3, 0.1),
            rotation: Vec3::new(0.05, 0.2, -0.1),
        };
        let linear: Vec<Vec3> = pos.iter().map(|p| m.linear_displacement(p)).collect();
        let once = project_rigid_components(&linear, &pos, &comps);
        let twice = project_rigid_components(&once, &pos, &comps);
        assert_eq!(once, twice);
    }

    #[test]
    fn fit_recovers_linear_motion() {
        let pos: Vec<Vec3> = (0..8)
            .map(|i| Vec3::new((i & 1) as f64, ((i >> 1) & 1) as f64, (i >> 2) as f64 * 2.0))
            .collect();
        let c = pos.iter().fold(Vec3::zeros(), |a, p| a + p) / 8.0;
        let m = RigidMotion {
            translation: Vec3::new(1.0, 2.0, 3.0),
            rotation: Vec3::new(0.01, -0.02, 0.03),
        };
        let field: Vec<Vec3> = pos.iter().map(|p| m.linear_displacement(&(p - c))).collect();
        let fit = fit_linear_motion(&(0..8).collect::<Vec<_>>(), &pos, &field);
        assert!((fit.translation - m.translation).norm() < 1e-14);
        assert!((fit.rotation - m.rotation).norm() < 1e-14);
    }

    #[test]
    fn reduced_dimension_bookkeeping() {
        let labels = [0u8, 1, 1, 0, 2, 0].map(AnatomyLabel).to_vec();
        let pos: Vec<Vec3> = (0..6).map(|i| Vec3::new(i as f64, 0.0, 0.0)).collect();
        let map = RigidMap::new(&labels, 2, &pos).unwrap();
        assert_eq!(map.reduced_dim(), 3 * 3 + 12);
        assert!(RigidMap::new(&labels, 3, &pos).is_err());
    }
}

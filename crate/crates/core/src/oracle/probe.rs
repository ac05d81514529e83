//! Probe poses on the back surface and their contact footprints.

use crate::error::{Error, Result};
use crate::mesh::{Mesh, Vec3};

/// One of the four probe rotations: 0°, 45°, 90°, 135°.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ProbeAngle(u8);

impl ProbeAngle {
    pub const ALL: [ProbeAngle; 4] = [ProbeAngle(0), ProbeAngle(1), ProbeAngle(2), ProbeAngle(3)];

    pub fn from_code(code: u8) -> Option<Self> {
        (code < 4).then_some(ProbeAngle(code))
    }

    pub fn code(self) -> u8 {
        self.0
    }

    pub fn degrees(self) -> f64 {
        45.0 * self.0 as f64
    }

    /// (cos, sin), exact for the axis-aligned rotations.
    pub fn cos_sin(self) -> (f64, f64) {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        match self.0 {
            0 => (1.0, 0.0),
            1 => (h, h),
            2 => (0.0, 1.0),
            _ => (-h, h),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GridPos {
    pub i: i32,
    pub j: i32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ProbePose {
    pub position: GridPos,
    pub angle: ProbeAngle,
    /// 1-based depth step.
    pub depth: u32,
}

/// Probe grid and footprint geometry shared by all poses of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeGeometry {
    /// Number of grid positions along the two in-plane axes of the back surface.
    pub grid: [usize; 2],
    /// Grid interval (mm).
    pub spacing: f64,
    /// Rectangle half-lengths (long axis, short axis) in mm.
    pub half_lengths: [f64; 2],
    /// Indentation per depth step (mm).
    pub step_mm: f64,
}

impl Default for ProbeGeometry {
    fn default() -> Self {
        ProbeGeometry {
            grid: [6, 4],
            spacing: 10.0,
            half_lengths: [20.0, 5.0],
            step_mm: 1.0,
        }
    }
}

/// Plane of the back surface: the axis it is normal to and the inward push direction.
#[derive(Debug, Clone, Copy)]
pub struct BackFace {
    pub normal_axis: usize,
    pub in_plane: [usize; 2],
    pub center: Vec3,
    pub inward: Vec3,
}

impl BackFace {
    pub fn of(mesh: &Mesh) -> Result<BackFace> {
        let nodes = &mesh.back_surface_nodes;
        if nodes.is_empty() {
            return Err(Error::InvalidMesh("mesh has no back-surface nodes".into()));
        }
        let p0 = mesh.rest_positions[nodes[0]];
        let axis = (0..3)
            .find(|&a| nodes.iter().all(|&v| mesh.rest_positions[v][a] == p0[a]))
            .ok_or_else(|| Error::InvalidMesh("back surface is not an axis-aligned plane".into()))?;
        let mean_all = mesh.rest_positions.iter().fold(Vec3::zeros(), |a, p| a + p)
            / mesh.node_count() as f64;
        let mut inward = Vec3::zeros();
        inward[axis] = if mean_all[axis] < p0[axis] { -1.0 } else { 1.0 };
        let center = nodes.iter().fold(Vec3::zeros(), |a, &v| a + mesh.rest_positions[v])
            / nodes.len() as f64;
        let in_plane = match axis {
            0 => [1, 2],
            1 => [0, 2],
            _ => [0, 1],
        };
        Ok(BackFace {
            normal_axis: axis,
            in_plane,
            center,
            inward,
        })
    }

    /// Probe center on the surface for a grid position, grid centered on the face.
    pub fn probe_center(&self, geometry: &ProbeGeometry, pos: GridPos) -> Vec3 {
        let mut c = self.center;
        for k in 0..2 {
            let offset = pos_offset(if k == 0 { pos.i } else { pos.j }, geometry.grid[k]);
            c[self.in_plane[k]] += offset * geometry.spacing;
        }
        c
    }
}

fn pos_offset(index: i32, count: usize) -> f64 {
    index as f64 - (count as f64 - 1.0) / 2.0
}

pub fn grid_positions(geometry: &ProbeGeometry) -> Vec<GridPos> {
    let mut out = Vec::with_capacity(geometry.grid[0] * geometry.grid[1]);
    for i in 0..geometry.grid[0] as i32 {
        for j in 0..geometry.grid[1] as i32 {
            out.push(GridPos { i, j });
        }
    }
    out
}

/// Contact nodes under the rotated rectangle and their common prescribed
/// displacement `depth * step_mm` along the inward normal.
pub fn probe_footprint(
    mesh: &Mesh,
    geometry: &ProbeGeometry,
    pose: &ProbePose,
) -> Result<(Vec<usize>, Vec<Vec3>)> {
    let face = BackFace::of(mesh)?;
    let contact = footprint_nodes(mesh, &face, geometry, pose.position, pose.angle);
    if contact.is_empty() {
        return Err(Error::EmptyFootprint {
            i: pose.position.i,
            j: pose.position.j,
            angle: pose.angle.code(),
        });
    }
    let u = face.inward * (pose.depth as f64 * geometry.step_mm);
    let prescribed = vec![u; contact.len()];
    Ok((contact, prescribed))
}

pub(crate) fn footprint_nodes(
    mesh: &Mesh,
    face: &BackFace,
    geometry: &ProbeGeometry,
    position: GridPos,
    angle: ProbeAngle,
) -> Vec<usize> {
    const EPS: f64 = 1e-9;
    let center = face.probe_center(geometry, position);
    let (c, s) = angle.cos_sin();
    let [a, b] = geometry.half_lengths;
    mesh.back_surface_nodes
        .iter()
        .copied()
        .filter(|&v| {
            let p = mesh.rest_positions[v];
            let du = p[face.in_plane[0]] - center[face.in_plane[0]];
            let dv = p[face.in_plane[1]] - center[face.in_plane[1]];
            let along = c * du + s * dv;
            let across = -s * du + c * dv;
            along.abs() <= a + EPS && across.abs() <= b + EPS
        })
        .collect()
}

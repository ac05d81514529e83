use super::{AnatomyLabel, Mesh, Vec3};
use crate::error::{Error, Result};

/// Axis-aligned box `[min, max)`; containment is half-open on every axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Aabb {
    pub fn new(min: [f64; 3], max: [f64; 3]) -> Self {
        Aabb { min, max }
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|a| self.min[a] <= p[a] && p[a] < self.max[a])
    }

    fn overlaps(&self, other: &Aabb) -> bool {
        (0..3).all(|a| self.min[a] < other.max[a] && other.min[a] < self.max[a])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Face {
    XMin,
    XMax,
    YMin,
    YMax,
    ZMin,
    ZMax,
}

impl Face {
    pub fn axis(self) -> usize {
        match self {
            Face::XMin | Face::XMax => 0,
            Face::YMin | Face::YMax => 1,
            Face::ZMin | Face::ZMax => 2,
        }
    }

    pub fn is_max(self) -> bool {
        matches!(self, Face::XMax | Face::YMax | Face::ZMax)
    }

    pub fn opposite(self) -> Face {
        match self {
            Face::XMin => Face::XMax,
            Face::XMax => Face::XMin,
            Face::YMin => Face::YMax,
            Face::YMax => Face::YMin,
            Face::ZMin => Face::ZMax,
            Face::ZMax => Face::ZMin,
        }
    }

    /// Unit normal pointing into the box.
    pub fn inward_normal(self) -> Vec3 {
        let mut n = Vec3::zeros();
        n[self.axis()] = if self.is_max() { -1.0 } else { 1.0 };
        n
    }

    pub fn parse(s: &str) -> Option<Face> {
        Some(match s {
            "x-" | "xmin" => Face::XMin,
            "x+" | "xmax" => Face::XMax,
            "y-" | "ymin" => Face::YMin,
            "y+" | "ymax" => Face::YMax,
            "z-" | "zmin" => Face::ZMin,
            "z+" | "zmax" => Face::ZMax,
            _ => return None,
        })
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Face::XMin => "xmin",
            Face::XMax => "xmax",
            Face::YMin => "ymin",
            Face::YMax => "ymax",
            Face::ZMin => "zmin",
            Face::ZMax => "zmax",
        }
    }
}

/// Soft box with rigid box inclusions. Coordinates in mm, box spans `[0, size]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhantomConfig {
    pub size: [f64; 3],
    pub cells: [usize; 3],
    pub inclusions: Vec<Aabb>,
    /// Anterior face, fully fixed. The opposite face is the probe-facing back surface.
    pub fixed_face: Face,
    pub seed: u64,
}

impl Default for PhantomConfig {
    /// Desk phantom: 160 x 80 x 80 mm trunk, 10 mm cells, two elongated
    /// "vertebrae" at mid depth closer to the back.
    fn default() -> Self {
        PhantomConfig {
            size: [160.0, 80.0, 80.0],
            cells: [16, 8, 8],
            inclusions: vec![
                Aabb::new([10.0, 20.0, 30.0], [70.0, 60.0, 60.0]),
                Aabb::new([90.0, 20.0, 30.0], [150.0, 60.0, 60.0]),
            ],
            fixed_face: Face::ZMin,
            seed: 0,
        }
    }
}

impl PhantomConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        for a in 0..3 {
            if self.cells[a] < 2 {
                return bad(format!(
                    "phantom needs at least 2 cells per axis, axis {a} has {}",
                    self.cells[a]
                ));
            }
            if !(self.size[a] > 0.0) {
                return bad(format!("phantom size on axis {a} must be positive"));
            }
        }
        if self.inclusions.len() > u8::MAX as usize {
            return bad(format!("too many inclusions ({})", self.inclusions.len()));
        }
        for (k, b) in self.inclusions.iter().enumerate() {
            for a in 0..3 {
                if !(b.min[a] > 0.0 && b.max[a] < self.size[a] && b.min[a] < b.max[a]) {
                    return bad(format!(
                        "inclusion {} must lie strictly inside the box (axis {a}: [{}, {}) vs [0, {}])",
                        k + 1,
                        b.min[a],
                        b.max[a],
                        self.size[a]
                    ));
                }
            }
            for (k2, other) in self.inclusions.iter().enumerate().skip(k + 1) {
                if b.overlaps(other) {
                    return bad(format!("inclusions {} and {} overlap", k + 1, k2 + 1));
                }
            }
        }
        Ok(())
    }
}

/// Kuhn (Freudenthal) split of the unit cube into 6 tetrahedra sharing the
/// main diagonal. Corner bit layout: bit0 = x, bit1 = y, bit2 = z.
const KUHN_PATHS: [[usize; 3]; 6] = [
    [0, 1, 2],
    [0, 2, 1],
    [1, 0, 2],
    [1, 2, 0],
    [2, 0, 1],
    [2, 1, 0],
];

pub fn generate_phantom(config: &PhantomConfig) -> Result<Mesh> {
    config.validate()?;
    let [cx, cy, cz] = config.cells;
    let (nx, ny, nz) = (cx + 1, cy + 1, cz + 1);
    let h: [f64; 3] = std::array::from_fn(|a| config.size[a] / config.cells[a] as f64);
    let index = |i: usize, j: usize, k: usize| i + nx * (j + ny * k);

    let mut positions = Vec::with_capacity(nx * ny * nz);
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                positions.push(Vec3::new(
                    i as f64 * h[0],
                    j as f64 * h[1],
                    k as f64 * h[2],
                ));
            }
        }
    }

    let mut tets = Vec::with_capacity(cx * cy * cz * 6);
    for k in 0..cz {
        for j in 0..cy {
            for i in 0..cx {
                let corner = |bits: usize| {
                    index(i + (bits & 1), j + ((bits >> 1) & 1), k + ((bits >> 2) & 1))
                };
                for path in KUHN_PATHS {
                    let b1 = 1 << path[0];
                    let b2 = b1 | (1 << path[1]);
                    let mut tet = [corner(0), corner(b1), corner(b2), corner(7)];
                    if super::tet_signed_volume(&positions, tet) < 0.0 {
                        tet.swap(2, 3);
                    }
                    tets.push(tet);
                }
            }
        }
    }

    let labels: Vec<AnatomyLabel> = positions
        .iter()
        .map(|p| {
            config
                .inclusions
                .iter()
                .position(|b| b.contains(p))
                .map_or(AnatomyLabel::SOFT, |c| AnatomyLabel(c as u8 + 1))
        })
        .collect();
    for k in 0..config.inclusions.len() {
        if !labels.iter().any(|l| l.0 as usize == k + 1) {
            return Err(Error::Config(format!(
                "inclusion {} contains no grid nodes at this resolution",
                k + 1
            )));
        }
    }

    let on_face = |face: super::Face| -> Vec<usize> {
        let axis = face.axis();
        let target = if face.is_max() { config.cells[axis] } else { 0 };
        (0..positions.len())
            .filter(|&v| {
                let ijk = [v % nx, (v / nx) % ny, v / (nx * ny)];
                ijk[axis] == target
            })
            .collect()
    };
    let fixed = on_face(config.fixed_face);
    let back = on_face(config.fixed_face.opposite());

    Mesh::from_parts(
        positions,
        tets,
        labels,
        fixed,
        back,
        config.inclusions.len(),
    )
}

//! Quasi-static ground-truth generator: linear tetrahedral elasticity with
//! rigid-component reduction, prescribed probe indentation and optional
//! updated-geometry increments.

mod dataset;
mod fem;
mod probe;
mod rigid;
mod solve;
pub mod sparse;

pub use dataset::{load_dataset, read_dataset, save_dataset, write_dataset, Dataset, DATASET_MAGIC};
pub use fem::{assemble_stiffness, assemble_stiffness_at, element_stiffness, element_strain, shape_gradients};
pub use probe::{grid_positions, probe_footprint, BackFace, GridPos, ProbeAngle, ProbeGeometry, ProbePose};
pub use rigid::{
    fit_linear_motion, max_relative_edge_change, project_rigid, project_rigid_components,
    reduce_rigid, reduce_with_map, rodrigues, NodeDof, ReducedSystem, RigidMap, RigidMotion,
};
pub use solve::{solve_step, DirichletSolver, StepSolution, SOLVE_TOLERANCE};

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use crate::error::{Error, Result};
use crate::mesh::{Mesh, Vec3};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaterialParams {
    /// Pa
    pub young_modulus: f64,
    pub poisson_ratio: f64,
}

impl Default for MaterialParams {
    fn default() -> Self {
        MaterialParams {
            young_modulus: 25400.0,
            poisson_ratio: 0.45,
        }
    }
}

impl MaterialParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.young_modulus > 0.0) {
            return Err(Error::Config("Young's modulus must be positive".into()));
        }
        if !(0.0..0.5).contains(&self.poisson_ratio) {
            return Err(Error::Config("Poisson ratio must lie in [0, 0.5)".into()));
        }
        Ok(())
    }

    /// Lamé parameters (λ, μ).
    pub fn lame(&self) -> (f64, f64) {
        let (e, nu) = (self.young_modulus, self.poisson_ratio);
        (e * nu / ((1.0 + nu) * (1.0 - 2.0 * nu)), e / (2.0 * (1.0 + nu)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationSample {
    pub pose: ProbePose,
    /// Sorted contact node indices.
    pub contact_nodes: Vec<usize>,
    pub prescribed: Vec<Vec3>,
    pub ground_truth: Vec<Vec3>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub geometry: ProbeGeometry,
    pub depth_steps: u32,
    pub material: MaterialParams,
    /// Re-assemble on the deformed configuration between depth steps.
    pub geometry_update: bool,
    /// Worker threads for independent poses.
    pub jobs: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            geometry: ProbeGeometry::default(),
            depth_steps: 10,
            material: MaterialParams::default(),
            geometry_update: true,
            jobs: 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PoseFailure {
    pub position: GridPos,
    pub angle: ProbeAngle,
    pub error: String,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub dataset: Dataset,
    pub failures: Vec<PoseFailure>,
}

/// Every grid position x 4 rotations x `depth_steps`, ordered by
/// (position, rotation, depth). Failing poses are logged and skipped.
pub fn run_sweep(mesh: &Mesh, config: &SweepConfig) -> Result<SweepResult> {
    config.material.validate()?;
    if config.depth_steps == 0 {
        return Err(Error::Config("depth_steps must be at least 1".into()));
    }
    let poses: Vec<(GridPos, ProbeAngle)> = grid_positions(&config.geometry)
        .into_iter()
        .flat_map(|p| ProbeAngle::ALL.map(|a| (p, a)))
        .collect();
    let results: Vec<Mutex<Option<Result<Vec<SimulationSample>>>>> =
        poses.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let jobs = config.jobs.clamp(1, poses.len().max(1));
    let worker = || loop {
        let k = next.fetch_add(1, Ordering::Relaxed);
        if k >= poses.len() {
            break;
        }
        let (pos, angle) = poses[k];
        let r = simulate_pose(mesh, config, pos, angle);
        *results[k].lock().expect("result slot") = Some(r);
    };
    if jobs == 1 {
        worker();
    } else {
        std::thread::scope(|s| {
            for _ in 0..jobs {
                s.spawn(worker);
            }
        });
    }

    let mut samples = Vec::with_capacity(poses.len() * config.depth_steps as usize);
    let mut failures = Vec::new();
    for ((pos, angle), slot) in poses.iter().zip(results) {
        match slot.into_inner().expect("result slot").expect("every pose visited") {
            Ok(s) => samples.extend(s),
            Err(e) => {
                log::warn!(
                    "pose ({}, {}) at {}° skipped: {e}",
                    pos.i,
                    pos.j,
                    angle.degrees()
                );
                failures.push(PoseFailure {
                    position: *pos,
                    angle: *angle,
                    error: e.to_string(),
                });
            }
        }
    }
    Ok(SweepResult {
        dataset: Dataset {
            mesh_hash: mesh.content_hash(),
            node_count: mesh.node_count(),
            samples,
        },
        failures,
    })
}

/// All depth steps of one probe pose.
pub fn simulate_pose(
    mesh: &Mesh,
    config: &SweepConfig,
    position: GridPos,
    angle: ProbeAngle,
) -> Result<Vec<SimulationSample>> {
    let geo = &config.geometry;
    let first = ProbePose {
        position,
        angle,
        depth: 1,
    };
    let (contact, unit) = probe_footprint(mesh, geo, &first)?;
    let step = unit[0];
    let constrained: Vec<usize> = contact.iter().chain(&mesh.fixed_nodes).copied().collect();
    let components = mesh.rigid_components();
    let n = mesh.node_count();
    let mut out = Vec::with_capacity(config.depth_steps as usize);

    let emit = |depth: u32, field: &[Vec3]| -> SimulationSample {
        let gt = project_rigid_components(field, &mesh.rest_positions, &components);
        let prescribed = vec![step * depth as f64; contact.len()];
        SimulationSample {
            pose: ProbePose {
                position,
                angle,
                depth,
            },
            contact_nodes: contact.clone(),
            prescribed,
            ground_truth: gt,
        }
    };

    if config.geometry_update {
        let mut u = vec![Vec3::zeros(); n];
        let mut positions = mesh.rest_positions.clone();
        let increment: BTreeMap<usize, Vec3> = contact.iter().map(|&v| (v, step)).collect();
        for depth in 1..=config.depth_steps {
            let k = assemble_stiffness_at(&positions, &mesh.tetrahedra, &config.material)?;
            let map = RigidMap::new(&mesh.node_labels, mesh.rigid_count, &positions)?;
            let reduced = reduce_with_map(&k, map);
            let sol = DirichletSolver::new(&reduced, &constrained)?.solve(&increment)?;
            for (i, nd) in reduced.map.node_dof.iter().enumerate() {
                match *nd {
                    NodeDof::Soft(_) => {
                        u[i] += sol.field[i];
                        positions[i] = mesh.rest_positions[i] + u[i];
                    }
                    NodeDof::Rigid(c) => {
                        let m = sol.motions[c];
                        let centroid = reduced.map.centroids[c];
                        let arm = positions[i] - centroid;
                        positions[i] = centroid + m.translation + rodrigues(&m.rotation) * arm;
                        u[i] = positions[i] - mesh.rest_positions[i];
                    }
                }
            }
            out.push(emit(depth, &u));
        }
    } else {
        let k = assemble_stiffness_at(&mesh.rest_positions, &mesh.tetrahedra, &config.material)?;
        let reduced = reduce_rigid(&k, mesh)?;
        let solver = DirichletSolver::new(&reduced, &constrained)?;
        for depth in 1..=config.depth_steps {
            let values: BTreeMap<usize, Vec3> =
                contact.iter().map(|&v| (v, step * depth as f64)).collect();
            let sol = solver.solve(&values)?;
            out.push(emit(depth, &sol.field));
        }
    }
    Ok(out)
}

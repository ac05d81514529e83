//! Oracle checks against independent dense / Lagrange-multiplier solves and
//! closed-form linear elasticity.

use std::collections::BTreeMap;

use mixpinn::mesh::{center_mesh, generate_phantom, Face, Mesh, PhantomConfig, Vec3};
use mixpinn::oracle::*;
use nalgebra::{DMatrix, DVector};

mod common;
use common::{toy_prescription, toy_rigid_mesh};

#[test]
fn reduced_solve_matches_lagrange_multipliers() {
    let (n, err) = common::lagrange_agreement();
    assert!(n <= 200);
    assert!(err <= 1e-8, "relative error {err:e}");
}

#[test]
fn reduced_dof_count() {
    let mesh = toy_rigid_mesh();
    let reduced = reduce_rigid(&assemble_stiffness(&mesh, &MaterialParams::default()).unwrap(), &mesh).unwrap();
    let soft = mesh.node_labels.iter().filter(|l| !l.is_rigid()).count();
    assert_eq!(reduced.matrix.dim(), 3 * soft + 6 * mesh.rigid_count);
}

#[test]
fn unreduced_solve_matches_dense_elimination() {
    let cfg = PhantomConfig {
        size: [20.0, 10.0, 10.0],
        cells: [2, 2, 2],
        inclusions: vec![],
        fixed_face: Face::ZMin,
        seed: 0,
    };
    let mesh = generate_phantom(&cfg).unwrap();
    let k = assemble_stiffness(&mesh, &MaterialParams::default()).unwrap();
    let reduced = reduce_rigid(&k, &mesh).unwrap();
    let presc = toy_prescription(&mesh);
    let sol = solve_step(&reduced, &presc, &mesh.fixed_nodes).unwrap();

    let n = mesh.node_count();
    let mut known = vec![None; 3 * n];
    for &i in &mesh.fixed_nodes {
        for a in 0..3 {
            known[3 * i + a] = Some(0.0);
        }
    }
    for (&i, g) in &presc {
        for a in 0..3 {
            known[3 * i + a] = Some(g[a]);
        }
    }
    let free: Vec<usize> = (0..3 * n).filter(|&d| known[d].is_none()).collect();
    let dense = k.to_dense();
    let kff = DMatrix::from_fn(free.len(), free.len(), |r, c| dense[(free[r], free[c])]);
    let b = DVector::from_fn(free.len(), |r, _| {
        -(0..3 * n)
            .filter_map(|c| known[c].map(|g| dense[(free[r], c)] * g))
            .sum::<f64>()
    });
    let x = kff.lu().solve(&b).unwrap();
    for (k, &d) in free.iter().enumerate() {
        let got = sol.field[d / 3][d % 3];
        assert!((got - x[k]).abs() < 1e-10, "dof {d}: {got} vs {}", x[k]);
    }
}

#[test]
fn uniaxial_patch_test() {
    let e = common::uniaxial_patch(0.01);
    assert!(e.displacement <= 1e-8, "{}", e.displacement);
    assert!(e.strain <= 1e-8, "{}", e.strain);
    assert!(e.stress <= 1e-8, "{}", e.stress);
}

#[test]
fn zero_prescription_gives_zero_field() {
    let mesh = toy_rigid_mesh();
    let reduced = reduce_rigid(&assemble_stiffness(&mesh, &MaterialParams::default()).unwrap(), &mesh).unwrap();
    let presc: BTreeMap<usize, Vec3> = toy_prescription(&mesh).keys().map(|&k| (k, Vec3::zeros())).collect();
    let sol = solve_step(&reduced, &presc, &mesh.fixed_nodes).unwrap();
    assert!(sol.field.iter().all(|u| *u == Vec3::zeros()));
}

#[test]
fn solution_is_linear_in_prescription() {
    let mesh = toy_rigid_mesh();
    let reduced = reduce_rigid(&assemble_stiffness(&mesh, &MaterialParams::default()).unwrap(), &mesh).unwrap();
    let presc = toy_prescription(&mesh);
    let alpha = -2.5;
    let scaled: BTreeMap<usize, Vec3> = presc.iter().map(|(&k, v)| (k, v * alpha)).collect();
    let a = solve_step(&reduced, &presc, &mesh.fixed_nodes).unwrap();
    let b = solve_step(&reduced, &scaled, &mesh.fixed_nodes).unwrap();
    for (x, y) in a.field.iter().zip(&b.field) {
        assert!((x * alpha - y).norm() < 1e-12 * (1.0 + y.norm()));
    }
}

#[test]
fn surrounding_translation_carries_rigid_block() {
    let mesh = toy_rigid_mesh();
    let reduced = reduce_rigid(&assemble_stiffness(&mesh, &MaterialParams::default()).unwrap(), &mesh).unwrap();
    let v = Vec3::new(0.3, -0.1, 0.7);
    let presc: BTreeMap<usize, Vec3> = (0..mesh.node_count())
        .filter(|&i| !mesh.node_labels[i].is_rigid())
        .map(|i| (i, v))
        .collect();
    let sol = solve_step(&reduced, &presc, &[]).unwrap();
    for m in &sol.motions {
        assert!((m.translation - v).norm() < 1e-10);
        assert!(m.rotation.norm() < 1e-10);
    }
}

#[test]
fn unsupported_mesh_is_singular() {
    let mesh = toy_rigid_mesh();
    let reduced = reduce_rigid(&assemble_stiffness(&mesh, &MaterialParams::default()).unwrap(), &mesh).unwrap();
    let presc: BTreeMap<usize, Vec3> = [(mesh.back_surface_nodes[0], Vec3::new(0.0, 0.0, -1.0))].into();
    let err = solve_step(&reduced, &presc, &[]).unwrap_err();
    assert!(matches!(err, mixpinn::Error::SingularSystem { .. }), "{err}");
}

#[test]
fn prescribed_and_fixed_must_be_disjoint() {
    let mesh = toy_rigid_mesh();
    let reduced = reduce_rigid(&assemble_stiffness(&mesh, &MaterialParams::default()).unwrap(), &mesh).unwrap();
    let presc: BTreeMap<usize, Vec3> = [(mesh.fixed_nodes[0], Vec3::zeros())].into();
    assert!(solve_step(&reduced, &presc, &mesh.fixed_nodes).is_err());
}

fn single_position_sweep(geometry_update: bool) -> (Mesh, SweepResult) {
    let mesh = center_mesh(&generate_phantom(&PhantomConfig::default()).unwrap());
    let cfg = SweepConfig {
        geometry: ProbeGeometry {
            grid: [1, 1],
            ..ProbeGeometry::default()
        },
        depth_steps: 20,
        geometry_update,
        ..SweepConfig::default()
    };
    let res = run_sweep(&mesh, &cfg).unwrap();
    (mesh, res)
}

#[test]
fn sweep_invariants_single_position() {
    for geometry_update in [true, false] {
        let (mesh, res) = single_position_sweep(geometry_update);
        assert!(res.failures.is_empty());
        let samples = &res.dataset.samples;
        assert_eq!(samples.len(), 80);
        let rigid_edges: Vec<[usize; 2]> = mesh
            .edges
            .iter()
            .zip(&mesh.edge_labels)
            .filter(|(_, l)| l.is_rigid())
            .map(|(e, _)| *e)
            .collect();
        for s in samples {
            let change = max_relative_edge_change(&rigid_edges, &mesh.rest_positions, &s.ground_truth);
            assert!(change <= 1e-9, "rigid change {change:e}");
            for (k, &c) in s.contact_nodes.iter().enumerate() {
                assert_eq!(s.ground_truth[c], s.prescribed[k]);
            }
            for &f in &mesh.fixed_nodes {
                assert_eq!(s.ground_truth[f], Vec3::zeros());
            }
        }
        // Mean displacement norm is nondecreasing with depth for each pose.
        for pose in samples.chunks(20) {
            let means: Vec<f64> = pose
                .iter()
                .map(|s| s.ground_truth.iter().map(|u| u.norm()).sum::<f64>() / mesh.node_count() as f64)
                .collect();
            assert!(means.windows(2).all(|w| w[1] >= w[0]), "{means:?}");
            assert!(pose.iter().enumerate().all(|(k, s)| s.pose.depth == k as u32 + 1));
        }
    }
}

#[test]
fn sweep_pose_bookkeeping() {
    let geo = ProbeGeometry::default();
    assert_eq!(grid_positions(&geo).len() * 4 * 10, 960);
    let full = ProbeGeometry {
        grid: [12, 11],
        ..geo
    };
    assert_eq!(grid_positions(&full).len() * 4, 528);
}

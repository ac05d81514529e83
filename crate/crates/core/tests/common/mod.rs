//! Reference solvers shared by the oracle and acceptance targets.
#![allow(dead_code)]

use std::collections::BTreeMap;

use mixpinn::mesh::{center_mesh, generate_phantom, Aabb, Face, Mesh, PhantomConfig, Vec3};
use mixpinn::oracle::*;
use nalgebra::{DMatrix, DVector, Matrix3};

pub fn toy_rigid_mesh() -> Mesh {
    let cfg = PhantomConfig {
        size: [40.0, 30.0, 30.0],
        cells: [4, 3, 3],
        inclusions: vec![
            Aabb::new([5.0, 5.0, 5.0], [15.0, 25.0, 25.0]),
            Aabb::new([25.0, 5.0, 5.0], [35.0, 25.0, 25.0]),
        ],
        fixed_face: Face::ZMin,
        seed: 0,
    };
    center_mesh(&generate_phantom(&cfg).unwrap())
}

pub fn toy_prescription(mesh: &Mesh) -> BTreeMap<usize, Vec3> {
    mesh.back_surface_nodes
        .iter()
        .enumerate()
        .filter(|(k, _)| k % 3 == 0)
        .map(|(k, &v)| (v, Vec3::new(0.1 * (k % 2) as f64, -0.2, -1.0 - 0.05 * k as f64)))
        .collect()
}

/// KKT system over (u, q, λ): rigid rows u_i − T_i q = 0, Dirichlet rows u_i = g.
pub fn lagrange_solve(mesh: &Mesh, prescribed: &BTreeMap<usize, Vec3>) -> Vec<Vec3> {
    let k = assemble_stiffness(mesh, &MaterialParams::default()).unwrap().to_dense();
    let n = mesh.node_count();
    let comps = mesh.rigid_components();
    let nq = 6 * comps.len();
    let mut rows: Vec<(Vec<(usize, f64)>, f64)> = Vec::new();
    for (c, nodes) in comps.iter().enumerate() {
        let centroid = nodes.iter().fold(Vec3::zeros(), |a, &i| a + mesh.rest_positions[i])
            / nodes.len() as f64;
        for &i in nodes {
            let d = mesh.rest_positions[i] - centroid;
            let neg_cross: Matrix3<f64> = -d.cross_matrix();
            for a in 0..3 {
                let mut coeffs = vec![(3 * i + a, 1.0), (3 * n + 6 * c + a, -1.0)];
                for b in 0..3 {
                    coeffs.push((3 * n + 6 * c + 3 + b, -neg_cross[(a, b)]));
                }
                rows.push((coeffs, 0.0));
            }
        }
    }
    for &i in &mesh.fixed_nodes {
        for a in 0..3 {
            rows.push((vec![(3 * i + a, 1.0)], 0.0));
        }
    }
    for (&i, g) in prescribed {
        for a in 0..3 {
            rows.push((vec![(3 * i + a, 1.0)], g[a]));
        }
    }
    let nu = 3 * n + nq;
    let dim = nu + rows.len();
    let mut kkt = DMatrix::zeros(dim, dim);
    let mut rhs = DVector::zeros(dim);
    for r in 0..3 * n {
        for c in 0..3 * n {
            kkt[(r, c)] = k[(r, c)];
        }
    }
    for (m, (coeffs, g)) in rows.iter().enumerate() {
        for &(col, v) in coeffs {
            kkt[(nu + m, col)] += v;
            kkt[(col, nu + m)] += v;
        }
        rhs[nu + m] = *g;
    }
    let x = kkt.lu().solve(&rhs).expect("KKT system solvable");
    (0..n).map(|i| Vec3::new(x[3 * i], x[3 * i + 1], x[3 * i + 2])).collect()
}

/// Max relative error of the reduced solve against the KKT brute force on
/// the two-inclusion toy mesh.
pub fn lagrange_agreement() -> (usize, f64) {
    let mesh = toy_rigid_mesh();
    let reduced = reduce_rigid(&assemble_stiffness(&mesh, &MaterialParams::default()).unwrap(), &mesh).unwrap();
    let presc = toy_prescription(&mesh);
    let sol = solve_step(&reduced, &presc, &mesh.fixed_nodes).unwrap();
    let brute = lagrange_solve(&mesh, &presc);
    let scale = brute.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let err = sol.field.iter().zip(&brute).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    (mesh.node_count(), err / scale)
}

pub struct PatchErrors {
    /// Displacement error / ε.
    pub displacement: f64,
    /// Strain component error / ε.
    pub strain: f64,
    /// Stress error / (E ε).
    pub stress: f64,
}

/// Uniaxial stretch ε along x with free lateral contraction, prescribed on
/// the boundary of a 4×4×4-cell unit cube; interior solved.
pub fn uniaxial_patch(eps: f64) -> PatchErrors {
    let cfg = PhantomConfig {
        size: [1.0, 1.0, 1.0],
        cells: [4, 4, 4],
        inclusions: vec![],
        fixed_face: Face::ZMin,
        seed: 0,
    };
    let mesh = generate_phantom(&cfg).unwrap();
    let material = MaterialParams::default();
    let (nu, e) = (material.poisson_ratio, material.young_modulus);
    let exact = |p: &Vec3| Vec3::new(eps * p.x, -nu * eps * p.y, -nu * eps * p.z);
    let on_boundary = |p: &Vec3| p.iter().any(|&c| c == 0.0 || c == 1.0);
    let presc: BTreeMap<usize, Vec3> = mesh
        .rest_positions
        .iter()
        .enumerate()
        .filter(|(_, p)| on_boundary(p))
        .map(|(i, p)| (i, exact(p)))
        .collect();
    assert!(presc.len() < mesh.node_count());
    let reduced = reduce_rigid(&assemble_stiffness(&mesh, &material).unwrap(), &mesh).unwrap();
    let sol = solve_step(&reduced, &presc, &[]).unwrap();
    let mut out = PatchErrors {
        displacement: 0.0,
        strain: 0.0,
        stress: 0.0,
    };
    for (p, u) in mesh.rest_positions.iter().zip(&sol.field) {
        out.displacement = out.displacement.max((u - exact(p)).norm() / eps);
    }
    let (lambda, mu) = material.lame();
    for &tet in &mesh.tetrahedra {
        let (grads, _) = shape_gradients(&mesh.rest_positions, tet, 0).unwrap();
        let strain = element_strain(&grads, &tet.map(|v| sol.field[v]));
        let expected = [eps, -nu * eps, -nu * eps, 0.0, 0.0, 0.0];
        for k in 0..6 {
            out.strain = out.strain.max((strain[k] - expected[k]).abs() / eps);
        }
        let tr = strain[0] + strain[1] + strain[2];
        let sxx = lambda * tr + 2.0 * mu * strain[0];
        let syy = lambda * tr + 2.0 * mu * strain[1];
        let szz = lambda * tr + 2.0 * mu * strain[2];
        let dev = (sxx - e * eps).abs().max(syy.abs()).max(szz.abs());
        out.stress = out.stress.max(dev / (e * eps));
    }
    out
}

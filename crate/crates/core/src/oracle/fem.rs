//! Constant-strain tetrahedra, isotropic linear elasticity.

use nalgebra::Matrix3;

use super::sparse::SymSparse;
use super::MaterialParams;
use crate::error::{Error, Result};
use crate::mesh::{Mesh, Vec3};

/// Shape-function gradients and volume of a linear tetrahedron.
pub fn shape_gradients(pos: &[Vec3], tet: [usize; 4], index: usize) -> Result<([Vec3; 4], f64)> {
    let [x0, x1, x2, x3] = tet.map(|v| pos[v]);
    let jac = Matrix3::from_columns(&[x1 - x0, x2 - x0, x3 - x0]);
    let det = jac.determinant();
    let volume = det / 6.0;
    if !(volume > 0.0) {
        return Err(Error::InvertedTet { tet: index, volume });
    }
    let inv = jac
        .try_inverse()
        .ok_or(Error::InvertedTet { tet: index, volume })?;
    let g1 = inv.row(0).transpose();
    let g2 = inv.row(1).transpose();
    let g3 = inv.row(2).transpose();
    Ok(([-(g1 + g2 + g3), g1, g2, g3], volume))
}

/// 12x12 element stiffness, block (a, b) = V (λ g_a g_bᵀ + μ g_b g_aᵀ + μ (g_a·g_b) I).
pub fn element_stiffness(grads: &[Vec3; 4], volume: f64, material: &MaterialParams) -> [[f64; 12]; 12] {
    let (lambda, mu) = material.lame();
    let mut k = [[0.0; 12]; 12];
    for a in 0..4 {
        for b in 0..4 {
            let ga = grads[a];
            let gb = grads[b];
            let gg = ga.dot(&gb);
            for i in 0..3 {
                for j in 0..3 {
                    let mut v = lambda * ga[i] * gb[j] + mu * gb[i] * ga[j];
                    if i == j {
                        v += mu * gg;
                    }
                    k[3 * a + i][3 * b + j] = volume * v;
                }
            }
        }
    }
    k
}

/// Global stiffness over all 3N nodal DOFs at the mesh's rest positions.
pub fn assemble_stiffness(mesh: &Mesh, material: &MaterialParams) -> Result<SymSparse> {
    assemble_stiffness_at(&mesh.rest_positions, &mesh.tetrahedra, material)
}

/// Global stiffness assembled on arbitrary nodal positions (used for
/// updated-geometry increments).
pub fn assemble_stiffness_at(
    positions: &[Vec3],
    tets: &[[usize; 4]],
    material: &MaterialParams,
) -> Result<SymSparse> {
    material.validate()?;
    let mut trip = Vec::with_capacity(tets.len() * 144);
    for (t, &tet) in tets.iter().enumerate() {
        let (grads, vol) = shape_gradients(positions, tet, t)?;
        let ke = element_stiffness(&grads, vol, material);
        for a in 0..4 {
            for i in 0..3 {
                let r = 3 * tet[a] + i;
                for b in 0..4 {
                    for j in 0..3 {
                        trip.push((r, 3 * tet[b] + j, ke[3 * a + i][3 * b + j]));
                    }
                }
            }
        }
    }
    Ok(SymSparse::from_triplets(3 * positions.len(), trip))
}

/// Small-strain tensor (Voigt: xx, yy, zz, 2xy, 2yz, 2zx) of one element.
pub fn element_strain(grads: &[Vec3; 4], disp: &[Vec3; 4]) -> [f64; 6] {
    let mut grad_u = Matrix3::zeros();
    for a in 0..4 {
        grad_u += disp[a] * grads[a].transpose();
    }
    [
        grad_u[(0, 0)],
        grad_u[(1, 1)],
        grad_u[(2, 2)],
        grad_u[(0, 1)] + grad_u[(1, 0)],
        grad_u[(1, 2)] + grad_u[(2, 1)],
        grad_u[(2, 0)] + grad_u[(0, 2)],
    ]
}

use std::collections::BTreeMap;

use super::rigid::{NodeDof, ReducedSystem, RigidMotion};
use super::sparse::{rcm_order, EnvelopeCholesky, SymSparse};
use crate::error::{Error, Result};
use crate::mesh::Vec3;

/// Linear solve tolerance on the relative residual.
pub const SOLVE_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct StepSolution {
    /// Per-node displacement; rigid nodes by the linearized rigid map.
    pub field: Vec<Vec3>,
    pub motions: Vec<RigidMotion>,
    pub relative_residual: f64,
}

/// Factorization of the reduced system with a fixed set of Dirichlet nodes,
/// reusable for any prescribed values on that set.
#[derive(Debug)]
pub struct DirichletSolver<'a> {
    system: &'a ReducedSystem,
    constrained: Vec<usize>,
    free: Vec<usize>,
    kff: SymSparse,
    chol: EnvelopeCholesky,
}

impl<'a> DirichletSolver<'a> {
    /// `constrained`: soft nodes whose three DOFs are prescribed.
    pub fn new(system: &'a ReducedSystem, constrained: &[usize]) -> Result<Self> {
        let map = &system.map;
        let m = map.reduced_dim();
        let mut is_constrained = vec![false; m];
        let mut nodes = constrained.to_vec();
        nodes.sort_unstable();
        nodes.dedup();
        for &node in &nodes {
            match map.node_dof.get(node) {
                Some(NodeDof::Soft(b)) => is_constrained[*b..*b + 3].fill(true),
                Some(NodeDof::Rigid(c)) => {
                    return Err(Error::Invalid(format!(
                        "node {node} belongs to rigid component {} and cannot carry a Dirichlet condition",
                        c + 1
                    )))
                }
                None => return Err(Error::Invalid(format!("boundary node {node} out of range"))),
            }
        }
        let free: Vec<usize> = (0..m).filter(|&d| !is_constrained[d]).collect();
        let kff = system.matrix.submatrix(&free);
        let tail: Vec<usize> = (free.len() - (m - map.soft_dofs)..free.len()).collect();
        let perm = rcm_order(&kff, &tail);
        let chol = EnvelopeCholesky::factor(&kff, perm).map_err(|e| match e {
            Error::SingularSystem { pivot } => Error::SingularSystem { pivot: free[pivot] },
            other => other,
        })?;
        Ok(DirichletSolver {
            system,
            constrained: nodes,
            free,
            kff,
            chol,
        })
    }

    /// Solves with the given values on the constrained nodes (missing → zero).
    pub fn solve(&self, values: &BTreeMap<usize, Vec3>) -> Result<StepSolution> {
        let map = &self.system.map;
        let m = map.reduced_dim();
        let mut q = vec![0.0; m];
        for (&node, v) in values {
            if self.constrained.binary_search(&node).is_err() {
                return Err(Error::Invalid(format!("node {node} is not a constrained node of this solver")));
            }
            let NodeDof::Soft(b) = map.node_dof[node] else { unreachable!("checked at construction") };
            q[b..b + 3].copy_from_slice(v.as_slice());
        }
        let mut is_free = vec![usize::MAX; m];
        for (k, &d) in self.free.iter().enumerate() {
            is_free[d] = k;
        }
        let mut rhs = vec![0.0; self.free.len()];
        for (k, &d) in self.free.iter().enumerate() {
            rhs[k] = -self
                .system
                .matrix
                .row(d)
                .filter(|&(c, _)| is_free[c] == usize::MAX)
                .map(|(c, v)| v * q[c])
                .sum::<f64>();
        }
        let mut x = self.chol.solve(&rhs);
        let bnorm = norm(&rhs);
        let mut rel = 0.0;
        if bnorm > 0.0 {
            rel = self.residual(&x, &rhs) / bnorm;
            if rel > SOLVE_TOLERANCE {
                // One step of iterative refinement.
                let ax = self.kff.matvec(&x);
                let r: Vec<f64> = rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
                let dx = self.chol.solve(&r);
                for (xi, di) in x.iter_mut().zip(&dx) {
                    *xi += di;
                }
                rel = self.residual(&x, &rhs) / bnorm;
            }
            if !(rel <= SOLVE_TOLERANCE) {
                return Err(Error::Numerical(format!(
                    "linear solve relative residual {rel:e} exceeds {SOLVE_TOLERANCE:e}"
                )));
            }
        }
        for (k, &d) in self.free.iter().enumerate() {
            q[d] = x[k];
        }
        Ok(StepSolution {
            field: map.expand_linear(&q),
            motions: map.motions(&q),
            relative_residual: rel,
        })
    }

    fn residual(&self, x: &[f64], b: &[f64]) -> f64 {
        let ax = self.kff.matvec(x);
        norm(&ax.iter().zip(b).map(|(a, b)| a - b).collect::<Vec<_>>())
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Quasi-static equilibrium with prescribed displacements and fixed nodes.
pub fn solve_step(
    system: &ReducedSystem,
    prescribed: &BTreeMap<usize, Vec3>,
    fixed: &[usize],
) -> Result<StepSolution> {
    if let Some(&n) = fixed.iter().find(|n| prescribed.contains_key(n)) {
        return Err(Error::Invalid(format!("node {n} is both fixed and prescribed")));
    }
    let constrained: Vec<usize> = prescribed.keys().copied().chain(fixed.iter().copied()).collect();
    DirichletSolver::new(system, &constrained)?.solve(prescribed)
}

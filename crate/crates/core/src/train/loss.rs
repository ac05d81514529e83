use std::sync::Arc;

use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::graph::{GraphTopology, RigidEdge};

/// Mean Euclidean error over all rows of `pred` vs `target`.
pub fn loss_mee(tape: &mut Tape, pred: Var, target: Var) -> Result<Var> {
    let diff = tape.sub(pred, target)?;
    let norms = tape.l2_rows(diff)?;
    tape.mean(norms)
}

/// Mean Euclidean error restricted to `nodes`.
pub fn loss_mee_on(tape: &mut Tape, pred: Var, target: Var, nodes: Arc<[usize]>) -> Result<Var> {
    if nodes.is_empty() {
        return Err(Error::Invalid("MEE over an empty node set".into()));
    }
    let p = tape.gather_rows(pred, nodes.clone())?;
    let t = tape.gather_rows(target, nodes)?;
    loss_mee(tape, p, t)
}

/// Mean squared deviation of predicted rigid edge lengths from rest lengths.
/// Returns `None` for an empty registry.
pub fn loss_rel(tape: &mut Tape, topo: &GraphTopology, edges: &[&RigidEdge], pred: Var) -> Result<Option<Var>> {
    if edges.is_empty() {
        return Ok(None);
    }
    let a: Arc<[usize]> = edges.iter().map(|e| e.nodes[0]).collect();
    let b: Arc<[usize]> = edges.iter().map(|e| e.nodes[1]).collect();
    let rest_diff = Tensor::from_fn(edges.len(), 3, |k, c| {
        topo.rest_positions[edges[k].nodes[0]][c] - topo.rest_positions[edges[k].nodes[1]][c]
    });
    let rest_len = Tensor::column(edges.iter().map(|e| e.rest_length).collect());
    let pa = tape.gather_rows(pred, a)?;
    let pb = tape.gather_rows(pred, b)?;
    let du = tape.sub(pa, pb)?;
    let rd = tape.constant(rest_diff);
    let d = tape.add(rd, du)?;
    let len = tape.l2_rows(d)?;
    let c = tape.constant(rest_len);
    let dev = tape.sub(len, c)?;
    let sq = tape.square(dev)?;
    Ok(Some(tape.mean(sq)?))
}

pub struct LossTerms {
    pub total: Var,
    pub mee: Var,
    pub rel: Option<Var>,
}

/// MEE over every node (virtual ones included) plus `lambda` × REL.
pub fn total_loss(
    tape: &mut Tape,
    topo: &GraphTopology,
    pred: Var,
    target: &Tensor,
    lambda: f64,
    rel_edges: &[&RigidEdge],
) -> Result<LossTerms> {
    let t = tape.constant(target.clone());
    let mee = loss_mee(tape, pred, t)?;
    if lambda == 0.0 {
        return Ok(LossTerms { total: mee, mee, rel: None });
    }
    let rel = loss_rel(tape, topo, rel_edges, pred)?;
    let total = match rel {
        Some(r) => {
            let w = tape.scale(r, lambda)?;
            tape.add(mee, w)?
        }
        None => {
            log::warn!("rigid edge loss requested but the registry is empty");
            mee
        }
    };
    Ok(LossTerms { total, mee, rel })
}

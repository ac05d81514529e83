use std::time::Instant;

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::graph::{rigid_edge_residuals, GraphSample};
use crate::model::{predict, ModelParams};

/// Split-averaged error metrics over real (mesh) nodes, in mm and mm².
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MetricsReport {
    pub mee: f64,
    pub mae: f64,
    pub mse: f64,
    pub rigid_mee: f64,
    pub soft_mee: f64,
    pub ree: f64,
    pub samples: usize,
    /// Mean wall-clock inference time per sample.
    pub infer_ms: f64,
}

/// Metrics of one prediction. Only the first `real_node_count` rows count.
pub fn sample_metrics(graph: &GraphSample, pred: &Tensor) -> MetricsReport {
    let topo = &graph.topology;
    let n = graph.real_node_count();
    let (mut sum_e, mut sum_a, mut sum_s) = (0.0, 0.0, 0.0);
    let (mut rigid, mut soft) = ((0.0, 0usize), (0.0, 0usize));
    for i in 0..n {
        let (p, t) = (pred.row(i), graph.targets.row(i));
        let e = [p[0] - t[0], p[1] - t[1], p[2] - t[2]];
        let sq = e.iter().map(|v| v * v).sum::<f64>();
        let norm = sq.sqrt();
        sum_e += norm;
        sum_a += e.iter().map(|v| v.abs()).sum::<f64>();
        sum_s += sq;
        let bucket = if topo.node_labels[i].is_rigid() { &mut rigid } else { &mut soft };
        bucket.0 += norm;
        bucket.1 += 1;
    }
    let residuals = rigid_edge_residuals(topo, topo.mesh_rigid_edges(), pred);
    let ree = if residuals.is_empty() {
        0.0
    } else {
        residuals.iter().map(|(c, d)| (c - d).abs()).sum::<f64>() / residuals.len() as f64
    };
    let mean = |(s, k): (f64, usize)| if k == 0 { 0.0 } else { s / k as f64 };
    let nf = n.max(1) as f64;
    MetricsReport {
        mee: sum_e / nf,
        mae: sum_a / nf,
        mse: sum_s / nf,
        rigid_mee: mean(rigid),
        soft_mee: mean(soft),
        ree,
        samples: 1,
        infer_ms: 0.0,
    }
}

/// Equal-weight average of per-sample reports.
pub fn average(reports: &[MetricsReport]) -> Result<MetricsReport> {
    if reports.is_empty() {
        return Err(Error::Invalid("cannot evaluate an empty split".into()));
    }
    let k = reports.len() as f64;
    let avg = |f: fn(&MetricsReport) -> f64| reports.iter().map(f).sum::<f64>() / k;
    Ok(MetricsReport {
        mee: avg(|r| r.mee),
        mae: avg(|r| r.mae),
        mse: avg(|r| r.mse),
        rigid_mee: avg(|r| r.rigid_mee),
        soft_mee: avg(|r| r.soft_mee),
        ree: avg(|r| r.ree),
        samples: reports.len(),
        infer_ms: avg(|r| r.infer_ms),
    })
}

pub fn evaluate(params: &ModelParams, graphs: &[GraphSample]) -> Result<MetricsReport> {
    let mut reports = Vec::with_capacity(graphs.len());
    for g in graphs {
        let start = Instant::now();
        let pred = predict(params, g)?;
        let ms = start.elapsed().as_secs_f64() * 1e3;
        if !pred.is_finite() {
            return Err(Error::Numerical("model produced non-finite predictions".into()));
        }
        let mut r = sample_metrics(g, &pred);
        r.infer_ms = ms;
        reports.push(r);
    }
    average(&reports)
}

/// Metrics of the all-zero predictor; its MEE is the mean ground-truth norm.
pub fn zero_predictor(graphs: &[GraphSample]) -> Result<MetricsReport> {
    let reports: Vec<MetricsReport> = graphs
        .iter()
        .map(|g| sample_metrics(g, &Tensor::zeros(g.node_count(), 3)))
        .collect();
    average(&reports)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::random_graph;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn perfect_prediction_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut g = random_graph(&mut rng, 7, 0.3, 1);
        // Rigid nodes 0 and 1 share one translation, as ground truth would.
        let t0 = g.targets.row(0).to_vec();
        g.targets.row_mut(1).copy_from_slice(&t0);
        let r = sample_metrics(&g, &g.targets);
        assert_eq!((r.mee, r.mae, r.mse, r.rigid_mee, r.soft_mee), (0.0, 0.0, 0.0, 0.0, 0.0));
        assert!(r.ree < 1e-15);
    }

    #[test]
    fn single_node_error_one_two_two() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut g = random_graph(&mut rng, 1, 0.0, 0);
        g.targets = Tensor::zeros(1, 3);
        let pred = Tensor::from_vec(1, 3, vec![1.0, -2.0, 2.0]).unwrap();
        let r = sample_metrics(&g, &pred);
        assert_eq!((r.mee, r.mae, r.mse), (3.0, 5.0, 9.0));
    }

    #[test]
    fn mee_lies_between_rigid_and_soft() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = random_graph(&mut rng, 12, 0.2, 1);
        let r = sample_metrics(&g, &Tensor::zeros(12, 3));
        assert!(r.mee >= r.rigid_mee.min(r.soft_mee) && r.mee <= r.rigid_mee.max(r.soft_mee));
        assert!(average(&[]).is_err());
    }
}

//! Losses, optimizer, schedules, position-held-out splits, metrics, the
//! training loop and the ablation grid.

mod ablation;
mod loss;
mod metrics;
mod optim;
mod schedule;
mod split;
mod trainer;

pub use ablation::{write_metrics_row, AblationRow, ABLATION_GRID, METRICS_HEADER};
pub use loss::{loss_mee, loss_mee_on, loss_rel, total_loss, LossTerms};
pub use metrics::{average, evaluate, sample_metrics, zero_predictor, MetricsReport};
pub use optim::AdamW;
pub use schedule::{EarlyStopping, PlateauScheduler};
pub use split::{split_by_position, PositionSplit};
pub use trainer::{sample_loss, train, EpochRecord, TrainConfig, TrainOutcome};

use crate::error::Result;
use crate::graph::{GraphBuilder, GraphOptions, GraphSample};
use crate::mesh::Mesh;
use crate::model::{ModelConfig, ModelParams};
use crate::oracle::Dataset;

pub const SPLIT_RATIOS: [f64; 3] = [0.7, 0.2, 0.1];

/// Graphs of one dataset split three ways by probe position.
pub struct SplitGraphs {
    pub train: Vec<GraphSample>,
    pub val: Vec<GraphSample>,
    pub test: Vec<GraphSample>,
    pub split: PositionSplit,
}

pub fn build_split(
    mesh: &Mesh,
    dataset: &Dataset,
    options: GraphOptions,
    split_seed: u64,
    jobs: usize,
) -> Result<SplitGraphs> {
    let positions: Vec<_> = dataset.samples.iter().map(|s| s.pose.position).collect();
    let split = split_by_position(&positions, SPLIT_RATIOS, split_seed)?;
    let graphs = GraphBuilder::new(mesh, options)?.build_dataset(mesh, dataset, jobs)?;
    let [tr, va, te] = split.partition(&positions);
    let pick = |idx: &[usize]| idx.iter().map(|&k| graphs[k].clone()).collect::<Vec<_>>();
    Ok(SplitGraphs {
        train: pick(&tr),
        val: pick(&va),
        test: pick(&te),
        split,
    })
}

/// Trained model and its test-split metrics (best-validation checkpoint).
pub struct ExperimentResult {
    pub outcome: TrainOutcome,
    pub test: MetricsReport,
}

pub fn run_experiment(model: &ModelConfig, cfg: &TrainConfig, data: &SplitGraphs) -> Result<ExperimentResult> {
    let outcome = train(model, cfg, &data.train, &data.val, |r| {
        log::info!(
            "epoch {:>4}  train {:.5}  val {:.5}  val_mee {:.5}  lr {:.2e}",
            r.epoch,
            r.train_loss,
            r.val_loss,
            r.val_mee,
            r.lr
        )
    })?;
    let test = evaluate(&outcome.best, &data.test)?;
    Ok(ExperimentResult { outcome, test })
}

/// Model/training configuration of one ablation row derived from a base.
pub fn ablation_configs(
    row: &AblationRow,
    model: &ModelConfig,
    cfg: &TrainConfig,
) -> (ModelConfig, TrainConfig, GraphOptions) {
    let m = ModelConfig {
        heads: row.heads,
        use_edge_features: row.edge_features,
        ..model.clone()
    };
    let t = TrainConfig { rel: row.rel, ..cfg.clone() };
    let g = GraphOptions {
        virtual_nodes: row.virtual_nodes,
        virtual_edges: row.virtual_edges,
    };
    (m, t, g)
}

/// Result of one ablation row; failures are kept so the others can proceed.
pub struct AblationResult {
    pub row: AblationRow,
    pub result: Result<(MetricsReport, ModelParams)>,
}

/// Trains every row of `rows` on the same split, logging and keeping failures.
pub fn run_ablation(
    rows: &[AblationRow],
    model: &ModelConfig,
    cfg: &TrainConfig,
    mesh: &Mesh,
    dataset: &Dataset,
    split_seed: u64,
    jobs: usize,
) -> Vec<AblationResult> {
    rows.iter()
        .map(|row| {
            let (m, t, g) = ablation_configs(row, model, cfg);
            log::info!("ablation row {}: {row:?}", row.experiment);
            let result = build_split(mesh, dataset, g, split_seed, jobs)
                .and_then(|data| run_experiment(&m, &t, &data))
                .map(|r| (r.test, r.outcome.best));
            if let Err(e) = &result {
                log::error!("ablation row {} failed: {e}", row.experiment);
            }
            AblationResult { row: *row, result }
        })
        .collect()
}

#[cfg(test)]
mod tests;

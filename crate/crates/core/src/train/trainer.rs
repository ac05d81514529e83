use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::loss::total_loss;
use super::optim::AdamW;
use super::schedule::{EarlyStopping, PlateauScheduler};
use crate::autodiff::{Tape, Tensor};
use crate::error::{Error, Result};
use crate::graph::{GraphSample, RigidEdge};
use crate::model::{model_forward, ModelConfig, ModelParams};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub initial_lr: f64,
    pub plateau_factor: f64,
    pub plateau_patience: usize,
    pub min_lr: f64,
    pub early_stop_patience: usize,
    pub weight_decay: f64,
    /// Rigid edge loss on/off and its weight λ.
    pub rel: bool,
    pub rel_weight: f64,
    /// Whether virtual-edge additions count as rigid edges in the loss.
    pub rel_virtual_edges: bool,
    pub max_epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 4,
            initial_lr: 5e-4,
            plateau_factor: 0.1,
            plateau_patience: 5,
            min_lr: 1e-8,
            early_stop_patience: 15,
            weight_decay: 0.01,
            rel: false,
            rel_weight: 1.0,
            rel_virtual_edges: true,
            max_epochs: 100,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.initial_lr, self.min_lr, self.plateau_factor];
        if positive.iter().any(|v| !(*v > 0.0)) || !(self.weight_decay >= 0.0) || !(self.rel_weight >= 0.0) {
            return Err(Error::Config("learning rates and factors must be positive, decay and λ non-negative".into()));
        }
        if self.batch_size == 0 || self.plateau_patience == 0 || self.early_stop_patience == 0 || self.max_epochs == 0 {
            return Err(Error::Config("batch size, patience values and max epochs must be at least 1".into()));
        }
        Ok(())
    }

    pub fn lambda(&self) -> f64 {
        if self.rel {
            self.rel_weight
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_mee: f64,
    pub val_loss: f64,
    pub val_mee: f64,
    pub lr: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters at the epoch with the lowest validation loss.
    pub best: ModelParams,
    pub best_epoch: usize,
    pub curve: Vec<EpochRecord>,
    pub stopped_early: bool,
}

fn rel_edges<'a>(g: &'a GraphSample, cfg: &TrainConfig) -> Vec<&'a RigidEdge> {
    if cfg.lambda() == 0.0 {
        return Vec::new();
    }
    g.topology.rel_edges(cfg.rel_virtual_edges).collect()
}

/// Loss terms and (optionally) gradients for one graph.
pub fn sample_loss(
    params: &ModelParams,
    graph: &GraphSample,
    cfg: &TrainConfig,
    with_grads: bool,
) -> Result<(f64, f64, Option<Vec<Tensor>>)> {
    let mut tape = Tape::new();
    let vars = params.register(&mut tape, with_grads);
    let fwd = model_forward(&mut tape, &params.config, graph, &vars)?;
    let edges = rel_edges(graph, cfg);
    let terms = total_loss(&mut tape, &graph.topology, fwd.output, &graph.targets, cfg.lambda(), &edges)?;
    let total = tape.value(terms.total).item();
    let mee = tape.value(terms.mee).item();
    if !total.is_finite() {
        return Err(Error::Numerical(format!("loss became non-finite ({total})")));
    }
    let grads = if with_grads {
        let g = tape.backward(terms.total)?;
        Some(vars.iter().map(|&v| g.wrt(v)).collect())
    } else {
        None
    };
    Ok((total, mee, grads))
}

fn mean_loss(params: &ModelParams, graphs: &[GraphSample], cfg: &TrainConfig) -> Result<(f64, f64)> {
    let (mut t, mut m) = (0.0, 0.0);
    for g in graphs {
        let (a, b, _) = sample_loss(params, g, cfg, false)?;
        t += a;
        m += b;
    }
    let k = graphs.len().max(1) as f64;
    Ok((t / k, m / k))
}

/// Mini-batch AdamW with per-epoch shuffling, plateau decay and early
/// stopping on the validation loss (training loss if `val` is empty).
pub fn train(
    model: &ModelConfig,
    cfg: &TrainConfig,
    train_set: &[GraphSample],
    val_set: &[GraphSample],
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::Invalid("training split is empty".into()));
    }
    let mut params = ModelParams::init(model)?;
    let mut opt = AdamW::new(&params.tensors, cfg.weight_decay);
    let mut sched = PlateauScheduler::new(cfg.initial_lr, cfg.plateau_factor, cfg.plateau_patience, cfg.min_lr);
    let mut stopper = EarlyStopping::new(cfg.early_stop_patience);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut lr = cfg.initial_lr;
    let mut curve = Vec::new();
    let mut best = params.clone();
    let mut best_epoch = 0;
    let mut stopped_early = false;

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let (mut sum_loss, mut sum_mee) = (0.0, 0.0);
        for batch in order.chunks(cfg.batch_size) {
            let mut acc: Option<Vec<Tensor>> = None;
            for &k in batch {
                let (l, m, g) = sample_loss(&params, &train_set[k], cfg, true)?;
                sum_loss += l;
                sum_mee += m;
                let g = g.expect("gradients requested");
                match &mut acc {
                    None => acc = Some(g),
                    Some(a) => {
                        for (x, y) in a.iter_mut().zip(&g) {
                            for (p, q) in x.data_mut().iter_mut().zip(y.data()) {
                                *p += q;
                            }
                        }
                    }
                }
            }
            let mut grads = acc.expect("batches are nonempty");
            let inv = 1.0 / batch.len() as f64;
            for g in &mut grads {
                for v in g.data_mut() {
                    *v *= inv;
                }
            }
            opt.step(&mut params.tensors, &grads, lr);
        }
        let n = train_set.len() as f64;
        let (train_loss, train_mee) = (sum_loss / n, sum_mee / n);
        let (val_loss, val_mee) = if val_set.is_empty() {
            mean_loss(&params, train_set, cfg)?
        } else {
            mean_loss(&params, val_set, cfg)?
        };
        if !val_loss.is_finite() {
            return Err(Error::Numerical(format!("validation loss diverged at epoch {epoch}")));
        }
        let record = EpochRecord {
            epoch,
            train_loss,
            train_mee,
            val_loss,
            val_mee,
            lr,
        };
        on_epoch(&record);
        curve.push(record);
        if val_loss < stopper.best() {
            best = params.clone();
            best_epoch = epoch;
        }
        let stop = stopper.observe(val_loss);
        lr = sched.observe(val_loss);
        if stop {
            stopped_early = true;
            break;
        }
    }
    Ok(TrainOutcome {
        best,
        best_epoch,
        curve,
        stopped_early,
    })
}

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::autodiff::grad_check;
use crate::graph::{random_graph, RigidEdge};
use crate::model::model_forward;
use crate::oracle::GridPos;

fn tiny_model(layers: usize, seed: u64) -> ModelConfig {
    ModelConfig {
        layers,
        heads: 2,
        hidden: 6,
        use_edge_features: true,
        negative_slope: 0.01,
        node_dim: 10,
        edge_dim: 2,
        length_scale: 1.0,
        seed,
    }
}

#[test]
fn mee_plus_rel_gradients_through_two_layers() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let g = random_graph(&mut rng, 8, 0.3, 1);
    let cfg = tiny_model(2, 4);
    let params = ModelParams::init(&cfg).unwrap();
    let edges: Vec<&RigidEdge> = g.topology.rigid_edges.iter().collect();
    assert!(!edges.is_empty());
    let report = grad_check(
        |tape, vars| {
            let fwd = model_forward(tape, &cfg, &g, vars)?;
            Ok(total_loss(tape, &g.topology, fwd.output, &g.targets, 1.0, &edges)?.total)
        },
        &params.tensors,
        1e-6,
        1e-4,
    )
    .unwrap();
    assert!(report.passed(), "{report:?}");
}

#[test]
fn table_three_split_sizes() {
    let positions: Vec<GridPos> = (0..12).flat_map(|i| (0..11).map(move |j| GridPos { i, j })).collect();
    let s = split_by_position(&positions, SPLIT_RATIOS, 0).unwrap();
    assert_eq!((s.train.len(), s.val.len(), s.test.len()), (93, 26, 13));
    let poses: Vec<GridPos> = positions.iter().flat_map(|&p| [p; 4]).collect();
    let parts = s.partition(&poses);
    assert_eq!(parts.map(|p| p.len()), [372, 104, 52]);
}

fn toy_sets(seed: u64) -> (Vec<GraphSample>, Vec<GraphSample>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let train: Vec<_> = (0..6).map(|_| random_graph(&mut rng, 10, 0.3, 1)).collect();
    let val: Vec<_> = (0..2).map(|_| random_graph(&mut rng, 10, 0.3, 1)).collect();
    (train, val)
}

#[test]
fn training_is_bit_deterministic() {
    let (tr, va) = toy_sets(1);
    let cfg = TrainConfig {
        max_epochs: 5,
        rel: true,
        ..TrainConfig::default()
    };
    let a = train(&tiny_model(2, 0), &cfg, &tr, &va, |_| {}).unwrap();
    let b = train(&tiny_model(2, 0), &cfg, &tr, &va, |_| {}).unwrap();
    assert_eq!(a.curve, b.curve);
    assert_eq!(a.best, b.best);
}

#[test]
fn rel_changes_the_trajectory() {
    let (tr, va) = toy_sets(2);
    let base = TrainConfig {
        max_epochs: 3,
        ..TrainConfig::default()
    };
    let with_rel = TrainConfig { rel: true, ..base.clone() };
    let a = train(&tiny_model(2, 0), &base, &tr, &va, |_| {}).unwrap();
    let b = train(&tiny_model(2, 0), &with_rel, &tr, &va, |_| {}).unwrap();
    assert_ne!(a.curve.last().unwrap().train_loss, b.curve.last().unwrap().train_loss);
}

#[test]
fn single_graph_is_memorized() {
    let (tr, _) = toy_sets(3);
    let cfg = TrainConfig {
        max_epochs: 1500,
        initial_lr: 5e-3,
        weight_decay: 0.0,
        early_stop_patience: 10_000,
        plateau_patience: 100,
        ..TrainConfig::default()
    };
    let out = train(&tiny_model(2, 1), &cfg, &tr[..1], &[], |_| {}).unwrap();
    let last = out.curve.last().unwrap();
    assert!(last.val_mee < 0.05, "memorization MEE {}", last.val_mee);
}

#[test]
fn invalid_config_rejected() {
    let (tr, va) = toy_sets(4);
    let cfg = TrainConfig {
        batch_size: 0,
        ..TrainConfig::default()
    };
    assert!(train(&tiny_model(1, 0), &cfg, &tr, &va, |_| {}).is_err());
    assert!(train(&tiny_model(1, 0), &TrainConfig::default(), &[], &va, |_| {}).is_err());
}

#[test]
fn ablation_configs_follow_rows() {
    let base = tiny_model(2, 0);
    let (m, t, g) = ablation_configs(&ABLATION_GRID[0], &base, &TrainConfig::default());
    assert_eq!((m.heads, m.use_edge_features, t.rel, g.virtual_nodes, g.virtual_edges), (1, false, false, false, false));
    let (m, t, g) = ablation_configs(&ABLATION_GRID[6], &base, &TrainConfig::default());
    assert_eq!((m.heads, m.use_edge_features, t.rel, g.virtual_nodes, g.virtual_edges), (2, true, true, true, false));
    assert_eq!(m.hidden, base.hidden);
}

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::autodiff::grad_check;
use crate::graph::{random_graph, EdgeOrigin};
use crate::mesh::{AnatomyLabel, Vec3};

fn dm(t: &Tensor) -> DMatrix<f64> {
    DMatrix::from_row_slice(t.rows(), t.cols(), t.data())
}

fn leaky(v: f64, s: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        s * v
    }
}

/// Dense replay with explicit neighbor lists.
fn dense_forward(params: &ModelParams, g: &GraphSample) -> (DMatrix<f64>, Vec<Vec<Vec<f64>>>) {
    let c = &params.config;
    let t = &g.topology;
    let n = t.node_count();
    let mut neighbors: Vec<Vec<(usize, Option<usize>)>> = vec![Vec::new(); n];
    for k in 0..t.edge_count() {
        neighbors[t.dst[k]].push((t.src[k], Some(k)));
    }
    for (i, nb) in neighbors.iter_mut().enumerate() {
        nb.push((i, None));
    }
    let mut x = dm(&g.node_features);
    let mut alphas = Vec::new();
    let mut b = params.tensors.iter();
    for _ in 0..c.layers {
        let mut cat: DMatrix<f64> = DMatrix::zeros(n, c.heads * c.hidden);
        for h in 0..c.heads {
            let theta = dm(b.next().unwrap());
            let att = dm(b.next().unwrap());
            let edge = c
                .use_edge_features
                .then(|| (dm(b.next().unwrap()), dm(b.next().unwrap())));
            let hx = &x * &theta;
            let s = &hx * &att;
            let mut alpha_all = Vec::new();
            for i in 0..n {
                let logits: Vec<f64> = neighbors[i]
                    .iter()
                    .map(|&(j, k)| {
                        let mut z = s[(i, 0)] + s[(j, 0)];
                        if let (Some((te, ae)), Some(k)) = (&edge, k) {
                            let e = DMatrix::from_row_slice(1, c.edge_dim, t.edge_features.row(k));
                            z += (e * te * ae)[(0, 0)];
                        }
                        leaky(z, c.negative_slope)
                    })
                    .collect();
                let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let den: f64 = logits.iter().map(|z| (z - m).exp()).sum();
                let alpha: Vec<f64> = logits.iter().map(|z| (z - m).exp() / den).collect();
                for (a, &(j, _)) in alpha.iter().zip(&neighbors[i]) {
                    for d in 0..c.hidden {
                        cat[(i, h * c.hidden + d)] += a * hx[(j, d)];
                    }
                }
                alpha_all.push(alpha);
            }
            alphas.push(alpha_all);
        }
        let wo = dm(b.next().unwrap());
        x = (cat * wo).map(|v| leaky(v, INTER_LAYER_SLOPE));
    }
    (x * dm(b.next().unwrap()), alphas)
}

fn small_config(layers: usize, heads: usize, edge: bool, seed: u64) -> ModelConfig {
    ModelConfig {
        layers,
        heads,
        hidden: 4,
        use_edge_features: edge,
        negative_slope: 0.2,
        node_dim: 10,
        edge_dim: 2,
        length_scale: 1.0,
        seed,
    }
}

fn assert_close(a: &DMatrix<f64>, b: &Tensor, tol: f64) {
    assert_eq!(a.shape(), b.shape());
    for r in 0..b.rows() {
        for c in 0..b.cols() {
            let (p, q) = (a[(r, c)], b.get(r, c));
            assert!((p - q).abs() <= tol * (1.0 + p.abs()), "({r},{c}): {p} vs {q}");
        }
    }
}

fn path3() -> GraphSample {
    let topo = GraphTopology::from_undirected(
        1,
        3,
        vec![Vec3::new(0.0, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0), Vec3::new(1.0, 2.0, 0.0)],
        vec![AnatomyLabel(1), AnatomyLabel(1), AnatomyLabel::SOFT],
        &[
            ([0, 1], AnatomyLabel(1), EdgeOrigin::Mesh),
            ([1, 2], AnatomyLabel::SOFT, EdgeOrigin::Mesh),
        ],
        vec![],
        vec![],
    );
    GraphSample {
        node_features: Tensor::from_fn(3, 10, |r, c| ((r + 1) * (c + 2)) as f64 * 0.05 - 0.3),
        targets: Tensor::zeros(3, 3),
        topology: Arc::new(topo),
        contact_nodes: vec![],
    }
}

#[test]
fn path_graph_matches_dense_attention() {
    let g = path3();
    let mut params = ModelParams::init(&small_config(1, 2, true, 5)).unwrap();
    // Hand-set attention vectors so the logits differ in sign across edges.
    *params.get_mut("layer0.head0.att").unwrap() = Tensor::column(vec![1.0, -0.5, 0.25, 2.0]);
    *params.get_mut("layer0.head1.att_e").unwrap() = Tensor::column(vec![-1.0, 0.0, 3.0, 0.5]);
    let out = predict(&params, &g).unwrap();
    let (dense, _) = dense_forward(&params, &g);
    assert_close(&dense, &out, 1e-12);
}

#[test]
fn tiny_model_matches_layer_by_layer_replay() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for (edge, heads) in [(true, 2), (false, 2), (true, 1)] {
        let g = random_graph(&mut rng, 9, 0.3, 1);
        let params = ModelParams::init(&small_config(3, heads, edge, 3)).unwrap();
        let out = predict(&params, &g).unwrap();
        let (dense, dense_alpha) = dense_forward(&params, &g);
        assert_close(&dense, &out, 1e-10);

        let mut tape = Tape::new();
        let vars = params.register(&mut tape, false);
        let fwd = model_forward(&mut tape, &params.config, &g, &vars).unwrap();
        assert_eq!(fwd.attention.len(), 3 * heads);
        // Tape attention (edge order then self loops) regrouped per destination.
        for (a, d) in fwd.attention.iter().zip(&dense_alpha) {
            let a = tape.value(*a);
            let t = &g.topology;
            for (i, di) in d.iter().enumerate() {
                let got: Vec<f64> = (0..t.attn_dst.len()).filter(|&k| t.attn_dst[k] == i).map(|k| a.get(k, 0)).collect();
                for (p, q) in got.iter().zip(di) {
                    assert!((p - q).abs() < 1e-12);
                }
            }
        }
    }
}

#[test]
fn isolated_node_attends_to_itself() {
    let topo = GraphTopology::from_undirected(1, 1, vec![Vec3::new(1.0, 2.0, 3.0)], vec![AnatomyLabel::SOFT], &[], vec![], vec![]);
    let g = GraphSample {
        node_features: Tensor::from_fn(1, 10, |_, c| c as f64 * 0.1),
        targets: Tensor::zeros(1, 3),
        topology: Arc::new(topo),
        contact_nodes: vec![],
    };
    let params = ModelParams::init(&small_config(1, 2, true, 1)).unwrap();
    let mut tape = Tape::new();
    let vars = params.register(&mut tape, false);
    let fwd = model_forward(&mut tape, &params.config, &g, &vars).unwrap();
    for a in &fwd.attention {
        assert_eq!(tape.value(*a).data(), &[1.0]);
    }
    let x = dm(&g.node_features);
    let h0 = &x * dm(params.get("layer0.head0.theta").unwrap());
    let h1 = &x * dm(params.get("layer0.head1.theta").unwrap());
    let mut cat: DMatrix<f64> = DMatrix::zeros(1, 8);
    cat.view_mut((0, 0), (1, 4)).copy_from(&h0);
    cat.view_mut((0, 4), (1, 4)).copy_from(&h1);
    let y = (cat * dm(params.get("layer0.out").unwrap())).map(|v| leaky(v, INTER_LAYER_SLOPE));
    let expected = y * dm(params.get("readout").unwrap());
    assert_close(&expected, tape.value(fwd.output), 1e-14);
}

#[test]
fn equal_logits_split_evenly() {
    let topo = GraphTopology::from_undirected(
        0,
        2,
        vec![Vec3::zeros(), Vec3::new(1.0, 0.0, 0.0)],
        vec![AnatomyLabel::SOFT; 2],
        &[([0, 1], AnatomyLabel::SOFT, EdgeOrigin::Mesh)],
        vec![],
        vec![],
    );
    let g = GraphSample {
        node_features: Tensor::from_fn(2, 9, |r, c| (r + c) as f64),
        targets: Tensor::zeros(2, 3),
        topology: Arc::new(topo),
        contact_nodes: vec![],
    };
    let mut cfg = small_config(1, 1, false, 0);
    cfg.node_dim = 9;
    cfg.edge_dim = 1;
    let mut params = ModelParams::init(&cfg).unwrap();
    *params.get_mut("layer0.head0.att").unwrap() = Tensor::zeros(4, 1);
    let mut tape = Tape::new();
    let vars = params.register(&mut tape, false);
    let fwd = model_forward(&mut tape, &cfg, &g, &vars).unwrap();
    assert_eq!(tape.value(fwd.attention[0]).data(), &[0.5, 0.5, 0.5, 0.5]);
}

#[test]
fn zero_readout_predicts_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let g = random_graph(&mut rng, 12, 0.2, 1);
    let mut params = ModelParams::init(&small_config(2, 2, true, 0)).unwrap();
    *params.get_mut("readout").unwrap() = Tensor::zeros(4, 3);
    assert!(predict(&params, &g).unwrap().data().iter().all(|&v| v == 0.0));
}

#[test]
fn permutation_equivariance_is_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let g = random_graph(&mut rng, 10, 0.3, 1);
    let params = ModelParams::init(&small_config(2, 2, true, 9)).unwrap();
    let out = predict(&params, &g).unwrap();
    let n = g.node_count();
    let perm: Vec<usize> = (0..n).map(|i| (i * 3 + 1) % n).collect(); // old → new
    let t = &g.topology;
    let mut positions = vec![Vec3::zeros(); n];
    let mut labels = vec![AnatomyLabel::SOFT; n];
    let mut feats = Tensor::zeros(n, g.node_features.cols());
    for i in 0..n {
        positions[perm[i]] = t.rest_positions[i];
        labels[perm[i]] = t.node_labels[i];
        feats.row_mut(perm[i]).copy_from_slice(g.node_features.row(i));
    }
    let undirected: Vec<_> = (0..t.edge_count() / 2)
        .map(|k| {
            let label = if t.edge_features.get(2 * k, 1) == 1.0 { AnatomyLabel(1) } else { AnatomyLabel::SOFT };
            ([perm[t.src[2 * k]], perm[t.dst[2 * k]]], label, EdgeOrigin::Mesh)
        })
        .collect();
    let pt = GraphTopology::from_undirected(1, n, positions, labels, &undirected, vec![], vec![]);
    let pg = GraphSample {
        topology: Arc::new(pt),
        node_features: feats,
        targets: Tensor::zeros(n, 3),
        contact_nodes: vec![],
    };
    let pout = predict(&params, &pg).unwrap();
    for i in 0..n {
        assert_eq!(out.row(i), pout.row(perm[i]));
    }
}

#[test]
fn edge_features_ignored_when_disabled() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let g = random_graph(&mut rng, 8, 0.4, 1);
    let params = ModelParams::init(&small_config(2, 2, false, 1)).unwrap();
    let mut scrambled = (*g.topology).clone();
    scrambled.edge_features = Tensor::from_fn(scrambled.edge_count(), 2, |r, c| (r * 7 + c) as f64 - 3.0);
    let g2 = GraphSample {
        topology: Arc::new(scrambled),
        ..g.clone()
    };
    assert_eq!(predict(&params, &g).unwrap(), predict(&params, &g2).unwrap());
}

#[test]
fn init_is_seeded_and_bounded() {
    let a = ModelParams::init(&small_config(2, 2, true, 7)).unwrap();
    let b = ModelParams::init(&small_config(2, 2, true, 7)).unwrap();
    let c = ModelParams::init(&small_config(2, 2, true, 8)).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.tensors, c.tensors);
    for t in &a.tensors {
        let bound = (3.0 / t.rows() as f64).sqrt();
        assert!(t.max_abs() <= bound);
    }
    assert_eq!(a.names[0], "layer0.head0.theta");
    assert_eq!(a.names.last().unwrap(), "readout");
    assert!(ModelParams::init(&small_config(0, 2, true, 7)).is_err());
}

#[test]
fn desk_and_full_scale_shapes() {
    let desk = ModelParams::init(&ModelConfig::desk(2)).unwrap();
    assert_eq!(desk.get("layer0.head0.theta").unwrap().shape(), (11, 32));
    assert_eq!(desk.get("layer3.out").unwrap().shape(), (64, 32));
    let full = ModelConfig::paper_scale(5);
    assert_eq!((full.layers, full.heads, full.hidden, full.node_dim), (8, 2, 256, 14));
}

#[test]
fn single_layer_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let g = random_graph(&mut rng, 5, 0.5, 1);
    let cfg = small_config(1, 2, true, 2);
    let params = ModelParams::init(&cfg).unwrap();
    let report = grad_check(
        |tape, vars| {
            let fwd = model_forward(tape, &cfg, &g, vars)?;
            let sq = tape.square(fwd.output)?;
            tape.mean(sq)
        },
        &params.tensors,
        1e-6,
        1e-4,
    )
    .unwrap();
    assert!(report.passed(), "{report:?}");
}

#[test]
fn checkpoint_round_trip_is_exact() {
    use crate::graph::GraphOptions;
    let params = ModelParams::init(&small_config(2, 2, true, 3)).unwrap();
    let ck = Checkpoint {
        params,
        mesh_hash: 0x1234_5678_9abc_def0,
        graph_options: GraphOptions {
            virtual_nodes: true,
            virtual_edges: false,
        },
    };
    let mut buf = Vec::new();
    write_checkpoint(&ck, &mut buf).unwrap();
    let back = read_checkpoint(&buf[..], std::path::Path::new("mem")).unwrap();
    assert_eq!(back, ck);
    let mut bad = buf.clone();
    bad[8] = b'2';
    assert!(read_checkpoint(&bad[..], std::path::Path::new("mem")).is_err());
    buf.truncate(buf.len() - 1);
    assert!(read_checkpoint(&buf[..], std::path::Path::new("mem")).is_err());
}

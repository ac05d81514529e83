//! Stacked multi-head graph attention with optional edge-feature attention
//! and a linear readout to per-node 3-D displacement.
//!
//! Per layer and head, with H = XΘ and s = Ha:
//!
//! ```text
//! z_ij  = LeakyReLU(s_i + s_j + (E Θ_e a_e)_ij)      j ∈ N(i) ∪ {i}
//! α_ij  = softmax_j z_ij
//! out_i = Σ_j α_ij H_j
//! ```
//!
//! The self term has no edge feature, so its edge contribution is zero. Heads
//! are concatenated and projected by W_o, followed by LeakyReLU(0.01).

mod checkpoint;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, Checkpoint, CHECKPOINT_MAGIC};

use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::graph::{GraphSample, GraphTopology};

pub const INTER_LAYER_SLOPE: f64 = 0.01;

/// Node-feature columns holding rest geometry in mm: p (3) and r.
pub const GEOMETRY_COLUMNS: std::ops::Range<usize> = 3..7;

/// Largest rest-position norm of a (centered) mesh; the usual `length_scale`.
pub fn mesh_length_scale(positions: &[crate::mesh::Vec3]) -> f64 {
    positions.iter().map(|p| p.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub layers: usize,
    pub heads: usize,
    pub hidden: usize,
    pub use_edge_features: bool,
    /// Slope of the LeakyReLU applied to attention logits.
    pub negative_slope: f64,
    /// 9 + R
    pub node_dim: usize,
    /// 1 + R
    pub edge_dim: usize,
    /// Length unit (mm) for the rest-geometry input columns (p, r). Fixed,
    /// not trained; Δ and outputs stay in mm.
    pub length_scale: f64,
    pub seed: u64,
}

impl ModelConfig {
    /// Desk-scale defaults for a mesh with `rigid_count` components.
    pub fn desk(rigid_count: usize) -> Self {
        ModelConfig {
            layers: 6,
            heads: 2,
            hidden: 32,
            use_edge_features: true,
            negative_slope: 0.01,
            node_dim: 9 + rigid_count,
            edge_dim: 1 + rigid_count,
            length_scale: 1.0,
            seed: 0,
        }
    }

    pub fn paper_scale(rigid_count: usize) -> Self {
        ModelConfig {
            layers: 8,
            hidden: 256,
            ..Self::desk(rigid_count)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 || self.heads == 0 || self.hidden == 0 {
            return Err(Error::Config("layers, heads and hidden width must be at least 1".into()));
        }
        if self.node_dim < 9 || self.edge_dim < 1 {
            return Err(Error::Config("input widths must be at least 9 (node) and 1 (edge)".into()));
        }
        if !(self.length_scale > 0.0 && self.length_scale.is_finite()) {
            return Err(Error::Config("length scale must be positive and finite".into()));
        }
        if !(self.negative_slope >= 0.0) {
            return Err(Error::Config("negative slope must be non-negative".into()));
        }
        Ok(())
    }

    /// Names and shapes of every parameter block, in storage order.
    pub fn layout(&self) -> Vec<(String, (usize, usize))> {
        let mut out = Vec::new();
        for l in 0..self.layers {
            let d_in = if l == 0 { self.node_dim } else { self.hidden };
            for h in 0..self.heads {
                out.push((format!("layer{l}.head{h}.theta"), (d_in, self.hidden)));
                out.push((format!("layer{l}.head{h}.att"), (self.hidden, 1)));
                if self.use_edge_features {
                    out.push((format!("layer{l}.head{h}.theta_e"), (self.edge_dim, self.hidden)));
                    out.push((format!("layer{l}.head{h}.att_e"), (self.hidden, 1)));
                }
            }
            out.push((format!("layer{l}.out"), (self.heads * self.hidden, self.hidden)));
        }
        out.push(("readout".to_string(), (self.hidden, 3)));
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub names: Vec<String>,
    pub tensors: Vec<Tensor>,
}

impl ModelParams {
    /// Uniform in ±√(3 / fan_in) per block, fan_in = row count.
    pub fn init(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let (names, tensors) = config
            .layout()
            .into_iter()
            .map(|(name, (r, c))| {
                let bound = (3.0 / r as f64).sqrt();
                let t = Tensor::from_fn(r, c, |_, _| rng.random_range(-bound..=bound));
                (name, t)
            })
            .unzip();
        Ok(ModelParams {
            config: config.clone(),
            names,
            tensors,
        })
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.names.iter().position(|n| n == name).map(|k| &self.tensors[k])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.names.iter().position(|n| n == name).map(move |k| &mut self.tensors[k])
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors.iter().map(|t| t.len()).sum()
    }

    /// Registers every block on `tape`, as trainable leaves or constants.
    pub fn register(&self, tape: &mut Tape, trainable: bool) -> Vec<Var> {
        self.tensors
            .iter()
            .map(|t| {
                if trainable {
                    tape.param(t.clone())
                } else {
                    tape.constant(t.clone())
                }
            })
            .collect()
    }

    pub fn check_shapes(&self) -> Result<()> {
        let layout = self.config.layout();
        if layout.len() != self.tensors.len() {
            return Err(Error::Invalid(format!(
                "expected {} parameter blocks, found {}",
                layout.len(),
                self.tensors.len()
            )));
        }
        for ((name, shape), (n, t)) in layout.iter().zip(self.names.iter().zip(&self.tensors)) {
            if name != n || *shape != t.shape() {
                return Err(Error::Invalid(format!(
                    "parameter block {n} {:?} does not match expected {name} {shape:?}",
                    t.shape()
                )));
            }
            if !t.is_finite() {
                return Err(Error::Numerical(format!("parameter block {n} is not finite")));
            }
        }
        Ok(())
    }
}

/// Output of a forward pass plus the attention coefficients of every layer
/// and head (each (E + N)×1 over the directed edges followed by self loops).
pub struct Forward {
    pub output: Var,
    pub attention: Vec<Var>,
}

/// One GAT layer. `params` holds this layer's blocks in layout order.
pub fn gat_layer(
    tape: &mut Tape,
    config: &ModelConfig,
    topo: &GraphTopology,
    x: Var,
    edge_features: Option<Var>,
    params: &[Var],
    attention: &mut Vec<Var>,
) -> Result<Var> {
    let n = tape.value(x).rows();
    if n != topo.node_count() {
        return Err(Error::Shape {
            op: "gat_layer",
            lhs: tape.value(x).shape(),
            rhs: (topo.node_count(), 0),
        });
    }
    let per_head = if config.use_edge_features { 4 } else { 2 };
    let mut heads = Vec::with_capacity(config.heads);
    let self_pad = edge_features.map(|_| tape.constant(Tensor::zeros(n, 1)));
    for h in 0..config.heads {
        let p = &params[h * per_head..(h + 1) * per_head];
        let hx = tape.matmul(x, p[0])?;
        let s = tape.matmul(hx, p[1])?;
        let s_dst = tape.gather_rows(s, topo.attn_dst.clone())?;
        let s_src = tape.gather_rows(s, topo.attn_src.clone())?;
        let mut logits = tape.add(s_dst, s_src)?;
        if let (Some(ef), Some(pad)) = (edge_features, self_pad) {
            let w = tape.matmul(p[2], p[3])?;
            let e_term = tape.matmul(ef, w)?;
            let e_term = tape.concat_rows(&[e_term, pad])?;
            logits = tape.add(logits, e_term)?;
        }
        let z = tape.leaky_relu(logits, config.negative_slope)?;
        let alpha = tape.segment_softmax(z, topo.attn_dst.clone(), n)?;
        attention.push(alpha);
        heads.push(tape.aggregate(alpha, hx, topo.attn_src.clone(), topo.attn_dst.clone())?);
    }
    let cat = if heads.len() == 1 { heads[0] } else { tape.concat_cols(&heads)? };
    let y = tape.matmul(cat, params[config.heads * per_head])?;
    tape.leaky_relu(y, INTER_LAYER_SLOPE)
}

/// Full network on `graph`. `params` are the vars returned by [`ModelParams::register`].
pub fn model_forward(tape: &mut Tape, config: &ModelConfig, graph: &GraphSample, params: &[Var]) -> Result<Forward> {
    let topo = &graph.topology;
    if graph.node_features.cols() != config.node_dim {
        return Err(Error::Shape {
            op: "model_forward (node features)",
            lhs: graph.node_features.shape(),
            rhs: (topo.node_count(), config.node_dim),
        });
    }
    let edge_features = if config.use_edge_features {
        if topo.edge_features.cols() != config.edge_dim {
            return Err(Error::Shape {
                op: "model_forward (edge features)",
                lhs: topo.edge_features.shape(),
                rhs: (topo.edge_count(), config.edge_dim),
            });
        }
        Some(tape.constant(topo.edge_features.clone()))
    } else {
        None
    };
    let per_layer = config.heads * if config.use_edge_features { 4 } else { 2 } + 1;
    if params.len() != config.layers * per_layer + 1 {
        return Err(Error::Invalid(format!(
            "model expects {} parameter blocks, got {}",
            config.layers * per_layer + 1,
            params.len()
        )));
    }
    let mut features = graph.node_features.clone();
    if config.length_scale != 1.0 {
        let inv = 1.0 / config.length_scale;
        for i in 0..features.rows() {
            for v in &mut features.row_mut(i)[GEOMETRY_COLUMNS] {
                *v *= inv;
            }
        }
    }
    let mut x = tape.constant(features);
    let mut attention = Vec::with_capacity(config.layers * config.heads);
    for l in 0..config.layers {
        let p = &params[l * per_layer..(l + 1) * per_layer];
        x = gat_layer(tape, config, topo, x, edge_features, p, &mut attention)?;
    }
    let output = tape.matmul(x, params[config.layers * per_layer])?;
    Ok(Forward { output, attention })
}

/// Inference without gradient bookkeeping.
pub fn predict(params: &ModelParams, graph: &GraphSample) -> Result<Tensor> {
    let mut tape = Tape::new();
    let vars = params.register(&mut tape, false);
    let fwd = model_forward(&mut tape, &params.config, graph, &vars)?;
    Ok(tape.value(fwd.output).clone())
}

#[cfg(test)]
mod tests;

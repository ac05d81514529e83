//! Mesh + simulation sample → attention-ready graphs, with the virtual node
//! and virtual edge augmentations for rigid components.
//!
//! Node features (width 9 + R): prescribed displacement (zero off-contact),
//! rest position, spherical coordinates of the rest position, rigid one-hot.
//! Edge features (width 1 + R): rest length, rigid one-hot of the edge label.

mod cache;

use std::collections::{BTreeSet, HashMap};
use std::sync::{Arc, Mutex};

pub use cache::{read_graph_cache, write_graph_cache, CachedGraph, GRAPH_CACHE_MAGIC};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::mesh::{AnatomyLabel, Mesh, Vec3};
use crate::oracle::{Dataset, SimulationSample};

/// Where a rigid registry entry came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EdgeOrigin {
    Mesh,
    VirtualNode,
    VirtualEdge,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RigidEdge {
    pub nodes: [usize; 2],
    pub rest_length: f64,
    /// Rigid label (≥ 1).
    pub label: AnatomyLabel,
    pub origin: EdgeOrigin,
}

/// Sample-independent part of a graph. Shared between all samples that use
/// the same augmentation.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphTopology {
    pub rigid_count: usize,
    pub real_node_count: usize,
    pub rest_positions: Vec<Vec3>,
    pub node_labels: Vec<AnatomyLabel>,
    /// Directed edge j→i stored as `src[k] = j`, `dst[k] = i`; both directions
    /// of every undirected edge are present.
    pub src: Arc<[usize]>,
    pub dst: Arc<[usize]>,
    pub edge_features: Tensor,
    pub rigid_edges: Vec<RigidEdge>,
    pub virtual_node_ids: Vec<usize>,
    /// Undirected pairs added by the virtual edge augmentation.
    pub virtual_edge_ids: Vec<[usize; 2]>,
    /// Directed edges followed by one self loop per node, for attention.
    pub attn_src: Arc<[usize]>,
    pub attn_dst: Arc<[usize]>,
}

impl GraphTopology {
    pub fn node_count(&self) -> usize {
        self.rest_positions.len()
    }

    pub fn edge_count(&self) -> usize {
        self.src.len()
    }

    pub fn feature_width(&self) -> usize {
        9 + self.rigid_count
    }

    pub fn edge_feature_width(&self) -> usize {
        1 + self.rigid_count
    }

    /// Registry entries used by the rigid edge loss.
    pub fn rel_edges(&self, include_virtual_edges: bool) -> impl Iterator<Item = &RigidEdge> {
        self.rigid_edges
            .iter()
            .filter(move |e| include_virtual_edges || e.origin != EdgeOrigin::VirtualEdge)
    }

    /// Registry entries that are edges of the original mesh.
    pub fn mesh_rigid_edges(&self) -> impl Iterator<Item = &RigidEdge> {
        self.rigid_edges.iter().filter(|e| e.origin == EdgeOrigin::Mesh)
    }

    /// Builds a topology from undirected edges; each becomes two directed edges.
    pub fn from_undirected(
        rigid_count: usize,
        real_node_count: usize,
        rest_positions: Vec<Vec3>,
        node_labels: Vec<AnatomyLabel>,
        undirected: &[([usize; 2], AnatomyLabel, EdgeOrigin)],
        virtual_node_ids: Vec<usize>,
        virtual_edge_ids: Vec<[usize; 2]>,
    ) -> Self {
        let n = rest_positions.len();
        let e = undirected.len();
        let mut src = Vec::with_capacity(2 * e);
        let mut dst = Vec::with_capacity(2 * e);
        let mut feats = Tensor::zeros(2 * e, 1 + rigid_count);
        let mut rigid_edges = Vec::new();
        for (k, &([a, b], label, origin)) in undirected.iter().enumerate() {
            let len = (rest_positions[a] - rest_positions[b]).norm();
            for (r, (s, d)) in [(2 * k, (a, b)), (2 * k + 1, (b, a))] {
                src.push(s);
                dst.push(d);
                feats.set(r, 0, len);
                if let Some(c) = label.component() {
                    feats.set(r, 1 + c, 1.0);
                }
            }
            if label.is_rigid() {
                rigid_edges.push(RigidEdge {
                    nodes: [a, b],
                    rest_length: len,
                    label,
                    origin,
                });
            }
        }
        let attn_src: Vec<usize> = src.iter().copied().chain(0..n).collect();
        let attn_dst: Vec<usize> = dst.iter().copied().chain(0..n).collect();
        GraphTopology {
            rigid_count,
            real_node_count,
            rest_positions,
            node_labels,
            src: src.into(),
            dst: dst.into(),
            edge_features: feats,
            rigid_edges,
            virtual_node_ids,
            virtual_edge_ids,
            attn_src: attn_src.into(),
            attn_dst: attn_dst.into(),
        }
    }

    fn undirected(&self) -> Vec<([usize; 2], AnatomyLabel, EdgeOrigin)> {
        let origin_of: HashMap<[usize; 2], EdgeOrigin> =
            self.rigid_edges.iter().map(|e| (e.nodes, e.origin)).collect();
        (0..self.edge_count() / 2)
            .map(|k| {
                let pair = [self.src[2 * k], self.dst[2 * k]];
                let label = edge_label(&self.edge_features, 2 * k);
                let origin = origin_of.get(&pair).copied().unwrap_or(EdgeOrigin::Mesh);
                (pair, label, origin)
            })
            .collect()
    }

    /// Mesh edges materialized in both directions, rigid registry from rigid-labeled edges.
    pub fn from_mesh(mesh: &Mesh) -> Self {
        let undirected: Vec<_> = mesh
            .edges
            .iter()
            .zip(&mesh.edge_labels)
            .map(|(&e, &l)| (e, l, EdgeOrigin::Mesh))
            .collect();
        Self::from_undirected(
            mesh.rigid_count,
            mesh.node_count(),
            mesh.rest_positions.clone(),
            mesh.node_labels.clone(),
            &undirected,
            vec![],
            vec![],
        )
    }

    /// Appends one node per rigid component at the component's mean rest
    /// position, joined to every node of the component.
    pub fn with_virtual_nodes(&self) -> Result<Self> {
        let comps = self.real_components();
        if comps.iter().all(|c| c.is_empty()) {
            return Err(Error::Invalid("virtual nodes need at least one rigid component".into()));
        }
        let mut positions = self.rest_positions.clone();
        let mut labels = self.node_labels.clone();
        let mut undirected = self.undirected();
        let mut vn_ids = self.virtual_node_ids.clone();
        for (c, nodes) in comps.iter().enumerate() {
            if nodes.is_empty() {
                continue;
            }
            let label = AnatomyLabel(c as u8 + 1);
            let id = positions.len();
            positions.push(mean_position(&self.rest_positions, nodes));
            labels.push(label);
            vn_ids.push(id);
            undirected.extend(nodes.iter().map(|&k| ([k, id], label, EdgeOrigin::VirtualNode)));
        }
        Ok(Self::from_undirected(
            self.rigid_count,
            self.real_node_count,
            positions,
            labels,
            &undirected,
            vn_ids,
            self.virtual_edge_ids.clone(),
        ))
    }

    /// Joins every node of component c to `representatives[c]` unless an edge exists.
    pub fn with_virtual_edges(&self, representatives: &[Option<usize>]) -> Self {
        let mut undirected = self.undirected();
        let existing: BTreeSet<[usize; 2]> = undirected.iter().map(|(e, _, _)| sorted(*e)).collect();
        let mut ve_ids = self.virtual_edge_ids.clone();
        for (c, nodes) in self.real_components().iter().enumerate() {
            let Some(rep) = representatives.get(c).copied().flatten() else { continue };
            let label = AnatomyLabel(c as u8 + 1);
            for &k in nodes {
                if k != rep && !existing.contains(&sorted([k, rep])) {
                    undirected.push(([k, rep], label, EdgeOrigin::VirtualEdge));
                    ve_ids.push([k, rep]);
                }
            }
        }
        Self::from_undirected(
            self.rigid_count,
            self.real_node_count,
            self.rest_positions.clone(),
            self.node_labels.clone(),
            &undirected,
            self.virtual_node_ids.clone(),
            ve_ids,
        )
    }

    fn real_components(&self) -> Vec<Vec<usize>> {
        let mut comps = vec![Vec::new(); self.rigid_count];
        for (i, l) in self.node_labels[..self.real_node_count].iter().enumerate() {
            if let Some(c) = l.component() {
                comps[c].push(i);
            }
        }
        comps
    }

    /// Per component, the real node closest to `centroid` (lowest index on ties).
    pub fn representatives(&self, centroid: &Vec3) -> Vec<Option<usize>> {
        self.real_components()
            .iter()
            .map(|nodes| {
                let mut best: Option<(f64, usize)> = None;
                for &k in nodes {
                    let d = (self.rest_positions[k] - centroid).norm();
                    if best.is_none_or(|(bd, _)| d < bd) {
                        best = Some((d, k));
                    }
                }
                best.map(|(_, k)| k)
            })
            .collect()
    }
}

fn sorted([a, b]: [usize; 2]) -> [usize; 2] {
    if a < b {
        [a, b]
    } else {
        [b, a]
    }
}

fn edge_label(feats: &Tensor, row: usize) -> AnatomyLabel {
    (1..feats.cols())
        .find(|&c| feats.get(row, c) == 1.0)
        .map(|c| AnatomyLabel(c as u8))
        .unwrap_or(AnatomyLabel::SOFT)
}

fn mean_position(positions: &[Vec3], nodes: &[usize]) -> Vec3 {
    nodes.iter().fold(Vec3::zeros(), |a, &k| a + positions[k]) / nodes.len() as f64
}

/// (r, θ, φ): radius, polar angle from +z in [0, π], azimuth atan2(y, x).
pub fn spherical(p: &Vec3) -> (f64, f64, f64) {
    let r = p.norm();
    if r == 0.0 {
        return (0.0, 0.0, 0.0);
    }
    (r, (p.z / r).clamp(-1.0, 1.0).acos(), p.y.atan2(p.x))
}

/// One training/evaluation graph: shared topology plus per-sample tensors.
#[derive(Debug, Clone)]
pub struct GraphSample {
    pub topology: Arc<GraphTopology>,
    pub node_features: Tensor,
    pub targets: Tensor,
    pub contact_nodes: Vec<usize>,
}

impl GraphSample {
    pub fn real_node_count(&self) -> usize {
        self.topology.real_node_count
    }

    pub fn node_count(&self) -> usize {
        self.topology.node_count()
    }

    /// Unweighted mean of contact-node rest positions.
    pub fn contact_centroid(&self) -> Vec3 {
        if self.contact_nodes.is_empty() {
            return Vec3::zeros();
        }
        mean_position(&self.topology.rest_positions, &self.contact_nodes)
    }
}

fn node_feature_row(out: &mut [f64], delta: &Vec3, p: &Vec3, label: AnatomyLabel) {
    let (r, th, ph) = spherical(p);
    out[..9].copy_from_slice(&[delta.x, delta.y, delta.z, p.x, p.y, p.z, r, th, ph]);
    out[9..].fill(0.0);
    if let Some(c) = label.component() {
        out[9 + c] = 1.0;
    }
}

fn check_sample(mesh: &Mesh, sample: &SimulationSample) -> Result<()> {
    let n = mesh.node_count();
    if sample.ground_truth.len() != n {
        return Err(Error::Invalid(format!(
            "sample has {} ground-truth rows but the mesh has {n} nodes",
            sample.ground_truth.len()
        )));
    }
    if sample.prescribed.len() != sample.contact_nodes.len() || sample.contact_nodes.iter().any(|&c| c >= n) {
        return Err(Error::Invalid("sample contact set does not fit the mesh".into()));
    }
    Ok(())
}

/// Features and targets of `sample` on `topology` (which may carry virtual
/// nodes; their targets are component-mean ground-truth displacements).
pub fn sample_tensors(topology: &GraphTopology, sample: &SimulationSample) -> (Tensor, Tensor) {
    let n = topology.node_count();
    let w = topology.feature_width();
    let mut delta = vec![Vec3::zeros(); n];
    for (&c, v) in sample.contact_nodes.iter().zip(&sample.prescribed) {
        delta[c] = *v;
    }
    let mut feats = Tensor::zeros(n, w);
    for i in 0..n {
        node_feature_row(feats.row_mut(i), &delta[i], &topology.rest_positions[i], topology.node_labels[i]);
    }
    let mut targets = Tensor::zeros(n, 3);
    for (i, u) in sample.ground_truth.iter().enumerate() {
        targets.row_mut(i).copy_from_slice(u.as_slice());
    }
    let comps = topology.real_components();
    for &v in &topology.virtual_node_ids {
        if let Some(c) = topology.node_labels[v].component() {
            let mean = mean_position(&sample.ground_truth, &comps[c]);
            targets.row_mut(v).copy_from_slice(mean.as_slice());
        }
    }
    (feats, targets)
}

/// Plain (unaugmented) graph of one sample.
pub fn build_features(mesh: &Mesh, sample: &SimulationSample) -> Result<GraphSample> {
    check_sample(mesh, sample)?;
    let topology = Arc::new(GraphTopology::from_mesh(mesh));
    let (node_features, targets) = sample_tensors(&topology, sample);
    Ok(GraphSample {
        topology,
        node_features,
        targets,
        contact_nodes: sample.contact_nodes.clone(),
    })
}

/// Adds one virtual node per rigid component.
pub fn augment_vn(graph: &GraphSample) -> Result<GraphSample> {
    let topology = Arc::new(graph.topology.with_virtual_nodes()?);
    Ok(reattach(graph, topology))
}

/// Adds virtual edges toward the node of each component closest to `centroid`.
pub fn augment_ve(graph: &GraphSample, centroid: &Vec3) -> GraphSample {
    let reps = graph.topology.representatives(centroid);
    let topology = Arc::new(graph.topology.with_virtual_edges(&reps));
    reattach(graph, topology)
}

fn reattach(graph: &GraphSample, topology: Arc<GraphTopology>) -> GraphSample {
    let real = graph.real_node_count();
    let n = topology.node_count();
    let mut feats = Tensor::zeros(n, topology.feature_width());
    let mut targets = Tensor::zeros(n, 3);
    for i in 0..graph.node_count() {
        feats.row_mut(i).copy_from_slice(graph.node_features.row(i));
        targets.row_mut(i).copy_from_slice(graph.targets.row(i));
    }
    let comps = topology.real_components();
    for &v in topology.virtual_node_ids.iter().filter(|&&v| v >= graph.node_count()) {
        node_feature_row(feats.row_mut(v), &Vec3::zeros(), &topology.rest_positions[v], topology.node_labels[v]);
        if let Some(c) = topology.node_labels[v].component() {
            let mut mean = [0.0; 3];
            for &k in &comps[c] {
                for (m, t) in mean.iter_mut().zip(graph.targets.row(k)) {
                    *m += t;
                }
            }
            targets.row_mut(v).copy_from_slice(&mean.map(|m| m / comps[c].len() as f64));
        }
    }
    debug_assert!(real <= n);
    GraphSample {
        topology,
        node_features: feats,
        targets,
        contact_nodes: graph.contact_nodes.clone(),
    }
}

/// Rest length and predicted length of every registry edge, with predicted
/// positions = rest + predicted displacement (`predicted` covers all nodes).
pub fn rigid_edge_residuals<'a>(
    topology: &GraphTopology,
    edges: impl IntoIterator<Item = &'a RigidEdge>,
    predicted: &Tensor,
) -> Vec<(f64, f64)> {
    let pos = |k: usize| {
        let r = predicted.row(k);
        topology.rest_positions[k] + Vec3::new(r[0], r[1], r[2])
    };
    edges
        .into_iter()
        .map(|e| (e.rest_length, (pos(e.nodes[0]) - pos(e.nodes[1])).norm()))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct GraphOptions {
    pub virtual_nodes: bool,
    pub virtual_edges: bool,
}

/// Builds graphs for a whole dataset, sharing topologies between samples.
/// Virtual edges depend only on the contact set, so at most one topology per
/// distinct set of representatives is created.
pub struct GraphBuilder {
    options: GraphOptions,
    mesh_node_count: usize,
    base: Arc<GraphTopology>,
    ve_cache: Mutex<HashMap<Vec<Option<usize>>, Arc<GraphTopology>>>,
}

impl GraphBuilder {
    pub fn new(mesh: &Mesh, options: GraphOptions) -> Result<Self> {
        let plain = GraphTopology::from_mesh(mesh);
        let base = if options.virtual_nodes {
            plain.with_virtual_nodes()?
        } else {
            plain
        };
        Ok(GraphBuilder {
            options,
            mesh_node_count: mesh.node_count(),
            base: Arc::new(base),
            ve_cache: Mutex::new(HashMap::new()),
        })
    }

    pub fn options(&self) -> GraphOptions {
        self.options
    }

    pub fn base_topology(&self) -> &Arc<GraphTopology> {
        &self.base
    }

    fn topology_for(&self, sample: &SimulationSample) -> Arc<GraphTopology> {
        if !self.options.virtual_edges {
            return self.base.clone();
        }
        let centroid = mean_position(&self.base.rest_positions, &sample.contact_nodes);
        let reps = self.base.representatives(&centroid);
        let mut cache = self.ve_cache.lock().expect("graph cache lock poisoned");
        cache
            .entry(reps)
            .or_insert_with_key(|reps| Arc::new(self.base.with_virtual_edges(reps)))
            .clone()
    }

    pub fn build(&self, sample: &SimulationSample) -> Result<GraphSample> {
        if sample.ground_truth.len() != self.mesh_node_count {
            return Err(Error::Invalid(format!(
                "sample has {} ground-truth rows but the mesh has {} nodes",
                sample.ground_truth.len(),
                self.mesh_node_count
            )));
        }
        if sample.contact_nodes.is_empty() && self.options.virtual_edges {
            return Err(Error::Invalid("virtual edges need a nonempty contact set".into()));
        }
        let topology = self.topology_for(sample);
        let (node_features, targets) = sample_tensors(&topology, sample);
        Ok(GraphSample {
            topology,
            node_features,
            targets,
            contact_nodes: sample.contact_nodes.clone(),
        })
    }

    /// Graphs for every sample of `dataset`, built on up to `jobs` threads.
    pub fn build_dataset(&self, mesh: &Mesh, dataset: &Dataset, jobs: usize) -> Result<Vec<GraphSample>> {
        dataset.check_mesh(mesh.content_hash())?;
        for s in &dataset.samples {
            check_sample(mesh, s)?;
        }
        let samples = &dataset.samples;
        let jobs = jobs.clamp(1, samples.len().max(1));
        let chunk = samples.len().div_ceil(jobs).max(1);
        let parts: Vec<Result<Vec<GraphSample>>> = std::thread::scope(|scope| {
            let handles: Vec<_> = samples
                .chunks(chunk)
                .map(|c| scope.spawn(move || c.iter().map(|s| self.build(s)).collect()))
                .collect();
            handles.into_iter().map(|h| h.join().expect("graph worker panicked")).collect()
        });
        let mut out = Vec::with_capacity(samples.len());
        for p in parts {
            out.extend(p?);
        }
        Ok(out)
    }
}

/// Random connected-ish graph with `n` nodes for tests and benchmarks: a
/// path through all nodes plus extra edges with probability `extra`, random
/// positions in a 20 mm cube, node 0 and 1 rigid (label 1) if `rigid_count`
/// ≥ 1, random targets, and node 0 carrying a prescribed displacement.
pub fn random_graph<R: rand::Rng>(rng: &mut R, n: usize, extra: f64, rigid_count: usize) -> GraphSample {
    let positions: Vec<Vec3> = (0..n)
        .map(|_| Vec3::new(rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0)))
        .collect();
    let labels: Vec<AnatomyLabel> = (0..n)
        .map(|i| if rigid_count >= 1 && i < 2 { AnatomyLabel(1) } else { AnatomyLabel::SOFT })
        .collect();
    let mut undirected = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if j == i + 1 || rng.random_bool(extra) {
                let l = if labels[i].is_rigid() && labels[i] == labels[j] { labels[i] } else { AnatomyLabel::SOFT };
                undirected.push(([i, j], l, EdgeOrigin::Mesh));
            }
        }
    }
    let topology = GraphTopology::from_undirected(rigid_count, n, positions.clone(), labels, &undirected, vec![], vec![]);
    let sample = SimulationSample {
        pose: crate::oracle::ProbePose {
            position: crate::oracle::GridPos { i: 0, j: 0 },
            angle: crate::oracle::ProbeAngle::from_code(0).expect("angle code 0 exists"),
            depth: 1,
        },
        contact_nodes: if n > 0 { vec![0] } else { vec![] },
        prescribed: if n > 0 { vec![Vec3::new(0.0, 0.0, -1.0)] } else { vec![] },
        ground_truth: (0..n)
            .map(|_| Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect(),
    };
    let (node_features, targets) = sample_tensors(&topology, &sample);
    GraphSample {
        topology: Arc::new(topology),
        node_features,
        targets,
        contact_nodes: sample.contact_nodes,
    }
}

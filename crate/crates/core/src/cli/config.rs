//! Flat `key = value` run configuration. Resolution order: defaults, then the
//! config file, then command-line flags. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::graph::GraphOptions;
use crate::mesh::{Aabb, Face, PhantomConfig};
use crate::model::ModelConfig;
use crate::oracle::{MaterialParams, ProbeGeometry, SweepConfig};
use crate::train::TrainConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct Paths {
    pub mesh: PathBuf,
    pub dataset: PathBuf,
    pub graphs: PathBuf,
    pub checkpoint: PathBuf,
    pub curves: PathBuf,
    pub report: PathBuf,
    pub ablation: PathBuf,
    pub prediction: PathBuf,
    pub profile: PathBuf,
}

impl Paths {
    fn under(dir: &Path) -> Self {
        Paths {
            mesh: dir.join("phantom.mesh"),
            dataset: dir.join("sweep.mixdata"),
            graphs: dir.join("graphs.mixgraph"),
            checkpoint: dir.join("model.mixckpt"),
            curves: dir.join("curves.csv"),
            report: dir.join("report.csv"),
            ablation: dir.join("ablation.csv"),
            prediction: dir.join("prediction.txt"),
            profile: dir.join("profile.csv"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub jobs: usize,
    pub phantom: PhantomConfig,
    pub sweep: SweepConfig,
    pub model: ModelConfig,
    /// `None` takes the model's length unit from the mesh radius.
    pub length_scale: Option<f64>,
    pub train: TrainConfig,
    pub graph: GraphOptions,
    pub paths: Paths,
}

impl Default for RunConfig {
    fn default() -> Self {
        let phantom = PhantomConfig::default();
        let r = phantom.inclusions.len();
        RunConfig {
            seed: 0,
            jobs: 1,
            phantom,
            sweep: SweepConfig::default(),
            model: ModelConfig::desk(r),
            length_scale: None,
            train: TrainConfig::default(),
            graph: GraphOptions::default(),
            paths: Paths::under(Path::new("out")),
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("cannot parse value `{v}` for key `{key}`")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(Error::Config(format!("`{key}` expects true/false, got `{v}`"))),
    }
}

fn parse_list<T: std::str::FromStr, const N: usize>(key: &str, v: &str) -> Result<[T; N]> {
    let items: Vec<T> = v
        .split(',')
        .map(|s| parse(key, s.trim()))
        .collect::<Result<_>>()?;
    items
        .try_into()
        .map_err(|_| Error::Config(format!("`{key}` expects {N} comma-separated values, got `{v}`")))
}

fn join<T: std::fmt::Display>(xs: &[T]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn parse_inclusions(v: &str) -> Result<Vec<Aabb>> {
    if v.trim().is_empty() || v.trim() == "none" {
        return Ok(vec![]);
    }
    v.split(';')
        .map(|b| {
            let c: [f64; 6] = parse_list("phantom.inclusions", b)?;
            Ok(Aabb::new([c[0], c[1], c[2]], [c[3], c[4], c[5]]))
        })
        .collect()
}

fn format_inclusions(bs: &[Aabb]) -> String {
    if bs.is_empty() {
        return "none".into();
    }
    bs.iter()
        .map(|b| join(&[b.min[0], b.min[1], b.min[2], b.max[0], b.max[1], b.max[2]]))
        .collect::<Vec<_>>()
        .join(";")
}

impl RunConfig {
    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let v = v.trim();
        match key {
            "seed" => self.seed = parse(key, v)?,
            "jobs" => self.jobs = parse(key, v)?,
            "phantom.size" => self.phantom.size = parse_list(key, v)?,
            "phantom.cells" => self.phantom.cells = parse_list(key, v)?,
            "phantom.inclusions" => self.phantom.inclusions = parse_inclusions(v)?,
            "phantom.fixed_face" => {
                self.phantom.fixed_face =
                    Face::parse(v).ok_or_else(|| Error::Config(format!("unknown face `{v}` (xmin..zmax)")))?
            }
            "material.young_modulus" => self.sweep.material.young_modulus = parse(key, v)?,
            "material.poisson_ratio" => self.sweep.material.poisson_ratio = parse(key, v)?,
            "sweep.grid" => self.sweep.geometry.grid = parse_list(key, v)?,
            "sweep.spacing" => self.sweep.geometry.spacing = parse(key, v)?,
            "sweep.half_lengths" => self.sweep.geometry.half_lengths = parse_list(key, v)?,
            "sweep.step_mm" => self.sweep.geometry.step_mm = parse(key, v)?,
            "sweep.depth_steps" => self.sweep.depth_steps = parse(key, v)?,
            "sweep.geometry_update" => self.sweep.geometry_update = parse_bool(key, v)?,
            "model.layers" => self.model.layers = parse(key, v)?,
            "model.heads" => self.model.heads = parse(key, v)?,
            "model.hidden" => self.model.hidden = parse(key, v)?,
            "model.edge_features" => self.model.use_edge_features = parse_bool(key, v)?,
            "model.negative_slope" => self.model.negative_slope = parse(key, v)?,
            "model.length_scale" => {
                self.length_scale = if v == "auto" { None } else { Some(parse(key, v)?) }
            }
            "train.batch_size" => self.train.batch_size = parse(key, v)?,
            "train.lr" => self.train.initial_lr = parse(key, v)?,
            "train.plateau_factor" => self.train.plateau_factor = parse(key, v)?,
            "train.plateau_patience" => self.train.plateau_patience = parse(key, v)?,
            "train.min_lr" => self.train.min_lr = parse(key, v)?,
            "train.early_stop_patience" => self.train.early_stop_patience = parse(key, v)?,
            "train.weight_decay" => self.train.weight_decay = parse(key, v)?,
            "train.max_epochs" => self.train.max_epochs = parse(key, v)?,
            "train.rel" => self.train.rel = parse_bool(key, v)?,
            "train.lambda" => self.train.rel_weight = parse(key, v)?,
            "train.rel_virtual_edges" => self.train.rel_virtual_edges = parse_bool(key, v)?,
            "graph.vn" => self.graph.virtual_nodes = parse_bool(key, v)?,
            "graph.ve" => self.graph.virtual_edges = parse_bool(key, v)?,
            "paths.dir" => self.paths = Paths::under(Path::new(v)),
            "paths.mesh" => self.paths.mesh = v.into(),
            "paths.dataset" => self.paths.dataset = v.into(),
            "paths.graphs" => self.paths.graphs = v.into(),
            "paths.checkpoint" => self.paths.checkpoint = v.into(),
            "paths.curves" => self.paths.curves = v.into(),
            "paths.report" => self.paths.report = v.into(),
            "paths.ablation" => self.paths.ablation = v.into(),
            "paths.prediction" => self.paths.prediction = v.into(),
            "paths.profile" => self.paths.profile = v.into(),
            _ => return Err(Error::Config(format!("unknown configuration key `{key}`"))),
        }
        Ok(())
    }

    /// Applies a whole config file's text. `origin` is used in error messages.
    pub fn apply_text(&mut self, text: &str, origin: &Path) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                path: origin.to_path_buf(),
                line: n + 1,
                message: format!("expected `key = value`, got `{line}`"),
            })?;
            self.set(k.trim(), v).map_err(|e| match e {
                Error::Config(m) => Error::Config(format!("{}:{}: {m}", origin.display(), n + 1)),
                other => other,
            })?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.apply_text(&text, path)
    }

    /// Derived fields and cross-field checks; call after all settings are applied.
    pub fn finalize(&mut self) -> Result<()> {
        let r = self.phantom.inclusions.len();
        self.model.node_dim = 9 + r;
        self.model.edge_dim = 1 + r;
        self.model.seed = self.seed;
        self.train.seed = self.seed;
        self.phantom.seed = self.seed;
        self.sweep.jobs = self.jobs.max(1);
        self.phantom.validate()?;
        self.sweep.material.validate()?;
        if let Some(l) = self.length_scale {
            self.model.length_scale = l;
        }
        self.model.validate()?;
        self.train.validate()?;
        if self.jobs == 0 {
            return Err(Error::Config("jobs must be at least 1".into()));
        }
        if (self.graph.virtual_nodes || self.graph.virtual_edges) && r == 0 {
            return Err(Error::Config("virtual nodes/edges need at least one rigid inclusion".into()));
        }
        Ok(())
    }

    /// Model configuration with the length unit resolved against `mesh`.
    pub fn model_for(&self, mesh: &crate::mesh::Mesh) -> ModelConfig {
        ModelConfig {
            length_scale: self
                .length_scale
                .unwrap_or_else(|| crate::model::mesh_length_scale(&mesh.rest_positions)),
            ..self.model.clone()
        }
    }

    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let p = &self.phantom;
        let s = &self.sweep;
        let m = &self.model;
        let t = &self.train;
        let paths = &self.paths;
        let path = |p: &PathBuf| p.display().to_string();
        vec![
            ("seed", self.seed.to_string()),
            ("jobs", self.jobs.to_string()),
            ("phantom.size", join(&p.size)),
            ("phantom.cells", join(&p.cells)),
            ("phantom.inclusions", format_inclusions(&p.inclusions)),
            ("phantom.fixed_face", p.fixed_face.as_str().to_string()),
            ("material.young_modulus", s.material.young_modulus.to_string()),
            ("material.poisson_ratio", s.material.poisson_ratio.to_string()),
            ("sweep.grid", join(&s.geometry.grid)),
            ("sweep.spacing", s.geometry.spacing.to_string()),
            ("sweep.half_lengths", join(&s.geometry.half_lengths)),
            ("sweep.step_mm", s.geometry.step_mm.to_string()),
            ("sweep.depth_steps", s.depth_steps.to_string()),
            ("sweep.geometry_update", s.geometry_update.to_string()),
            ("model.layers", m.layers.to_string()),
            ("model.heads", m.heads.to_string()),
            ("model.hidden", m.hidden.to_string()),
            ("model.edge_features", m.use_edge_features.to_string()),
            ("model.negative_slope", m.negative_slope.to_string()),
            ("model.length_scale", self.length_scale.map_or("auto".into(), |v| v.to_string())),
            ("train.batch_size", t.batch_size.to_string()),
            ("train.lr", t.initial_lr.to_string()),
            ("train.plateau_factor", t.plateau_factor.to_string()),
            ("train.plateau_patience", t.plateau_patience.to_string()),
            ("train.min_lr", t.min_lr.to_string()),
            ("train.early_stop_patience", t.early_stop_patience.to_string()),
            ("train.weight_decay", t.weight_decay.to_string()),
            ("train.max_epochs", t.max_epochs.to_string()),
            ("train.rel", t.rel.to_string()),
            ("train.lambda", t.rel_weight.to_string()),
            ("train.rel_virtual_edges", t.rel_virtual_edges.to_string()),
            ("graph.vn", self.graph.virtual_nodes.to_string()),
            ("graph.ve", self.graph.virtual_edges.to_string()),
            ("paths.mesh", path(&paths.mesh)),
            ("paths.dataset", path(&paths.dataset)),
            ("paths.graphs", path(&paths.graphs)),
            ("paths.checkpoint", path(&paths.checkpoint)),
            ("paths.curves", path(&paths.curves)),
            ("paths.report", path(&paths.report)),
            ("paths.ablation", path(&paths.ablation)),
            ("paths.prediction", path(&paths.prediction)),
            ("paths.profile", path(&paths.profile)),
        ]
    }

    pub fn dump(&self) -> String {
        self.entries().iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn geometry(&self) -> &ProbeGeometry {
        &self.sweep.geometry
    }

    pub fn material(&self) -> &MaterialParams {
        &self.sweep.material
    }
}

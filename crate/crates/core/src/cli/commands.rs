use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use super::{write_manifest, RunConfig};
use crate::error::{Error, Result};
use crate::graph::{write_graph_cache, GraphBuilder, GraphOptions};
use crate::mesh::{center_mesh, generate_phantom, load_mesh, save_mesh, Mesh};
use crate::model::{load_checkpoint, predict, save_checkpoint, Checkpoint, ModelParams};
use crate::oracle::{load_dataset, run_sweep, save_dataset, simulate_pose, Dataset, SweepConfig};
use crate::train::{
    build_split, evaluate, run_ablation, run_experiment, write_metrics_row, zero_predictor, AblationRow, ABLATION_GRID,
    METRICS_HEADER,
};

fn create_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<std::fs::File>> {
    create_parent(path)?;
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(BufWriter::new(f))
}

fn load_inputs(cfg: &RunConfig) -> Result<(Mesh, Dataset)> {
    let mesh = load_mesh(&cfg.paths.mesh)?;
    let dataset = load_dataset(&cfg.paths.dataset)?;
    dataset.check_mesh(mesh.content_hash())?;
    Ok((mesh, dataset))
}

fn load_model(cfg: &RunConfig, mesh: &Mesh) -> Result<Checkpoint> {
    let ck = load_checkpoint(&cfg.paths.checkpoint)?;
    if ck.mesh_hash != mesh.content_hash() {
        return Err(Error::HashMismatch {
            what: "checkpoint vs mesh",
            expected: mesh.content_hash(),
            found: ck.mesh_hash,
        });
    }
    Ok(ck)
}

fn row_of(cfg: &RunConfig, params: &ModelParams, options: GraphOptions) -> AblationRow {
    AblationRow {
        experiment: 0,
        heads: params.config.heads,
        edge_features: params.config.use_edge_features,
        rel: cfg.train.rel,
        virtual_nodes: options.virtual_nodes,
        virtual_edges: options.virtual_edges,
    }
}

pub fn cmd_phantom(cfg: &RunConfig) -> Result<()> {
    let mesh = center_mesh(&generate_phantom(&cfg.phantom)?);
    create_parent(&cfg.paths.mesh)?;
    save_mesh(&mesh, &cfg.paths.mesh)?;
    write_manifest(&cfg.paths.mesh, "phantom", cfg, &[], &[])?;
    log::info!(
        "phantom: {} nodes, {} tetrahedra, {} rigid components -> {}",
        mesh.node_count(),
        mesh.tetrahedra.len(),
        mesh.rigid_count,
        cfg.paths.mesh.display()
    );
    Ok(())
}

pub fn cmd_simulate(cfg: &RunConfig) -> Result<()> {
    let mesh = load_mesh(&cfg.paths.mesh)?;
    let start = Instant::now();
    let result = run_sweep(&mesh, &cfg.sweep)?;
    if result.dataset.samples.is_empty() {
        return Err(Error::Numerical("every probe pose failed; no samples produced".into()));
    }
    create_parent(&cfg.paths.dataset)?;
    save_dataset(&result.dataset, &cfg.paths.dataset)?;
    write_manifest(
        &cfg.paths.dataset,
        "simulate",
        cfg,
        &[("mesh", &cfg.paths.mesh)],
        &[("mesh_hash", mesh.content_hash())],
    )?;
    log::info!(
        "simulate: {} samples ({} poses failed) in {:.1} s -> {}",
        result.dataset.samples.len(),
        result.failures.len(),
        start.elapsed().as_secs_f64(),
        cfg.paths.dataset.display()
    );
    Ok(())
}

pub fn cmd_build_graphs(cfg: &RunConfig) -> Result<()> {
    let (mesh, dataset) = load_inputs(cfg)?;
    let graphs = GraphBuilder::new(&mesh, cfg.graph)?.build_dataset(&mesh, &dataset, cfg.jobs)?;
    let mut w = create(&cfg.paths.graphs)?;
    write_graph_cache(&mut w, mesh.content_hash(), cfg.graph, &graphs)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(&cfg.paths.graphs, e))?;
    write_manifest(
        &cfg.paths.graphs,
        "build-graphs",
        cfg,
        &[("mesh", &cfg.paths.mesh), ("dataset", &cfg.paths.dataset)],
        &[("mesh_hash", mesh.content_hash())],
    )?;
    log::info!("build-graphs: {} graphs -> {}", graphs.len(), cfg.paths.graphs.display());
    Ok(())
}

pub fn cmd_train(cfg: &RunConfig) -> Result<()> {
    let (mesh, dataset) = load_inputs(cfg)?;
    let data = build_split(&mesh, &dataset, cfg.graph, cfg.seed, cfg.jobs)?;
    log::info!(
        "split: {}/{}/{} positions, {}/{}/{} samples",
        data.split.train.len(),
        data.split.val.len(),
        data.split.test.len(),
        data.train.len(),
        data.val.len(),
        data.test.len()
    );
    let result = run_experiment(&cfg.model_for(&mesh), &cfg.train, &data)?;
    let ck = Checkpoint {
        params: result.outcome.best.clone(),
        mesh_hash: mesh.content_hash(),
        graph_options: cfg.graph,
    };
    create_parent(&cfg.paths.checkpoint)?;
    save_checkpoint(&ck, &cfg.paths.checkpoint)?;

    let mut w = create(&cfg.paths.curves)?;
    let io = |e| Error::io(&cfg.paths.curves, e);
    writeln!(w, "epoch,train_loss,train_mee,val_loss,val_mee,lr").map_err(io)?;
    for r in &result.outcome.curve {
        // Full precision: the curve doubles as a determinism check.
        writeln!(w, "{},{:e},{:e},{:e},{:e},{:e}", r.epoch, r.train_loss, r.train_mee, r.val_loss, r.val_mee, r.lr)
            .map_err(io)?;
    }
    w.flush().map_err(io)?;

    write_report(cfg, &[("test", row_of(cfg, &ck.params, cfg.graph), result.test)])?;
    let inputs = [("mesh", cfg.paths.mesh.as_path()), ("dataset", cfg.paths.dataset.as_path())];
    let upstream = [("mesh_hash", mesh.content_hash())];
    for artifact in [&cfg.paths.checkpoint, &cfg.paths.curves] {
        write_manifest(artifact, "train", cfg, &inputs, &upstream)?;
    }
    log::info!(
        "train: best epoch {} of {}, test MEE {:.4} mm -> {}",
        result.outcome.best_epoch,
        result.outcome.curve.len(),
        result.test.mee,
        cfg.paths.checkpoint.display()
    );
    Ok(())
}

fn write_report(cfg: &RunConfig, rows: &[(&str, AblationRow, crate::train::MetricsReport)]) -> Result<()> {
    let mut w = create(&cfg.paths.report)?;
    let io = |e| Error::io(&cfg.paths.report, e);
    writeln!(w, "{METRICS_HEADER}").map_err(io)?;
    for (label, row, m) in rows {
        write_metrics_row(&mut w, label, row, m).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn cmd_eval(cfg: &RunConfig) -> Result<()> {
    let (mesh, dataset) = load_inputs(cfg)?;
    let ck = load_model(cfg, &mesh)?;
    let data = build_split(&mesh, &dataset, ck.graph_options, cfg.seed, cfg.jobs)?;
    let report = evaluate(&ck.params, &data.test)?;
    let zero = zero_predictor(&data.test)?;
    let row = row_of(cfg, &ck.params, ck.graph_options);
    write_report(cfg, &[("test", row, report), ("zero_predictor", row, zero)])?;
    write_manifest(
        &cfg.paths.report,
        "eval",
        cfg,
        &[
            ("mesh", &cfg.paths.mesh),
            ("dataset", &cfg.paths.dataset),
            ("checkpoint", &cfg.paths.checkpoint),
        ],
        &[("mesh_hash", mesh.content_hash())],
    )?;
    log::info!(
        "eval: test MEE {:.4} mm (zero predictor {:.4} mm) over {} samples",
        report.mee,
        zero.mee,
        report.samples
    );
    Ok(())
}

pub fn cmd_ablate(cfg: &RunConfig, only: &[usize]) -> Result<()> {
    let (mesh, dataset) = load_inputs(cfg)?;
    if let Some(bad) = only.iter().find(|&&r| r == 0 || r > ABLATION_GRID.len()) {
        return Err(Error::Config(format!("ablation row {bad} does not exist (1..=13)")));
    }
    let rows: Vec<AblationRow> = ABLATION_GRID
        .iter()
        .filter(|r| only.is_empty() || only.contains(&r.experiment))
        .copied()
        .collect();
    let results = run_ablation(&rows, &cfg.model_for(&mesh), &cfg.train, &mesh, &dataset, cfg.seed, cfg.jobs);
    let mut w = create(&cfg.paths.ablation)?;
    let io = |e| Error::io(&cfg.paths.ablation, e);
    writeln!(w, "{METRICS_HEADER}").map_err(io)?;
    let mut failed = 0;
    for r in &results {
        let label = r.row.experiment.to_string();
        match &r.result {
            Ok((m, _)) => write_metrics_row(&mut w, &label, &r.row, m).map_err(io)?,
            Err(_) => {
                failed += 1;
                let nan = crate::train::MetricsReport {
                    mee: f64::NAN,
                    mae: f64::NAN,
                    mse: f64::NAN,
                    rigid_mee: f64::NAN,
                    soft_mee: f64::NAN,
                    ree: f64::NAN,
                    samples: 0,
                    infer_ms: f64::NAN,
                };
                write_metrics_row(&mut w, &label, &r.row, &nan).map_err(io)?
            }
        }
    }
    w.flush().map_err(io)?;
    write_manifest(
        &cfg.paths.ablation,
        "ablate",
        cfg,
        &[("mesh", &cfg.paths.mesh), ("dataset", &cfg.paths.dataset)],
        &[("mesh_hash", mesh.content_hash())],
    )?;
    if failed == results.len() {
        return Err(Error::Numerical("every ablation row failed".into()));
    }
    Ok(())
}

pub fn cmd_predict(cfg: &RunConfig, sample: usize) -> Result<()> {
    let (mesh, dataset) = load_inputs(cfg)?;
    let ck = load_model(cfg, &mesh)?;
    let s = dataset.samples.get(sample).ok_or_else(|| {
        Error::Invalid(format!("sample {sample} out of range (dataset has {})", dataset.samples.len()))
    })?;
    let graph = GraphBuilder::new(&mesh, ck.graph_options)?.build(s)?;
    let pred = predict(&ck.params, &graph)?;
    let mut w = create(&cfg.paths.prediction)?;
    let io = |e| Error::io(&cfg.paths.prediction, e);
    writeln!(
        w,
        "# sample {sample} position ({}, {}) angle {} depth {}; dx dy dz (mm) per mesh node",
        s.pose.position.i,
        s.pose.position.j,
        s.pose.angle.degrees(),
        s.pose.depth
    )
    .map_err(io)?;
    for i in 0..mesh.node_count() {
        let r = pred.row(i);
        writeln!(w, "{:e} {:e} {:e}", r[0], r[1], r[2]).map_err(io)?;
    }
    w.flush().map_err(io)?;
    write_manifest(
        &cfg.paths.prediction,
        "predict",
        cfg,
        &[
            ("mesh", &cfg.paths.mesh),
            ("dataset", &cfg.paths.dataset),
            ("checkpoint", &cfg.paths.checkpoint),
        ],
        &[("mesh_hash", mesh.content_hash())],
    )?;
    Ok(())
}

#[derive(Debug, Clone)]
pub struct ProfileReport {
    pub samples: usize,
    pub oracle_ms: f64,
    pub inference_ms: f64,
    /// oracle_ms / inference_ms
    pub speedup: f64,
    /// Mean inference time per depth index.
    pub per_depth_ms: Vec<(u32, f64)>,
    /// Coefficient of variation of `per_depth_ms`.
    pub inference_cv: f64,
}

impl ProfileReport {
    pub fn to_csv(&self) -> String {
        let mut s = format!(
            "metric,value\nsamples,{}\noracle_ms,{:.4}\ninference_ms,{:.4}\nspeedup,{:.4}\ninference_cv,{:.4}\n",
            self.samples, self.oracle_ms, self.inference_ms, self.speedup, self.inference_cv
        );
        for (d, ms) in &self.per_depth_ms {
            s.push_str(&format!("inference_ms_depth_{d},{ms:.4}\n"));
        }
        s
    }
}

/// Times the oracle (reproducing each chosen sample from rest, all
/// increments up to its depth) and model inference on `n` samples spread
/// evenly over the dataset, after one discarded warm-up of each.
pub fn profile_report(
    mesh: &Mesh,
    dataset: &Dataset,
    params: &ModelParams,
    options: GraphOptions,
    sweep: &SweepConfig,
    n: usize,
) -> Result<ProfileReport> {
    const MIN_SAMPLES: usize = 50;
    if n < MIN_SAMPLES || dataset.samples.len() < n {
        return Err(Error::Invalid(format!(
            "profiling needs at least {MIN_SAMPLES} samples (requested {n}, dataset has {})",
            dataset.samples.len()
        )));
    }
    let picks: Vec<usize> = (0..n).map(|k| k * dataset.samples.len() / n).collect();
    let builder = GraphBuilder::new(mesh, options)?;
    let graphs = picks
        .iter()
        .map(|&k| builder.build(&dataset.samples[k]))
        .collect::<Result<Vec<_>>>()?;

    predict(params, &graphs[0])?;
    let mut infer = Vec::with_capacity(n);
    for g in &graphs {
        let t = Instant::now();
        predict(params, g)?;
        infer.push(t.elapsed().as_secs_f64() * 1e3);
    }

    let solve = |k: usize| -> Result<f64> {
        let s = &dataset.samples[k];
        let cfg = SweepConfig {
            depth_steps: s.pose.depth,
            jobs: 1,
            ..sweep.clone()
        };
        let t = Instant::now();
        simulate_pose(mesh, &cfg, s.pose.position, s.pose.angle)?;
        Ok(t.elapsed().as_secs_f64() * 1e3)
    };
    solve(picks[0])?;
    let mut oracle = Vec::with_capacity(n);
    for &k in &picks {
        oracle.push(solve(k)?);
    }

    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let mut depths: Vec<u32> = picks.iter().map(|&k| dataset.samples[k].pose.depth).collect();
    depths.sort_unstable();
    depths.dedup();
    let per_depth_ms: Vec<(u32, f64)> = depths
        .iter()
        .map(|&d| {
            let v: Vec<f64> = picks
                .iter()
                .zip(&infer)
                .filter(|(&k, _)| dataset.samples[k].pose.depth == d)
                .map(|(_, &ms)| ms)
                .collect();
            (d, mean(&v))
        })
        .collect();
    let dm: Vec<f64> = per_depth_ms.iter().map(|(_, m)| *m).collect();
    let mu = mean(&dm);
    let sd = (dm.iter().map(|m| (m - mu) * (m - mu)).sum::<f64>() / dm.len() as f64).sqrt();
    let (oracle_ms, inference_ms) = (mean(&oracle), mean(&infer));
    Ok(ProfileReport {
        samples: n,
        oracle_ms,
        inference_ms,
        speedup: oracle_ms / inference_ms,
        per_depth_ms,
        inference_cv: if mu > 0.0 { sd / mu } else { 0.0 },
    })
}

pub fn cmd_profile(cfg: &RunConfig, n: usize) -> Result<()> {
    let (mesh, dataset) = load_inputs(cfg)?;
    let ck = load_model(cfg, &mesh)?;
    let report = profile_report(&mesh, &dataset, &ck.params, ck.graph_options, &cfg.sweep, n)?;
    create_parent(&cfg.paths.profile)?;
    std::fs::write(&cfg.paths.profile, report.to_csv()).map_err(|e| Error::io(&cfg.paths.profile, e))?;
    write_manifest(
        &cfg.paths.profile,
        "profile",
        cfg,
        &[
            ("mesh", &cfg.paths.mesh),
            ("dataset", &cfg.paths.dataset),
            ("checkpoint", &cfg.paths.checkpoint),
        ],
        &[("mesh_hash", mesh.content_hash())],
    )?;
    log::info!(
        "profile: oracle {:.2} ms, inference {:.2} ms, speed-up {:.1}x, inference CV across depths {:.1}%",
        report.oracle_ms,
        report.inference_ms,
        report.speedup,
        100.0 * report.inference_cv
    );
    Ok(())
}

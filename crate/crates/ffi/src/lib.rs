//! C interface to the mixpinn surrogate: load a mesh, a dataset and a
//! checkpoint, then predict displacement fields into caller-owned buffers.
//!
//! Every fallible call returns a [`MixStatus`]; the message of the last
//! failure on the calling thread is available from
//! [`mixpinn_last_error_message`]. Handles are opaque and must be released
//! with their matching `*_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use mixpinn::graph::{spherical, GraphBuilder};
use mixpinn::mesh::{center_mesh, generate_phantom, load_mesh, Mesh, PhantomConfig, Vec3};
use mixpinn::model::{load_checkpoint, predict, Checkpoint};
use mixpinn::oracle::{load_dataset, Dataset, GridPos, ProbeAngle, ProbePose, SimulationSample};
use mixpinn::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MixStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    HashMismatch = 5,
    Numerical = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

/// Tetrahedral mesh with anatomy labels.
pub struct MixMesh {
    mesh: Mesh,
}

/// Ground-truth samples paired with a mesh.
pub struct MixDataset {
    dataset: Dataset,
}

/// Trained parameters plus the graph builder for the mesh they were trained on.
pub struct MixModel {
    checkpoint: Checkpoint,
    builder: GraphBuilder,
    node_count: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn status_of(err: &Error) -> MixStatus {
    match err {
        Error::Io { .. } => MixStatus::Io,
        Error::Parse { .. } | Error::Format { .. } => MixStatus::Format,
        Error::HashMismatch { .. } => MixStatus::HashMismatch,
        Error::SingularSystem { .. } | Error::Numerical(_) | Error::InvertedTet { .. } => MixStatus::Numerical,
        _ => MixStatus::InvalidArgument,
    }
}

struct Fail(MixStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> MixStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MixStatus::Ok,
        Ok(Err(Fail(code, msg))) => {
            set_error(msg);
            code
        }
        Err(_) => {
            set_error("internal panic");
            MixStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(MixStatus::NullPointer, format!("{what} is null"))
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, Fail> {
    if p.is_null() {
        return Err(null("path"));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(MixStatus::InvalidArgument, "path is not valid UTF-8".into()))?;
    Ok(PathBuf::from(s))
}

unsafe fn out_arg<'a, T>(out: *mut *mut T) -> Result<&'a mut *mut T, Fail> {
    out.as_mut().ok_or_else(|| null("output handle pointer"))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn mixpinn_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the last error message of this thread into `buf` (truncated,
/// always NUL-terminated when `len > 0`) and returns the full message
/// length excluding the terminator.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes of writes.
#[no_mangle]
pub unsafe extern "C" fn mixpinn_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            std::ptr::copy_nonoverlapping(msg.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Spherical coordinates (r, theta, phi) of a point, theta from +z.
///
/// # Safety
/// `out` must be valid for 3 writes.
#[no_mangle]
pub unsafe extern "C" fn mixpinn_spherical(x: f64, y: f64, z: f64, out: *mut f64) -> MixStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let (r, t, p) = spherical(&Vec3::new(x, y, z));
        std::slice::from_raw_parts_mut(out, 3).copy_from_slice(&[r, t, p]);
        Ok(())
    })
}

/// The default box phantom, centered.
///
/// # Safety
/// `out` must be valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn mixpinn_mesh_phantom(out: *mut *mut MixMesh) -> MixStatus {
    guard(|| {
        let out = out_arg(out)?;
        let mesh = center_mesh(&generate_phantom(&PhantomConfig::default())?);
        *out = Box::into_raw(Box::new(MixMesh { mesh }));
        Ok(())
    })
}

/// # Safety
/// `path` must be a NUL-terminated string; `out` must be valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn mixpinn_mesh_load(path: *const c_char, out: *mut *mut MixMesh) -> MixStatus {
    guard(|| {
        let out = out_arg(out)?;
        let mesh = load_mesh(&path_arg(path)?)?;
        *out = Box::into_raw(Box::new(MixMesh { mesh }));
        Ok(())
    })
}

/// Node count, or 0 for a null handle.
///
/// # Safety
/// `mesh` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mixpinn_mesh_node_count(mesh: *const MixMesh) -> usize {
    mesh.as_ref().map_or(0, |m| m.mesh.node_count())
}

/// # Safety
/// `mesh` must be null or a live handle; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn mixpinn_mesh_free(mesh: *mut MixMesh) {
    if !mesh.is_null() {
        drop(Box::from_raw(mesh));
    }
}

/// Loads a dataset and checks that it belongs to `mesh`.
///
/// # Safety
/// `path` must be a NUL-terminated string, `mesh` a live handle and `out`
/// valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn mixpinn_dataset_load(
    path: *const c_char,
    mesh: *const MixMesh,
    out: *mut *mut MixDataset,
) -> MixStatus {
    guard(|| {
        let out = out_arg(out)?;
        let mesh = mesh.as_ref().ok_or_else(|| null("mesh"))?;
        let dataset = load_dataset(&path_arg(path)?)?;
        dataset.check_mesh(mesh.mesh.content_hash())?;
        *out = Box::into_raw(Box::new(MixDataset { dataset }));
        Ok(())
    })
}

/// Sample count, or 0 for a null handle.
///
/// # Safety
/// `dataset` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mixpinn_dataset_len(dataset: *const MixDataset) -> usize {
    dataset.as_ref().map_or(0, |d| d.dataset.samples.len())
}

/// # Safety
/// `dataset` must be null or a live handle; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn mixpinn_dataset_free(dataset: *mut MixDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// Loads a checkpoint trained on `mesh`.
///
/// # Safety
/// `path` must be a NUL-terminated string, `mesh` a live handle and `out`
/// valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn mixpinn_model_load(
    path: *const c_char,
    mesh: *const MixMesh,
    out: *mut *mut MixModel,
) -> MixStatus {
    guard(|| {
        let out = out_arg(out)?;
        let mesh = &mesh.as_ref().ok_or_else(|| null("mesh"))?.mesh;
        let checkpoint = load_checkpoint(&path_arg(path)?)?;
        if checkpoint.mesh_hash != mesh.content_hash() {
            return Err(Error::HashMismatch {
                what: "checkpoint vs mesh",
                expected: mesh.content_hash(),
                found: checkpoint.mesh_hash,
            }
            .into());
        }
        let builder = GraphBuilder::new(mesh, checkpoint.graph_options)?;
        *out = Box::into_raw(Box::new(MixModel {
            checkpoint,
            builder,
            node_count: mesh.node_count(),
        }));
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a live handle; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn mixpinn_model_free(model: *mut MixModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

fn run_model(model: &MixModel, sample: &SimulationSample, out: &mut [f64]) -> Result<(), Fail> {
    let graph = model.builder.build(sample)?;
    let pred = predict(&model.checkpoint.params, &graph)?;
    out.copy_from_slice(&pred.data()[..3 * model.node_count]);
    Ok(())
}

unsafe fn out_buffer<'a>(model: &MixModel, out: *mut f64, len: usize) -> Result<&'a mut [f64], Fail> {
    if out.is_null() {
        return Err(null("out"));
    }
    let need = 3 * model.node_count;
    if len < need {
        return Err(Fail(
            MixStatus::BufferTooSmall,
            format!("output buffer holds {len} values, {need} needed"),
        ));
    }
    Ok(std::slice::from_raw_parts_mut(out, need))
}

/// Predicts the field for dataset sample `index`, writing `3 * node_count`
/// values (x, y, z per node, row-major) into `out`.
///
/// # Safety
/// Handles must be live; `out` must be valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn mixpinn_predict_sample(
    model: *const MixModel,
    dataset: *const MixDataset,
    index: usize,
    out: *mut f64,
    len: usize,
) -> MixStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        let dataset = &dataset.as_ref().ok_or_else(|| null("dataset"))?.dataset;
        let out = out_buffer(model, out, len)?;
        let sample = dataset.samples.get(index).ok_or_else(|| {
            Fail(
                MixStatus::InvalidArgument,
                format!("sample {index} out of range ({} samples)", dataset.samples.len()),
            )
        })?;
        run_model(model, sample, out)
    })
}

/// Predicts the field for an arbitrary contact: `contact[k]` is a node index
/// and `prescribed[3k..3k+3]` its displacement.
///
/// # Safety
/// `model` must be live; `contact` valid for `count` reads, `prescribed` for
/// `3 * count` reads and `out` for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn mixpinn_predict_contact(
    model: *const MixModel,
    contact: *const usize,
    prescribed: *const f64,
    count: usize,
    out: *mut f64,
    len: usize,
) -> MixStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        if count == 0 {
            return Err(Fail(MixStatus::InvalidArgument, "contact set is empty".into()));
        }
        if contact.is_null() || prescribed.is_null() {
            return Err(null("contact or prescribed"));
        }
        let out = out_buffer(model, out, len)?;
        let nodes = std::slice::from_raw_parts(contact, count);
        let values = std::slice::from_raw_parts(prescribed, 3 * count);
        let mut pairs: Vec<(usize, Vec3)> = nodes
            .iter()
            .zip(values.chunks_exact(3))
            .map(|(&v, p)| (v, Vec3::new(p[0], p[1], p[2])))
            .collect();
        pairs.sort_by_key(|p| p.0);
        if let Some(w) = pairs.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(Fail(MixStatus::InvalidArgument, format!("contact node {} repeated", w[0].0)));
        }
        if let Some(&(v, _)) = pairs.iter().find(|p| p.0 >= model.node_count) {
            return Err(Fail(
                MixStatus::InvalidArgument,
                format!("contact node {v} out of range ({} nodes)", model.node_count),
            ));
        }
        if pairs.iter().any(|p| !(p.1.iter().all(|c| c.is_finite()))) {
            return Err(Fail(MixStatus::InvalidArgument, "prescribed displacement is not finite".into()));
        }
        let sample = SimulationSample {
            pose: ProbePose {
                position: GridPos { i: 0, j: 0 },
                angle: ProbeAngle::ALL[0],
                depth: 1,
            },
            contact_nodes: pairs.iter().map(|p| p.0).collect(),
            prescribed: pairs.iter().map(|p| p.1).collect(),
            ground_truth: vec![Vec3::zeros(); model.node_count],
        };
        run_model(model, &sample, out)
    })
}

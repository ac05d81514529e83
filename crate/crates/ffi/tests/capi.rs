use std::ffi::{c_char, CString};
use std::path::Path;
use std::ptr;

use mixpinn::graph::{GraphBuilder, GraphOptions};
use mixpinn::mesh::{center_mesh, generate_phantom, save_mesh, PhantomConfig};
use mixpinn::model::{predict, save_checkpoint, Checkpoint, ModelConfig, ModelParams};
use mixpinn::oracle::{run_sweep, save_dataset, Dataset, ProbeGeometry, SweepConfig};
use mixpinn_ffi::*;

struct Fixture {
    _dir: tempfile::TempDir,
    mesh: CString,
    dataset: CString,
    model: CString,
    stranger: CString,
    params: ModelParams,
    data: Dataset,
    options: GraphOptions,
}

fn cpath(p: &Path) -> CString {
    CString::new(p.to_str().unwrap()).unwrap()
}

fn fixture() -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let mesh = center_mesh(&generate_phantom(&PhantomConfig::default()).unwrap());
    let sweep = SweepConfig {
        geometry: ProbeGeometry {
            grid: [1, 1],
            ..ProbeGeometry::default()
        },
        depth_steps: 2,
        geometry_update: false,
        ..SweepConfig::default()
    };
    let data = run_sweep(&mesh, &sweep).unwrap().dataset;
    let mut config = ModelConfig::desk(mesh.rigid_count);
    config.hidden = 8;
    config.layers = 2;
    config.length_scale = 90.0;
    let params = ModelParams::init(&config).unwrap();
    let options = GraphOptions {
        virtual_nodes: true,
        virtual_edges: true,
    };
    let (mp, dp, cp, sp) = (
        dir.path().join("m.mesh"),
        dir.path().join("d.bin"),
        dir.path().join("c.ckpt"),
        dir.path().join("s.ckpt"),
    );
    save_mesh(&mesh, &mp).unwrap();
    save_dataset(&data, &dp).unwrap();
    let mut ck = Checkpoint {
        params: params.clone(),
        mesh_hash: mesh.content_hash(),
        graph_options: options,
    };
    save_checkpoint(&ck, &cp).unwrap();
    ck.mesh_hash ^= 1;
    save_checkpoint(&ck, &sp).unwrap();
    Fixture {
        mesh: cpath(&mp),
        dataset: cpath(&dp),
        model: cpath(&cp),
        stranger: cpath(&sp),
        _dir: dir,
        params,
        data,
        options,
    }
}

fn last_error() -> String {
    let mut buf = vec![0 as c_char; 512];
    let n = unsafe { mixpinn_last_error_message(buf.as_mut_ptr(), buf.len()) };
    let bytes: Vec<u8> = buf[..n.min(511)].iter().map(|&c| c as u8).collect();
    String::from_utf8(bytes).unwrap()
}

#[test]
fn predictions_match_the_library() {
    let f = fixture();
    unsafe {
        let mut mesh = ptr::null_mut();
        assert_eq!(mixpinn_mesh_load(f.mesh.as_ptr(), &mut mesh), MixStatus::Ok);
        let n = mixpinn_mesh_node_count(mesh);
        assert_eq!(n, 1377);
        let mut ds = ptr::null_mut();
        assert_eq!(mixpinn_dataset_load(f.dataset.as_ptr(), mesh, &mut ds), MixStatus::Ok);
        assert_eq!(mixpinn_dataset_len(ds), 8);
        let mut model = ptr::null_mut();
        assert_eq!(mixpinn_model_load(f.model.as_ptr(), mesh, &mut model), MixStatus::Ok);

        let m = mixpinn::mesh::load_mesh(Path::new(f.mesh.to_str().unwrap())).unwrap();
        let builder = GraphBuilder::new(&m, f.options).unwrap();
        for k in [0, 5] {
            let mut out = vec![0.0; 3 * n];
            assert_eq!(mixpinn_predict_sample(model, ds, k, out.as_mut_ptr(), out.len()), MixStatus::Ok);
            let expected = predict(&f.params, &builder.build(&f.data.samples[k]).unwrap()).unwrap();
            assert_eq!(&out[..], &expected.data()[..3 * n]);

            // Same contact through the explicit entry point, shuffled.
            let s = &f.data.samples[k];
            let mut nodes: Vec<usize> = s.contact_nodes.iter().rev().copied().collect();
            let mut values: Vec<f64> = s.prescribed.iter().rev().flat_map(|v| [v.x, v.y, v.z]).collect();
            let mut again = vec![0.0; 3 * n];
            let st = mixpinn_predict_contact(
                model,
                nodes.as_mut_ptr(),
                values.as_mut_ptr(),
                nodes.len(),
                again.as_mut_ptr(),
                again.len(),
            );
            assert_eq!(st, MixStatus::Ok);
            assert_eq!(again, out);
        }
        mixpinn_model_free(model);
        mixpinn_dataset_free(ds);
        mixpinn_mesh_free(mesh);
    }
}

#[test]
fn errors_carry_codes_and_messages() {
    let f = fixture();
    unsafe {
        let mut mesh = ptr::null_mut();
        assert_eq!(mixpinn_mesh_phantom(&mut mesh), MixStatus::Ok);

        let mut model = ptr::null_mut();
        assert_eq!(mixpinn_model_load(f.stranger.as_ptr(), mesh, &mut model), MixStatus::HashMismatch);
        assert!(model.is_null());
        assert!(last_error().contains("checkpoint vs mesh"), "{}", last_error());

        let missing = CString::new("/nonexistent/x.mesh").unwrap();
        let mut other = ptr::null_mut();
        assert_eq!(mixpinn_mesh_load(missing.as_ptr(), &mut other), MixStatus::Io);
        assert!(last_error().contains("/nonexistent/x.mesh"));

        assert_eq!(mixpinn_mesh_load(ptr::null(), &mut other), MixStatus::NullPointer);
        assert_eq!(mixpinn_mesh_load(f.mesh.as_ptr(), ptr::null_mut()), MixStatus::NullPointer);
        assert_eq!(mixpinn_mesh_load(f.dataset.as_ptr(), &mut other), MixStatus::Format);

        assert_eq!(mixpinn_model_load(f.model.as_ptr(), mesh, &mut model), MixStatus::Ok);
        let mut ds = ptr::null_mut();
        assert_eq!(mixpinn_dataset_load(f.dataset.as_ptr(), mesh, &mut ds), MixStatus::Ok);
        let mut small = vec![0.0; 10];
        assert_eq!(
            mixpinn_predict_sample(model, ds, 0, small.as_mut_ptr(), small.len()),
            MixStatus::BufferTooSmall
        );
        let mut out = vec![0.0; 3 * 1377];
        assert_eq!(
            mixpinn_predict_sample(model, ds, 99, out.as_mut_ptr(), out.len()),
            MixStatus::InvalidArgument
        );
        let nodes = [3usize, 3];
        let values = [0.0; 6];
        assert_eq!(
            mixpinn_predict_contact(model, nodes.as_ptr(), values.as_ptr(), 2, out.as_mut_ptr(), out.len()),
            MixStatus::InvalidArgument
        );
        assert!(last_error().contains("repeated"));
        let nodes = [5000usize];
        assert_eq!(
            mixpinn_predict_contact(model, nodes.as_ptr(), values.as_ptr(), 1, out.as_mut_ptr(), out.len()),
            MixStatus::InvalidArgument
        );
        assert_eq!(
            mixpinn_predict_contact(model, nodes.as_ptr(), values.as_ptr(), 0, out.as_mut_ptr(), out.len()),
            MixStatus::InvalidArgument
        );

        mixpinn_model_free(model);
        mixpinn_dataset_free(ds);
        mixpinn_mesh_free(mesh);
        mixpinn_mesh_free(ptr::null_mut());
        assert_eq!(mixpinn_mesh_node_count(ptr::null()), 0);
    }
}

#[test]
fn last_error_truncates_and_terminates() {
    unsafe {
        let mut m = ptr::null_mut();
        mixpinn_mesh_load(ptr::null(), &mut m);
        let full = mixpinn_last_error_message(ptr::null_mut(), 0);
        assert!(full > 4);
        let mut buf = [1 as c_char; 4];
        assert_eq!(mixpinn_last_error_message(buf.as_mut_ptr(), 4), full);
        assert_eq!(buf[3], 0);
    }
}

#[test]
fn spherical_and_version() {
    let mut out = [0.0; 3];
    unsafe {
        assert_eq!(mixpinn_spherical(0.0, 3.0, 4.0, out.as_mut_ptr()), MixStatus::Ok);
        assert_eq!(mixpinn_spherical(0.0, 3.0, 4.0, ptr::null_mut()), MixStatus::NullPointer);
        let v = std::ffi::CStr::from_ptr(mixpinn_version()).to_str().unwrap();
        assert_eq!(v, env!("CARGO_PKG_VERSION"));
    }
    assert!((out[0] - 5.0).abs() < 1e-15);
    assert!((out[1] - (4.0f64 / 5.0).acos()).abs() < 1e-15);
    assert!((out[2] - std::f64::consts::FRAC_PI_2).abs() < 1e-15);
}

#[test]
fn header_declares_every_export() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR"));
    let header = std::fs::read_to_string(root.join("include/mixpinn.h")).unwrap();
    let src = std::fs::read_to_string(root.join("src/lib.rs")).unwrap();
    let exports: Vec<&str> = src
        .lines()
        .filter_map(|l| l.split("extern \"C\" fn ").nth(1))
        .map(|rest| rest.split('(').next().unwrap())
        .collect();
    assert!(exports.len() >= 12, "{exports:?}");
    for name in exports {
        assert!(header.contains(&format!("{name}(")), "{name} missing from header");
    }
    for ty in ["MixMesh", "MixDataset", "MixModel", "MIX_STATUS_HASH_MISMATCH"] {
        assert!(header.contains(ty));
    }
}

#[test]
fn header_compiles_as_c() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR"));
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"mixpinn.h\"\nint main(void) { MixMesh *m = 0; MixStatus s = mixpinn_mesh_phantom(&m); mixpinn_mesh_free(m); return (int)s; }\n",
    )
    .unwrap();
    let status = std::process::Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(root.join("include"))
        .arg(&src)
        .status()
        .expect("a C compiler (cc) on PATH");
    assert!(status.success());
}

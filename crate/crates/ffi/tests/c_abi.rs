use std::ffi::{CStr, CString};
use std::ptr;

use skipnet::geometry::{farthest_point_sample, PointCloud};
use skipnet::model::{Model, ModelConfig, SkipMode, StageConfig};
use skipnet::tensor::softmax;
use skipnet::training::{encode_checkpoint, save_checkpoint};
use skipnet_ffi::*;

fn small_config() -> ModelConfig {
    ModelConfig {
        stages: vec![
            StageConfig {
                n_out: 8,
                radius: 0.5,
                group_size: 4,
                mlp_widths: vec![8],
                reduce_width: 8,
            },
            StageConfig {
                n_out: 4,
                radius: 1.0,
                group_size: 4,
                mlp_widths: vec![8],
                reduce_width: 8,
            },
        ],
        embed_width: None,
        global_hidden: vec![],
        global_width: 16,
        fc_widths: vec![8],
        n_classes: 3,
        skip_mode: SkipMode::Concatenation,
        dropout_rate: 0.0,
    }
}

fn cloud(n: usize) -> Vec<f64> {
    (0..n)
        .flat_map(|i| {
            let t = i as f64 * 0.37;
            [t.sin(), (1.7 * t).cos(), (0.3 * t).sin() * 0.5]
        })
        .collect()
}

fn last_error() -> String {
    let p = skipnet_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn load(path: &std::path::Path) -> (SkipnetStatus, *mut SkipnetModel) {
    let c = CString::new(path.to_str().unwrap()).unwrap();
    let mut handle = ptr::null_mut();
    let status = unsafe { skipnet_model_load(c.as_ptr(), &mut handle) };
    (status, handle)
}

#[test]
fn classify_through_handle_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.pskn");
    let model = Model::new(small_config(), 5).unwrap();
    let classes: Vec<String> = ["red", "green", "blue"].map(String::from).to_vec();
    save_checkpoint(&model, &classes, &path).unwrap();

    let (status, handle) = load(&path);
    assert_eq!(status, SkipnetStatus::Ok);
    unsafe {
        assert_eq!(skipnet_model_num_classes(handle), 3);
        assert_eq!(skipnet_model_param_count(handle), model.param_count());
        assert_eq!(
            CStr::from_ptr(skipnet_model_class_name(handle, 2)).to_str().unwrap(),
            "blue"
        );
        assert!(skipnet_model_class_name(handle, 3).is_null());

        let pts = cloud(40);
        let mut probs = [0.0; 3];
        let mut label = usize::MAX;
        let s = skipnet_model_classify(handle, pts.as_ptr(), 40, probs.as_mut_ptr(), 3, &mut label);
        assert_eq!(s, SkipnetStatus::Ok);
        let c = PointCloud::new(pts.chunks(3).map(|p| [p[0], p[1], p[2]]).collect()).unwrap();
        let expect = softmax(&model.logits(&c).unwrap());
        assert_eq!(probs.to_vec(), expect);
        assert_eq!(label, skipnet::model::argmax(&expect));

        let s = skipnet_model_classify(handle, pts.as_ptr(), 40, probs.as_mut_ptr(), 2, ptr::null_mut());
        assert_eq!(s, SkipnetStatus::InvalidArgument);
        let s = skipnet_model_classify(handle, pts.as_ptr(), 3, ptr::null_mut(), 0, &mut label);
        assert_eq!(s, SkipnetStatus::Input);
        assert!(last_error().contains("points"));
        skipnet_model_free(handle);
    }
}

#[test]
fn bad_checkpoints_report_errors() {
    let dir = tempfile::tempdir().unwrap();
    let bytes = encode_checkpoint(&Model::new(small_config(), 1).unwrap(), &[]);
    let path = dir.path().join("cut.pskn");
    std::fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
    let (status, handle) = load(&path);
    assert_eq!(status, SkipnetStatus::Checkpoint);
    assert!(handle.is_null());
    assert!(last_error().contains("truncated"));

    let (status, _) = load(&dir.path().join("missing.pskn"));
    assert_eq!(status, SkipnetStatus::Checkpoint);

    let mut out = ptr::null_mut();
    assert_eq!(
        unsafe { skipnet_model_load(ptr::null(), &mut out) },
        SkipnetStatus::NullPointer
    );
    unsafe { skipnet_model_free(ptr::null_mut()) };
    assert_eq!(unsafe { skipnet_model_num_classes(ptr::null()) }, 0);
}

#[test]
fn geometry_helpers() {
    let pts = cloud(30);
    let mut idx = [0usize; 5];
    let s = unsafe { skipnet_farthest_point_sample(pts.as_ptr(), 30, 5, 0, idx.as_mut_ptr()) };
    assert_eq!(s, SkipnetStatus::Ok);
    let p: Vec<[f64; 3]> = pts.chunks(3).map(|c| [c[0], c[1], c[2]]).collect();
    assert_eq!(idx.to_vec(), farthest_point_sample(&p, 5, 0).unwrap());
    let s = unsafe { skipnet_farthest_point_sample(pts.as_ptr(), 30, 31, 0, idx.as_mut_ptr()) };
    assert_eq!(s, SkipnetStatus::InvalidArgument);

    let plane: Vec<f64> = (0..20).flat_map(|i| [i as f64, (i * i % 7) as f64, 0.0]).collect();
    let mut flat = false;
    assert_eq!(
        unsafe { skipnet_detect_flat(plane.as_ptr(), 20, 1e-4, &mut flat) },
        SkipnetStatus::Ok
    );
    assert!(flat);
    assert_eq!(
        unsafe { skipnet_detect_flat(pts.as_ptr(), 30, 1e-4, &mut flat) },
        SkipnetStatus::Ok
    );
    assert!(!flat);
    assert_eq!(
        unsafe { skipnet_detect_flat(pts.as_ptr(), 3, 1e-4, &mut flat) },
        SkipnetStatus::Input
    );
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/skipnet.h")).unwrap();
    for name in [
        "skipnet_last_error",
        "skipnet_model_load",
        "skipnet_model_free",
        "skipnet_model_num_classes",
        "skipnet_model_param_count",
        "skipnet_model_class_name",
        "skipnet_model_classify",
        "skipnet_detect_flat",
        "skipnet_farthest_point_sample",
        "SKIPNET_STATUS_CHECKPOINT",
    ] {
        assert!(header.contains(name), "{name} missing from header");
    }
}

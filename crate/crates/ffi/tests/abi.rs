//! Exercises the C ABI from Rust: status codes, thread-local error messages,
//! and the opaque model handle against their safe-API equivalents.

use std::ffi::{CStr, CString};
use std::ptr;

use smtl_core::alpha::project_to_simplex;
use smtl_core::data::make_synthetic_tasks;
use smtl_core::divergence::{js, DiscreteDistribution};
use smtl_core::nn::predict_classes;
use smtl_core::tensor::Tensor;
use smtl_core::trainer::{TrainConfig, Trainer};

use smtl_ffi::{
    smtl_class_balanced_weights, smtl_js, smtl_kl, smtl_last_error_message, smtl_model_free,
    smtl_model_info, smtl_model_load, smtl_model_predict, smtl_project_to_simplex,
    smtl_run_experiment, smtl_tv, smtl_version, SmtlModel, SmtlStatus,
};

fn last_error() -> Option<String> {
    let ptr = smtl_last_error_message();
    if ptr.is_null() {
        return None;
    }
    Some(unsafe { CStr::from_ptr(ptr) }.to_string_lossy().into_owned())
}

#[test]
fn version_is_a_static_string() {
    let v = unsafe { CStr::from_ptr(smtl_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn divergences_match_safe_api() {
    let p = [0.7, 0.2, 0.1];
    let q = [0.1, 0.3, 0.6];
    let mut out = f64::NAN;
    let status = unsafe { smtl_js(p.as_ptr(), q.as_ptr(), 3, &mut out) };
    assert_eq!(status, SmtlStatus::Ok);
    assert!(last_error().is_none());
    let dp = DiscreteDistribution::new(p.to_vec()).unwrap();
    let dq = DiscreteDistribution::new(q.to_vec()).unwrap();
    assert_eq!(out, js(&dp, &dq).unwrap());

    let status = unsafe { smtl_tv(p.as_ptr(), q.as_ptr(), 3, &mut out) };
    assert_eq!(status, SmtlStatus::Ok);
    assert_eq!(out, 0.6); // half L1 of (0.6, 0.1, 0.5)

    let status = unsafe { smtl_kl(p.as_ptr(), p.as_ptr(), 3, &mut out) };
    assert_eq!(status, SmtlStatus::Ok);
    assert_eq!(out, 0.0);
}

#[test]
fn invalid_distribution_reports_message() {
    let p = [0.3, 0.3]; // sums to 0.6
    let mut out = 0.0;
    let status = unsafe { smtl_js(p.as_ptr(), p.as_ptr(), 2, &mut out) };
    assert_eq!(status, SmtlStatus::InvalidArgument);
    let msg = last_error().expect("message should be set");
    assert!(msg.contains("sum"), "unexpected message: {msg}");
}

#[test]
fn null_pointers_are_rejected() {
    let p = [0.5, 0.5];
    let mut out = 0.0;
    assert_eq!(
        unsafe { smtl_js(ptr::null(), p.as_ptr(), 2, &mut out) },
        SmtlStatus::NullPointer
    );
    assert_eq!(
        unsafe { smtl_js(p.as_ptr(), ptr::null(), 2, &mut out) },
        SmtlStatus::NullPointer
    );
    assert_eq!(
        unsafe { smtl_js(p.as_ptr(), p.as_ptr(), 2, ptr::null_mut()) },
        SmtlStatus::NullPointer
    );
    assert!(last_error().is_some());

    // A later successful call clears the message.
    assert_eq!(
        unsafe { smtl_js(p.as_ptr(), p.as_ptr(), 2, &mut out) },
        SmtlStatus::Ok
    );
    assert!(last_error().is_none());
}

#[test]
fn projection_matches_safe_api() {
    let v = [1.4, -0.3, 0.2, 0.9];
    let mut out = [0.0; 4];
    let status = unsafe { smtl_project_to_simplex(v.as_ptr(), 4, out.as_mut_ptr()) };
    assert_eq!(status, SmtlStatus::Ok);
    assert_eq!(out.to_vec(), project_to_simplex(&v).unwrap());
}

#[test]
fn class_weights_balanced_and_invalid() {
    let counts = [30usize, 30, 30];
    let mut out = [0.0; 3];
    let status =
        unsafe { smtl_class_balanced_weights(counts.as_ptr(), 3, out.as_mut_ptr()) };
    assert_eq!(status, SmtlStatus::Ok);
    assert_eq!(out, [1.0, 1.0, 1.0]);

    // Absent classes get weight zero; only an all-empty task is an error.
    let sparse = [10usize, 0];
    let mut out = [0.0; 2];
    let status = unsafe { smtl_class_balanced_weights(sparse.as_ptr(), 2, out.as_mut_ptr()) };
    assert_eq!(status, SmtlStatus::Ok);
    assert_eq!(out, [1.0, 0.0]);

    let empty = [0usize, 0];
    let status = unsafe { smtl_class_balanced_weights(empty.as_ptr(), 2, out.as_mut_ptr()) };
    assert_eq!(status, SmtlStatus::InvalidArgument);
    assert!(last_error().is_some());
}

#[test]
fn model_handle_roundtrip() {
    let splits = make_synthetic_tasks(2, 3, 4, 12, 0.3, 0.5, 11).unwrap();
    let train: Vec<_> = splits.iter().map(|s| s.train.clone()).collect();
    let test: Vec<_> = splits.into_iter().map(|s| s.test).collect();
    let cfg = TrainConfig {
        epochs: 2,
        batch_size: 12,
        hidden_dims: vec![6],
        feature_dim: 4,
        seed: 1,
        ..TrainConfig::default()
    };
    let mut trainer = Trainer::new(cfg, train.clone(), test).unwrap();
    trainer.fit().unwrap();
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("model");
    trainer.model().save(&ckpt).unwrap();

    let c_dir = CString::new(ckpt.to_str().unwrap()).unwrap();
    let mut handle: *mut SmtlModel = ptr::null_mut();
    assert_eq!(
        unsafe { smtl_model_load(c_dir.as_ptr(), &mut handle) },
        SmtlStatus::Ok
    );
    assert!(!handle.is_null());

    let (mut tasks, mut input_dim, mut classes) = (0usize, 0usize, 0usize);
    assert_eq!(
        unsafe { smtl_model_info(handle, &mut tasks, &mut input_dim, &mut classes) },
        SmtlStatus::Ok
    );
    assert_eq!((tasks, input_dim, classes), (2, 4, 3));

    let rows = train[0].num_samples().min(5);
    let features: Vec<f64> = (0..rows)
        .flat_map(|r| train[0].features().row(r).to_vec())
        .collect();
    let mut labels = vec![0usize; rows];
    assert_eq!(
        unsafe {
            smtl_model_predict(handle, 0, features.as_ptr(), rows, 4, labels.as_mut_ptr())
        },
        SmtlStatus::Ok
    );
    let x = Tensor::new([rows, 4], features.clone()).unwrap();
    let expected = predict_classes(&trainer.model().predict(0, &x).unwrap());
    assert_eq!(labels, expected);

    // Out-of-range task and mismatched dim are rejected without UB.
    assert_eq!(
        unsafe {
            smtl_model_predict(handle, 9, features.as_ptr(), rows, 4, labels.as_mut_ptr())
        },
        SmtlStatus::InvalidArgument
    );
    assert_eq!(
        unsafe {
            smtl_model_predict(handle, 0, features.as_ptr(), rows, 3, labels.as_mut_ptr())
        },
        SmtlStatus::InvalidArgument
    );

    unsafe { smtl_model_free(handle) };
    unsafe { smtl_model_free(ptr::null_mut()) }; // NULL is a no-op
}

#[test]
fn model_load_missing_dir_fails() {
    let c_dir = CString::new("/nonexistent/smtl-model").unwrap();
    let mut handle: *mut SmtlModel = ptr::null_mut();
    let status = unsafe { smtl_model_load(c_dir.as_ptr(), &mut handle) };
    assert_ne!(status, SmtlStatus::Ok);
    assert!(handle.is_null());
    assert!(last_error().is_some());
}

#[test]
fn run_experiment_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let config = serde_json::json!({
        "data": {
            "synthetic": {
                "num_tasks": 2, "num_classes": 2, "dim": 3,
                "n_per_class": 8, "sigma_task": 0.3, "sigma": 0.5, "seed": 5
            }
        },
        "train": { "epochs": 2, "batch_size": 8, "hidden_dims": [4], "feature_dim": 3 },
        "grid": { "modes": ["smtl"], "seeds": [0], "drift_ratios": [0.0] },
        "output_dir": out,
    });
    let path = dir.path().join("config.json");
    std::fs::write(&path, serde_json::to_vec_pretty(&config).unwrap()).unwrap();

    let c_path = CString::new(path.to_str().unwrap()).unwrap();
    assert_eq!(unsafe { smtl_run_experiment(c_path.as_ptr()) }, SmtlStatus::Ok);
    assert!(out.join("results.md").is_file());

    // A config that fails validation maps to the config status.
    let broken = serde_json::json!({
        "data": {},
        "train": {},
        "grid": {},
        "output_dir": dir.path().join("out2"),
    });
    let bad_path = dir.path().join("broken.json");
    std::fs::write(&bad_path, serde_json::to_vec_pretty(&broken).unwrap()).unwrap();
    let c_bad = CString::new(bad_path.to_str().unwrap()).unwrap();
    assert_eq!(
        unsafe { smtl_run_experiment(c_bad.as_ptr()) },
        SmtlStatus::Config
    );
    assert_eq!(
        unsafe { smtl_run_experiment(ptr::null()) },
        SmtlStatus::NullPointer
    );
}

use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use balshap::mlp::{Activation, DenseLayer, MlpModel};
use balshap_ffi::*;

fn last_error() -> String {
    let p = balshap_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn arrays(n: usize, d: usize, minority: usize) -> (Vec<f64>, Vec<u8>) {
    let x = (0..n * d).map(|v| ((v * 37) % 11) as f64 / 3.0).collect();
    let y = (0..n).map(|i| u8::from(i < minority)).collect();
    (x, y)
}

fn dataset(n: usize, d: usize, minority: usize) -> *mut BalshapDataset {
    let (x, y) = arrays(n, d, minority);
    let mut ds = ptr::null_mut();
    let s = unsafe { balshap_dataset_from_arrays(x.as_ptr(), y.as_ptr(), n, d, &mut ds) };
    assert_eq!(s, BalshapStatus::Ok);
    ds
}

/// Sigmoid over a ReLU layer: f = sigmoid(relu(x0 + x1) - 0.5 x2).
fn model_json(dir: &Path) -> PathBuf {
    let m = MlpModel::from_layers(vec![
        DenseLayer::new(3, 2, vec![1.0, 1.0, 0.0, 0.0, 0.0, 1.0], vec![0.0, 0.0], Activation::Relu).unwrap(),
        DenseLayer::new(2, 1, vec![1.0, -0.5], vec![-1.0], Activation::Sigmoid).unwrap(),
    ])
    .unwrap();
    let p = dir.join("model.json");
    m.save_json(&p).unwrap();
    p
}

#[test]
fn dataset_round_trip() {
    let ds = dataset(10, 3, 2);
    let (mut n, mut d, mut rate) = (0, 0, 0.0);
    unsafe {
        assert_eq!(balshap_dataset_dims(ds, &mut n, &mut d), BalshapStatus::Ok);
        assert_eq!(balshap_dataset_event_rate(ds, &mut rate), BalshapStatus::Ok);
        let mut buf = vec![0.0; 30];
        assert_eq!(balshap_dataset_copy_features(ds, buf.as_mut_ptr(), 30), BalshapStatus::Ok);
        assert_eq!(buf, arrays(10, 3, 2).0);
        assert_eq!(
            balshap_dataset_copy_features(ds, buf.as_mut_ptr(), 29),
            BalshapStatus::DimensionMismatch
        );
        balshap_dataset_free(ds);
    }
    assert_eq!((n, d, rate), (10, 3, 0.2));
}

#[test]
fn errors_carry_status_and_message() {
    let mut ds = ptr::null_mut();
    unsafe {
        let bad = [0u8, 2];
        let x = [0.0, 1.0];
        assert_eq!(
            balshap_dataset_from_arrays(x.as_ptr(), bad.as_ptr(), 2, 1, &mut ds),
            BalshapStatus::Parse
        );
        assert!(ds.is_null());
        assert!(last_error().contains("invalid label"));

        assert_eq!(balshap_dataset_dims(ptr::null(), &mut 0, &mut 0), BalshapStatus::NullPointer);
        assert!(last_error().contains("dataset is null"));

        let missing = CString::new("/nonexistent/file.csv").unwrap();
        assert_eq!(balshap_dataset_load_csv(missing.as_ptr(), ptr::null(), &mut ds), BalshapStatus::Io);

        let mut auc = 0.0;
        assert_eq!(
            balshap_auc([0.1, 0.2].as_ptr(), [1u8, 1].as_ptr(), 2, &mut auc),
            BalshapStatus::InvalidConfig
        );
        balshap_dataset_free(ptr::null_mut());
    }
}

#[test]
fn csv_load() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("d.csv");
    std::fs::write(&p, "a,b,outcome\n1,2,0\n3,4,1\n").unwrap();
    let path = CString::new(p.to_str().unwrap()).unwrap();
    let label = CString::new("outcome").unwrap();
    let mut ds = ptr::null_mut();
    let (mut n, mut d) = (0, 0);
    unsafe {
        assert_eq!(balshap_dataset_load_csv(path.as_ptr(), label.as_ptr(), &mut ds), BalshapStatus::Ok);
        balshap_dataset_dims(ds, &mut n, &mut d);
        balshap_dataset_free(ds);
        assert_eq!(balshap_dataset_load_csv(path.as_ptr(), ptr::null(), &mut ds), BalshapStatus::Parse);
    }
    assert_eq!((n, d), (2, 2));
}

#[test]
fn balancing_counts() {
    let ds = dataset(1000, 2, 88);
    let (mut bg, mut ex) = (ptr::null_mut(), ptr::null_mut());
    let (mut n, mut d, mut rate) = (0, 0, 0.0);
    unsafe {
        assert_eq!(balshap_compose_background(ds, 100, 0.5, 1, &mut bg), BalshapStatus::Ok);
        balshap_dataset_dims(bg, &mut n, &mut d);
        balshap_dataset_event_rate(bg, &mut rate);
        assert_eq!((n, rate), (100, 0.5));

        assert_eq!(balshap_undersample(ds, 0.5, 3, 0, 2, &mut ex), BalshapStatus::Ok);
        balshap_dataset_dims(ex, &mut n, &mut d);
        assert_eq!(n, 176);
        balshap_dataset_free(ex);
        assert_eq!(balshap_undersample(ds, 0.5, 0, 6, 2, &mut ex), BalshapStatus::Ok);
        balshap_dataset_free(ex);

        let mut none = ptr::null_mut();
        assert_eq!(
            balshap_compose_background(ds, 1000, 0.5, 1, &mut none),
            BalshapStatus::InsufficientData
        );
        assert!(none.is_null());
        balshap_dataset_free(bg);
        balshap_dataset_free(ds);
    }
}

#[test]
fn explain_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(model_json(dir.path()).to_str().unwrap()).unwrap();
    let ds = dataset(30, 3, 10);
    let mut model = ptr::null_mut();
    let mut shap = ptr::null_mut();
    unsafe {
        assert_eq!(balshap_model_load_json(path.as_ptr(), &mut model), BalshapStatus::Ok);
        let mut dim = 0;
        balshap_model_input_dim(model, &mut dim);
        assert_eq!(dim, 3);
        for method in [BalshapMethod::Exact, BalshapMethod::Kernel, BalshapMethod::Deep] {
            assert_eq!(
                balshap_explain(model, ds, ds, method, BalshapOutput::Logit, 0, 5, &mut shap),
                BalshapStatus::Ok
            );
            let (mut n, mut d, mut base) = (0, 0, 0.0);
            balshap_shap_dims(shap, &mut n, &mut d);
            balshap_shap_base_value(shap, &mut base);
            let mut phi = vec![0.0; n * d];
            let mut fx = vec![0.0; n];
            let mut imp = vec![0.0; d];
            assert_eq!(balshap_shap_copy_phi(shap, phi.as_mut_ptr(), n * d), BalshapStatus::Ok);
            assert_eq!(balshap_shap_copy_fx(shap, fx.as_mut_ptr(), n), BalshapStatus::Ok);
            assert_eq!(balshap_shap_mean_abs(shap, imp.as_mut_ptr(), d), BalshapStatus::Ok);
            for i in 0..n {
                let total: f64 = base + phi[i * d..(i + 1) * d].iter().sum::<f64>();
                assert!((total - fx[i]).abs() < 1e-9, "{method:?}");
            }
            balshap_shap_free(shap);
        }
        let mut probs = vec![0.0; 30];
        assert_eq!(balshap_model_predict(model, ds, probs.as_mut_ptr(), 30), BalshapStatus::Ok);
        assert!(probs.iter().all(|p| (0.0..=1.0).contains(p)));
        let mut one = ptr::null_mut();
        let narrow = dataset(4, 2, 1);
        assert_eq!(
            balshap_explain(model, ds, narrow, BalshapMethod::Deep, BalshapOutput::Probability, 0, 5, &mut one),
            BalshapStatus::DimensionMismatch
        );
        balshap_dataset_free(narrow);
        balshap_model_free(model);
        balshap_dataset_free(ds);
    }
}

#[test]
fn auc_values() {
    let scores = [0.1, 0.4, 0.35, 0.8];
    let labels = [0u8, 0, 1, 1];
    let (mut auc, mut lo, mut hi) = (0.0, 0.0, 0.0);
    unsafe {
        assert_eq!(balshap_auc(scores.as_ptr(), labels.as_ptr(), 4, &mut auc), BalshapStatus::Ok);
        assert_eq!(auc, 0.75);
        assert_eq!(
            balshap_auc_bootstrap(scores.as_ptr(), labels.as_ptr(), 4, 200, 0.95, 1, &mut auc, &mut lo, &mut hi),
            BalshapStatus::Ok
        );
    }
    assert!(lo <= auc && auc <= hi);
}

/// Compiles tests/c/smoke.c against the generated header and static
/// library with the system C compiler.
#[test]
fn c_program_links_and_runs() {
    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let exe = std::env::current_exe().unwrap();
    let profile_dir = exe.parent().and_then(Path::parent).unwrap();
    let lib = profile_dir.join("libbalshap_ffi.a");
    assert!(lib.exists(), "static library not found at {}", lib.display());

    let dir = tempfile::tempdir().unwrap();
    let bin = dir.path().join("smoke");
    let status = Command::new("cc")
        .arg(manifest.join("tests/c/smoke.c"))
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .expect("run cc");
    assert!(status.success());

    let model = model_json(dir.path());
    let out = Command::new(&bin).arg(&model).output().unwrap();
    assert!(
        out.status.success(),
        "{}{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("ok auc="));
}

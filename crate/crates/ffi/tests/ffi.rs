use std::ffi::{CStr, CString};
use std::path::Path;
use std::ptr;

use gesd_core::cli::load_split;
use gesd_core::config::ExperimentConfig;
use gesd_core::models::Classifier;
use gesd_ffi::*;

fn toy_dir() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let mut csv = String::from("a,c,g,y\n");
    for i in 0..60 {
        let g = if i % 2 == 0 { "f" } else { "m" };
        let a = ((i * 37) % 23) as f64 / 23.0 - 0.5;
        let c = ((i * 11) % 7) as f64;
        let y = u8::from(a + 0.2 * c > 0.6);
        csv.push_str(&format!("{a},{c},{g},{y}\n"));
    }
    std::fs::write(dir.path().join("toy.csv"), csv).unwrap();
    std::fs::write(
        dir.path().join("toy.toml"),
        r#"
seed = 4
[dataset]
path = "toy.csv"
label_column = "y"
group_column = "g"
include_sensitive = false
[dataset.schema]
a = "numeric"
c = "numeric"
[model]
kind = "logistic"
[gesd]
num_perturbations = 3
sample_size = 10
[explainer]
lime_samples = 40
background_size = 8
"#,
    )
    .unwrap();
    dir
}

fn cstr(p: &Path) -> CString {
    CString::new(p.to_str().unwrap()).unwrap()
}

fn last_error() -> String {
    let p = gesd_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn experiment_model_and_audit_round_trip() {
    let dir = toy_dir();
    let d = dir.path();
    let cfg = ExperimentConfig::load(d.join("toy.toml")).unwrap();
    let (train, _) = load_split(&cfg).unwrap();
    let model = Classifier::logistic(vec![1.0, 0.5], -0.2, 0.5).unwrap();
    model.save_json(d.join("m.json")).unwrap();

    unsafe {
        let mut exp = ptr::null_mut();
        assert_eq!(gesd_experiment_load(cstr(&d.join("toy.toml")).as_ptr(), &mut exp), GesdStatus::Ok);
        let mut nf = 0;
        assert_eq!(gesd_experiment_n_features(exp, &mut nf), GesdStatus::Ok);
        assert_eq!(nf, train.n_features());

        let mut m = ptr::null_mut();
        assert_eq!(gesd_model_load_json(cstr(&d.join("m.json")).as_ptr(), &mut m), GesdStatus::Ok);
        let mut md = 0;
        assert_eq!(gesd_model_n_features(m, &mut md), GesdStatus::Ok);
        assert_eq!(md, 2);
        let mut t = 0.0;
        assert_eq!(gesd_model_threshold(m, &mut t), GesdStatus::Ok);
        assert_eq!(t, 0.5);

        let mut n = 0;
        let st = gesd_experiment_test_data(exp, ptr::null_mut(), ptr::null_mut(), ptr::null_mut(), &mut n);
        assert_eq!(st, GesdStatus::Ok);
        assert!(n > 0);
        let mut x = vec![0.0; n * nf];
        let mut y = vec![0u8; n];
        let mut g = vec![0usize; n];
        let st = gesd_experiment_test_data(exp, x.as_mut_ptr(), y.as_mut_ptr(), g.as_mut_ptr(), &mut n);
        assert_eq!(st, GesdStatus::Ok);

        let mut scores = vec![0.0; n];
        assert_eq!(gesd_model_predict_scores(m, x.as_ptr(), n, scores.as_mut_ptr()), GesdStatus::Ok);
        for (row, s) in x.chunks_exact(nf).zip(&scores) {
            assert_eq!(*s, model.predict_score(row).unwrap());
        }

        let mut json = ptr::null_mut();
        assert_eq!(gesd_audit_json(exp, m, &mut json), GesdStatus::Ok);
        let text = CStr::from_ptr(json).to_str().unwrap().to_string();
        gesd_string_free(json);
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["config"]["seed"], 4);
        assert_eq!(v["model"]["source"], "file");

        let mut a = 0.0;
        assert_eq!(gesd_auc(scores.as_ptr(), y.as_ptr(), n, &mut a), GesdStatus::Ok);
        assert_eq!(v["metrics"]["auc"].as_f64().unwrap(), a);

        gesd_model_free(m);
        gesd_experiment_free(exp);
    }
}

#[test]
fn errors_map_to_status_codes() {
    let dir = toy_dir();
    let d = dir.path();
    unsafe {
        let mut exp = ptr::null_mut();
        let st = gesd_experiment_load(cstr(&d.join("absent.toml")).as_ptr(), &mut exp);
        assert_eq!(st, GesdStatus::ConfigError);
        assert!(exp.is_null());
        assert!(last_error().contains("absent.toml"));

        let text = std::fs::read_to_string(d.join("toy.toml")).unwrap();
        std::fs::write(d.join("nocsv.toml"), text.replace("toy.csv", "gone.csv")).unwrap();
        let st = gesd_experiment_load(cstr(&d.join("nocsv.toml")).as_ptr(), &mut exp);
        assert_eq!(st, GesdStatus::DataError);
        assert!(last_error().contains("gone.csv"));

        std::fs::write(d.join("bad.toml"), "seed = 1\ncolour = 2\n").unwrap();
        let st = gesd_experiment_load(cstr(&d.join("bad.toml")).as_ptr(), &mut exp);
        assert_eq!(st, GesdStatus::ConfigError);

        assert_eq!(gesd_experiment_load(ptr::null(), &mut exp), GesdStatus::NullPointer);
        let mut v = 0.0;
        assert_eq!(gesd_auc(ptr::null(), ptr::null(), 3, &mut v), GesdStatus::NullPointer);

        // single class: AUC undefined
        let s = [0.1, 0.2];
        let l = [1u8, 1];
        assert_eq!(gesd_auc(s.as_ptr(), l.as_ptr(), 2, &mut v), GesdStatus::DataError);

        assert_eq!(gesd_auc(s.as_ptr(), [0u8, 1].as_ptr(), 2, &mut v), GesdStatus::Ok);
        assert_eq!(v, 1.0);
        assert!(gesd_last_error_message().is_null());

        // freeing NULL is a no-op
        gesd_experiment_free(ptr::null_mut());
        gesd_model_free(ptr::null_mut());
        gesd_string_free(ptr::null_mut());
    }
}

#[test]
fn metric_entry_points() {
    unsafe {
        let pred = [1u8, 0, 1, 1, 0, 0];
        let grp = [0usize, 0, 0, 1, 1, 1];
        let mut dp = 0.0;
        assert_eq!(gesd_dp_difference(pred.as_ptr(), grp.as_ptr(), 6, &mut dp), GesdStatus::Ok);
        assert!((dp - 1.0 / 3.0).abs() < 1e-15);

        // fully separated samples of size 3: U = 0, exact p = 2/20
        let a = [1.0, 2.0, 3.0];
        let b = [4.0, 5.0, 6.0];
        let (mut u, mut p, mut exact) = (0.0, 0.0, false);
        let st = gesd_mann_whitney(a.as_ptr(), 3, b.as_ptr(), 3, &mut u, &mut p, &mut exact);
        assert_eq!(st, GesdStatus::Ok);
        assert_eq!(u, 0.0);
        assert!((p - 0.1).abs() < 1e-12);
        assert!(exact);

        let pts = [0.5, 0.5, 0.5, 0.0, 0.9, 0.9];
        let r = [1.0, 1.0, 1.0];
        let mut hv = 0.0;
        assert_eq!(gesd_hypervolume_3d(pts.as_ptr(), 2, r.as_ptr(), &mut hv), GesdStatus::Ok);
        // union of two boxes: 0.125 + 0.01 - overlap 0.5*0.1*0.1
        assert!((hv - (0.125 + 0.01 - 0.005)).abs() < 1e-12);
    }
}

#[test]
fn header_declares_the_api() {
    let h = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("include/gesd.h")).unwrap();
    assert!(h.contains("#ifndef GESD_H"));
    for name in [
        "GESD_STATUS_OK = 0",
        "GESD_STATUS_CONFIG_ERROR = 1",
        "GESD_STATUS_DATA_ERROR = 2",
        "GESD_STATUS_NUMERIC_ERROR = 3",
        "typedef struct GesdExperiment GesdExperiment;",
        "typedef struct GesdModel GesdModel;",
        "gesd_experiment_load",
        "gesd_audit_json",
        "gesd_model_predict_scores",
        "gesd_hypervolume_3d",
        "gesd_last_error_message",
        "gesd_string_free",
    ] {
        assert!(h.contains(name), "missing {name}");
    }
}

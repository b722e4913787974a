use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use tsad_ffi::*;

fn last_error() -> String {
    let p = tsad_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn sinusoid(n: usize, m: usize) -> Vec<f64> {
    (0..n * m)
        .map(|i| {
            let (t, c) = (i / m, i % m);
            (t as f64 * (0.2 + 0.1 * c as f64)).sin()
        })
        .collect()
}

#[test]
fn metrics_and_thresholds() {
    let truth = [0u8, 0, 1, 1, 0, 0, 1, 1, 0, 0];
    let pred = [0u8, 0, 1, 0, 0, 0, 0, 0, 1, 0];
    let mut m = TsadMetrics::default();
    assert_eq!(unsafe { tsad_metrics(pred.as_ptr(), truth.as_ptr(), 10, &mut m) }, TsadStatus::Ok);
    assert_eq!((m.f1, m.fpa1, m.fc1), (1.0 / 3.0, 4.0 / 7.0, 0.5));
    assert!(tsad_last_error().is_null());

    let scores = [0.1, 0.9, 0.4, 0.9, 0.2];
    let mut th = 0.0;
    let mut labels = [9u8; 5];
    assert_eq!(
        unsafe { tsad_threshold_top_k(scores.as_ptr(), 5, 2, &mut th, labels.as_mut_ptr()) },
        TsadStatus::Ok
    );
    assert_eq!(labels, [0, 1, 0, 1, 0]);
    assert_eq!(th, 0.9);

    let y = [0u8, 1, 0, 1, 0];
    let mut value = 0.0;
    let status = unsafe {
        tsad_threshold_best_f(scores.as_ptr(), y.as_ptr(), 5, TsadFScore::Fc1, &mut th, &mut value, ptr::null_mut())
    };
    assert_eq!(status, TsadStatus::Ok);
    assert_eq!(value, 1.0);

    let (mut roc, mut prc) = (0.0, 0.0);
    let status = unsafe { tsad_ranking_metrics(scores.as_ptr(), y.as_ptr(), 5, &mut roc, &mut prc) };
    assert_eq!(status, TsadStatus::Ok);
    assert_eq!((roc, prc), (1.0, 1.0));

    assert_eq!(unsafe { tsad_threshold_tail_p(51, 3, &mut th) }, TsadStatus::Ok);
    assert_eq!(th, 153.0);
}

#[test]
fn errors_are_reported_per_call() {
    let bad = [0u8, 2];
    let mut m = TsadMetrics::default();
    let status = unsafe { tsad_metrics(bad.as_ptr(), bad.as_ptr(), 2, &mut m) };
    assert_eq!(status, TsadStatus::InvalidArgument);
    assert!(!last_error().is_empty());

    let status = unsafe { tsad_metrics(ptr::null(), bad.as_ptr(), 2, &mut m) };
    assert_eq!(status, TsadStatus::NullPointer);
    assert!(last_error().contains("pred"));

    let scores = [1.0, 2.0];
    let mut th = 0.0;
    let status = unsafe { tsad_threshold_top_k(scores.as_ptr(), 2, 3, &mut th, ptr::null_mut()) };
    assert_eq!(status, TsadStatus::InvalidArgument);

    let status = unsafe { tsad_threshold_tail_p(3, 1, &mut th) };
    assert_eq!(status, TsadStatus::Ok);
    assert!(tsad_last_error().is_null());
}

#[test]
fn model_lifecycle() {
    let (n, m) = (600, 2);
    let train = sinusoid(n, m);
    let mut opt = tsad_fit_options_default(TsadModelKind::Uae);
    opt.window_length = 20;
    opt.window_stride = 4;
    opt.max_epochs = 3;
    let mut model = ptr::null_mut();
    assert_eq!(unsafe { tsad_model_fit(train.as_ptr(), n, m, &opt, &mut model) }, TsadStatus::Ok);
    let (mut channels, mut window) = (0, 0);
    assert_eq!(unsafe { tsad_model_shape(model, &mut channels, &mut window) }, TsadStatus::Ok);
    assert_eq!((channels, window), (2, 20));

    let test = &train[..100 * m];
    let mut err = vec![0.0; 100 * m];
    let missing_tail = unsafe { tsad_model_residuals(model, test.as_ptr(), 100, ptr::null(), 0, err.as_mut_ptr()) };
    assert_eq!(missing_tail, TsadStatus::InsufficientData);
    let status = unsafe { tsad_model_residuals(model, test.as_ptr(), 100, train.as_ptr(), n, err.as_mut_ptr()) };
    assert_eq!(status, TsadStatus::Ok);

    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("m.json").to_str().unwrap()).unwrap();
    assert_eq!(unsafe { tsad_model_save(model, path.as_ptr()) }, TsadStatus::Ok);
    let mut loaded = ptr::null_mut();
    assert_eq!(unsafe { tsad_model_load(path.as_ptr(), &mut loaded) }, TsadStatus::Ok);
    let mut err2 = vec![0.0; 100 * m];
    unsafe { tsad_model_residuals(loaded, test.as_ptr(), 100, train.as_ptr(), n, err2.as_mut_ptr()) };
    assert_eq!(err, err2);

    let missing = CString::new("/nonexistent/model.json").unwrap();
    let mut none = ptr::null_mut();
    assert_eq!(unsafe { tsad_model_load(missing.as_ptr(), &mut none) }, TsadStatus::Io);
    assert!(none.is_null());

    unsafe {
        tsad_model_free(model);
        tsad_model_free(loaded);
        tsad_model_free(ptr::null_mut());
    }
}

#[test]
fn scoring_and_diagnosis() {
    let (n_tail, n, m) = (50, 40, 3);
    let tail: Vec<f64> = (0..n_tail * m).map(|i| ((i * 7919) % 13) as f64 / 13.0 - 0.5).collect();
    let mut test: Vec<f64> = (0..n * m).map(|i| ((i * 104729) % 11) as f64 / 11.0 - 0.5).collect();
    for t in 20..25 {
        test[t * m + 1] += 6.0;
    }
    let mut total = vec![0.0; n];
    let mut ch = vec![0.0; n * m];
    let status = unsafe {
        tsad_score_gauss_d(test.as_ptr(), n, tail.as_ptr(), n_tail, m, 30, 0.0, total.as_mut_ptr(), ch.as_mut_ptr())
    };
    assert_eq!(status, TsadStatus::Ok);
    let peak = (0..n).max_by(|&a, &b| total[a].total_cmp(&total[b])).unwrap();
    assert!((20..25).contains(&peak));

    let mut smooth = vec![0.0; n];
    let status = unsafe {
        tsad_score_gauss_d(test.as_ptr(), n, tail.as_ptr(), n_tail, m, 30, 1.0, smooth.as_mut_ptr(), ptr::null_mut())
    };
    assert_eq!(status, TsadStatus::Ok);
    assert_ne!(smooth, total);

    let mut s_total = vec![0.0; n];
    let status = unsafe {
        tsad_score_gauss_s(tail.as_ptr(), n_tail, test.as_ptr(), n, m, s_total.as_mut_ptr(), ptr::null_mut())
    };
    assert_eq!(status, TsadStatus::Ok);

    let mut order = [0usize; 3];
    let status = unsafe { tsad_rank_channels(ch.as_ptr(), n, m, 20, 24, TsadSpanStatistic::Mean, order.as_mut_ptr()) };
    assert_eq!(status, TsadStatus::Ok);
    assert_eq!(order[0], 1);
    let status = unsafe { tsad_rank_channels(ch.as_ptr(), n, m, 30, 50, TsadSpanStatistic::Max, order.as_mut_ptr()) };
    assert_eq!(status, TsadStatus::InvalidArgument);
}

#[test]
fn friedman_on_row_major_table() {
    // three methods with a consistent order over four groups
    let values = [0.9, 0.8, 0.95, 0.7, 0.5, 0.4, 0.6, 0.3, 0.1, 0.2, 0.3, 0.1];
    let (mut stat, mut p) = (0.0, 0.0);
    let mut ranks = [0.0; 3];
    let status = unsafe { tsad_friedman(values.as_ptr(), 3, 4, &mut stat, &mut p, ranks.as_mut_ptr()) };
    assert_eq!(status, TsadStatus::Ok);
    assert_eq!(ranks, [1.0, 2.0, 3.0]);
    // 12N/(k(k+1)) * sum R^2 - 3N(k+1) with N=4, k=3
    assert!((stat - 8.0).abs() < 1e-12);
    assert!((p - (-4.0f64).exp()).abs() < 1e-9);
}

fn target_dir() -> PathBuf {
    let exe = std::env::current_exe().unwrap();
    exe.parent().and_then(|d| d.parent()).unwrap().to_path_buf()
}

#[test]
fn header_compiles_and_links_from_c() {
    let crate_dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let header = std::fs::read_to_string(crate_dir.join("include/tsad.h")).unwrap();
    for sym in [
        "tsad_last_error",
        "tsad_model_fit",
        "tsad_model_free",
        "tsad_score_gauss_d",
        "tsad_threshold_best_f",
        "tsad_friedman",
        "tsad_rank_channels",
        "typedef struct TsadModel TsadModel",
    ] {
        assert!(header.contains(sym), "header lacks {sym}");
    }
    let lib = target_dir().join("libtsad_ffi.a");
    assert!(lib.exists(), "static library not built at {}", lib.display());
    let dir = tempfile::tempdir().unwrap();
    let exe = dir.path().join("smoke");
    let out = Command::new("cc")
        .arg(crate_dir.join("tests/c/smoke.c"))
        .arg("-I")
        .arg(crate_dir.join("include"))
        .arg("-o")
        .arg(&exe)
        .arg(&lib)
        .args(["-lm", "-lpthread", "-ldl"])
        .output()
        .expect("C compiler available");
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let run = Command::new(&exe).output().unwrap();
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    assert!(String::from_utf8_lossy(&run.stdout).starts_with("ok 0.1.0"));
}

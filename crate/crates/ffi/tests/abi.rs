use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use rpf_ffi::*;

const SMALL_BENCH: &str = "source_samples_per_class=40\ntarget_samples_per_class=20\npretext_samples_per_class=20\n";
const SMALL_TRAIN: &str = "epochs=3\ndecay_epoch=2\nlp_epochs=2\npretrain_epochs=2\nhidden_dims=8\nfeature_dim=6\nlr=0.05\nseed=3\n";

fn last_error() -> String {
    let p = rpf_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn small_bench() -> *mut RpfBenchmark {
    let cfg = CString::new(SMALL_BENCH).unwrap();
    let mut bench = ptr::null_mut();
    assert_eq!(unsafe { rpf_benchmark_generate(cfg.as_ptr(), 11, &mut bench) }, RpfStatus::Ok);
    bench
}

fn train(bench: *const RpfBenchmark) -> (*mut RpfModel, RpfRunSummary) {
    let cfg = CString::new(SMALL_TRAIN).unwrap();
    let mut model = ptr::null_mut();
    let mut summary = RpfRunSummary::default();
    let st = unsafe { rpf_run_experiment(bench, cfg.as_ptr(), &mut model, &mut summary) };
    assert_eq!(st, RpfStatus::Ok, "{}", last_error());
    (model, summary)
}

#[test]
fn h_score_and_spearman() {
    let mut h = 0.0;
    assert_eq!(unsafe { rpf_h_score(0.5, 1.0, &mut h) }, RpfStatus::Ok);
    assert!((h - 2.0 / 3.0).abs() < 1e-15);
    assert_eq!(unsafe { rpf_h_score(0.0, 0.0, &mut h) }, RpfStatus::Ok);
    assert_eq!(h, 0.0);
    assert_eq!(unsafe { rpf_h_score(1.5, 0.5, &mut h) }, RpfStatus::Input);

    let a = [1.0, 2.0, 3.0, 4.0];
    let b = [10.0, 30.0, 20.0, 40.0];
    let mut rho = 0.0;
    assert_eq!(unsafe { rpf_spearman_rho(a.as_ptr(), b.as_ptr(), 4, &mut rho) }, RpfStatus::Ok);
    assert!((rho - 0.8).abs() < 1e-12);
    let flat = [1.0; 4];
    assert_eq!(unsafe { rpf_spearman_rho(a.as_ptr(), flat.as_ptr(), 4, &mut rho) }, RpfStatus::Numerical);
    assert!(last_error().contains("undefined"));
}

#[test]
fn null_pointers_are_rejected() {
    assert_eq!(unsafe { rpf_h_score(0.5, 0.5, ptr::null_mut()) }, RpfStatus::InvalidArgument);
    let mut bench = ptr::null_mut();
    assert_eq!(unsafe { rpf_benchmark_load(ptr::null(), &mut bench) }, RpfStatus::InvalidArgument);
    assert!(bench.is_null());
    unsafe {
        rpf_benchmark_free(ptr::null_mut());
        rpf_model_free(ptr::null_mut());
    }
}

#[test]
fn bad_config_is_an_input_error() {
    let cfg = CString::new("no_such_key=1\n").unwrap();
    let mut bench = ptr::null_mut();
    assert_eq!(unsafe { rpf_benchmark_generate(cfg.as_ptr(), 0, &mut bench) }, RpfStatus::Input);
    assert!(bench.is_null());
}

#[test]
fn version_is_crate_version() {
    let v = unsafe { CStr::from_ptr(rpf_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn train_predict_save_load_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let bench = small_bench();
    let (mut d, mut k, mut n) = (0, 0, 0);
    assert_eq!(unsafe { rpf_benchmark_shape(bench, &mut d, &mut k, &mut n) }, RpfStatus::Ok);
    assert_eq!((d, k), (16, 6));
    let mut x = vec![0.0; n * d];
    let mut y = vec![0usize; n];
    assert_eq!(unsafe { rpf_benchmark_target(bench, x.as_mut_ptr(), y.as_mut_ptr()) }, RpfStatus::Ok);

    let (model, summary) = train(bench);
    assert!((1..=3).contains(&summary.selected_epoch));
    assert!((0.0..=1.0).contains(&summary.best_h_score));

    let (mut md, mut mc) = (0, 0);
    assert_eq!(unsafe { rpf_model_shape(model, &mut md, &mut mc) }, RpfStatus::Ok);
    assert_eq!((md, mc), (d, k));
    let mut proba = vec![0.0; n * mc];
    assert_eq!(
        unsafe { rpf_model_predict_proba(model, x.as_ptr(), n, d, proba.as_mut_ptr()) },
        RpfStatus::Ok
    );
    for row in proba.chunks(mc) {
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
    let mut labels = vec![0usize; n];
    assert_eq!(
        unsafe { rpf_model_predict(model, x.as_ptr(), n, d, summary.best_threshold, labels.as_mut_ptr()) },
        RpfStatus::Ok
    );
    for (l, row) in labels.iter().zip(proba.chunks(mc)) {
        let max = row.iter().cloned().fold(f64::MIN, f64::max);
        if max < summary.best_threshold {
            assert_eq!(*l, mc);
        } else {
            assert_eq!(row[*l], max);
        }
    }
    assert_eq!(
        unsafe { rpf_model_predict(model, x.as_ptr(), n, d, 1.5, labels.as_mut_ptr()) },
        RpfStatus::Input
    );
    assert_eq!(
        unsafe { rpf_model_predict_proba(model, x.as_ptr(), n, d - 1, proba.as_mut_ptr()) },
        RpfStatus::Input
    );

    let path = CString::new(dir.path().join("m.rpfckpt").to_str().unwrap()).unwrap();
    assert_eq!(unsafe { rpf_model_save(model, path.as_ptr()) }, RpfStatus::Ok);
    assert!(dir.path().join("m.rpfckpt.json").exists());
    let mut loaded = ptr::null_mut();
    assert_eq!(unsafe { rpf_model_load(path.as_ptr(), &mut loaded) }, RpfStatus::Ok);
    let mut proba2 = vec![0.0; n * mc];
    assert_eq!(
        unsafe { rpf_model_predict_proba(loaded, x.as_ptr(), n, d, proba2.as_mut_ptr()) },
        RpfStatus::Ok
    );
    assert_eq!(proba, proba2);

    let bench_dir = CString::new(dir.path().join("bench").to_str().unwrap()).unwrap();
    assert_eq!(unsafe { rpf_benchmark_save(bench, bench_dir.as_ptr()) }, RpfStatus::Ok);
    let mut reloaded = ptr::null_mut();
    assert_eq!(unsafe { rpf_benchmark_load(bench_dir.as_ptr(), &mut reloaded) }, RpfStatus::Ok);
    let (mut d2, mut k2, mut n2) = (0, 0, 0);
    assert_eq!(unsafe { rpf_benchmark_shape(reloaded, &mut d2, &mut k2, &mut n2) }, RpfStatus::Ok);
    assert_eq!((d2, k2, n2), (d, k, n));

    unsafe {
        rpf_model_free(model);
        rpf_model_free(loaded);
        rpf_benchmark_free(bench);
        rpf_benchmark_free(reloaded);
    }
}

#[test]
fn corrupted_checkpoint_is_a_format_error() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("bad.rpfckpt");
    std::fs::write(&file, b"NOTACKPT\x01\x00\x00\x00").unwrap();
    let path = CString::new(file.to_str().unwrap()).unwrap();
    let mut model = ptr::null_mut();
    assert_eq!(unsafe { rpf_model_load(path.as_ptr(), &mut model) }, RpfStatus::Format);
    assert!(model.is_null());
    assert!(last_error().contains("magic"));
}

fn header() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("include").join("rpf.h")
}

#[test]
fn header_declares_every_export() {
    let text = std::fs::read_to_string(header()).unwrap();
    for sym in [
        "rpf_last_error_message",
        "rpf_version",
        "rpf_benchmark_generate",
        "rpf_benchmark_load",
        "rpf_benchmark_save",
        "rpf_benchmark_shape",
        "rpf_benchmark_target",
        "rpf_benchmark_free",
        "rpf_run_experiment",
        "rpf_model_load",
        "rpf_model_save",
        "rpf_model_shape",
        "rpf_model_predict_proba",
        "rpf_model_predict",
        "rpf_model_free",
        "rpf_h_score",
        "rpf_spearman_rho",
        "RPF_STATUS_FORMAT = 4",
        "typedef struct RpfModel RpfModel",
    ] {
        assert!(text.contains(sym), "header lacks {sym}");
    }
}

const C_PROGRAM: &str = r#"
#include <stdio.h>
#include "rpf.h"
int main(void) {
    double h = -1.0;
    if (rpf_h_score(0.5, 1.0, &h) != RPF_STATUS_OK) return 1;
    if (h < 0.6666 || h > 0.6667) return 2;
    RpfModel *m = NULL;
    if (rpf_model_load("/nonexistent/x.rpfckpt", &m) != RPF_STATUS_INPUT) return 3;
    if (rpf_last_error_message() == NULL) return 4;
    printf("%s\n", rpf_version());
    return 0;
}
"#;

fn c_compiler() -> Option<&'static str> {
    ["cc", "gcc", "clang"]
        .into_iter()
        .find(|c| Command::new(c).arg("--version").output().is_ok())
}

#[test]
fn header_compiles_as_c() {
    let Some(cc) = c_compiler() else {
        eprintln!("no C compiler found; skipping");
        return;
    };
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("main.c");
    std::fs::write(&src, C_PROGRAM).unwrap();
    let include = header().parent().unwrap().to_path_buf();
    let status = Command::new(cc)
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(&include)
        .arg(&src)
        .status()
        .unwrap();
    assert!(status.success());

    let exe = std::env::current_exe().unwrap();
    let profile_dir = exe.parent().and_then(Path::parent).unwrap();
    let lib = profile_dir.join("librpf_ffi.a");
    if !lib.exists() {
        eprintln!("{} not built; skipping link step", lib.display());
        return;
    }
    let bin = dir.path().join("main");
    let status = Command::new(cc)
        .arg("-I")
        .arg(&include)
        .arg(&src)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .unwrap();
    assert!(status.success());
    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "C program exited with {:?}", out.status);
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), env!("CARGO_PKG_VERSION"));
}

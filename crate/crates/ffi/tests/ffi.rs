use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use dsmhmc_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(dsmhmc_last_error()) }
        .to_string_lossy()
        .into_owned()
}

fn tensor(shape: &[usize], data: &[f64]) -> *mut DsmhmcTensor {
    let mut t = ptr::null_mut();
    let st = unsafe {
        dsmhmc_tensor_new(
            shape.as_ptr(),
            shape.len(),
            data.as_ptr(),
            data.len(),
            &mut t,
        )
    };
    assert_eq!(st, DsmhmcStatus::Ok, "{}", last_error());
    t
}

fn contents(t: *const DsmhmcTensor) -> (Vec<usize>, Vec<f64>) {
    unsafe {
        let mut shape = vec![0; dsmhmc_tensor_rank(t)];
        assert_eq!(
            dsmhmc_tensor_shape(t, shape.as_mut_ptr(), shape.len()),
            DsmhmcStatus::Ok
        );
        let mut data = vec![0.0; dsmhmc_tensor_len(t)];
        assert_eq!(
            dsmhmc_tensor_copy_data(t, data.as_mut_ptr(), data.len()),
            DsmhmcStatus::Ok
        );
        (shape, data)
    }
}

#[test]
fn tensor_round_trip_through_a_file() {
    let tmp = tempfile::tempdir().unwrap();
    let path = CString::new(tmp.path().join("t.tnsr").to_str().unwrap()).unwrap();
    let t = tensor(&[2, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
    unsafe {
        assert_eq!(dsmhmc_tensor_write(t, path.as_ptr()), DsmhmcStatus::Ok);
        let mut back = ptr::null_mut();
        assert_eq!(
            dsmhmc_tensor_read(path.as_ptr(), &mut back),
            DsmhmcStatus::Ok
        );
        assert_eq!(
            contents(back),
            (vec![2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0])
        );
        dsmhmc_tensor_free(back);
        dsmhmc_tensor_free(t);
    }
}

#[test]
fn errors_map_to_status_codes() {
    unsafe {
        let mut t = ptr::null_mut();
        let data = [1.0, 2.0, 3.0];
        let st = dsmhmc_tensor_new([2usize, 2].as_ptr(), 2, data.as_ptr(), 3, &mut t);
        assert_eq!(st, DsmhmcStatus::Shape);
        assert!(t.is_null());
        assert!(!last_error().is_empty());

        let missing = CString::new("/nonexistent/x.tnsr").unwrap();
        assert_eq!(
            dsmhmc_tensor_read(missing.as_ptr(), &mut t),
            DsmhmcStatus::Io
        );
        assert!(last_error().contains("/nonexistent/x.tnsr"));

        assert_eq!(
            dsmhmc_tensor_read(ptr::null(), &mut t),
            DsmhmcStatus::NullPointer
        );
        let bad = [0xffu8, 0xfe, 0];
        assert_eq!(
            dsmhmc_tensor_read(bad.as_ptr().cast(), &mut t),
            DsmhmcStatus::InvalidUtf8
        );

        let mut m = ptr::null_mut();
        assert_eq!(
            dsmhmc_score_model_gaussian(2, -1.0, &mut m),
            DsmhmcStatus::Param
        );

        let small = tensor(&[2], &[1.0, 2.0]);
        let mut buf = [0.0; 1];
        assert_eq!(
            dsmhmc_tensor_copy_data(small, buf.as_mut_ptr(), 1),
            DsmhmcStatus::Shape
        );
        assert_eq!(dsmhmc_tensor_rank(ptr::null()), 0);
        dsmhmc_tensor_free(small);
        dsmhmc_tensor_free(ptr::null_mut());
    }
}

#[test]
fn gaussian_score_and_prior_sampling() {
    unsafe {
        let mut m = ptr::null_mut();
        assert_eq!(
            dsmhmc_score_model_gaussian(3, 1.0, &mut m),
            DsmhmcStatus::Ok
        );
        assert_eq!(dsmhmc_score_model_dim(m), 3);
        let x = tensor(&[3], &[1.0, -2.0, 0.5]);
        let mut s = ptr::null_mut();
        assert_eq!(
            dsmhmc_score_model_score(m, x, 1.0, &mut s),
            DsmhmcStatus::Ok
        );
        // N(0, 1) smoothed by σ = 1: score −x/2.
        assert_eq!(contents(s).1, vec![-0.5, 1.0, -0.25]);

        let wrong = tensor(&[2], &[0.0, 0.0]);
        let mut s2 = ptr::null_mut();
        assert_eq!(
            dsmhmc_score_model_score(m, wrong, 1.0, &mut s2),
            DsmhmcStatus::Shape
        );

        let mut p = dsmhmc_sampler_params_default();
        p.gamma = 0.8;
        let mut a = ptr::null_mut();
        let mut b = ptr::null_mut();
        assert_eq!(
            dsmhmc_sample(m, ptr::null(), &p, 4, 9, &mut a),
            DsmhmcStatus::Ok,
            "{}",
            last_error()
        );
        assert_eq!(
            dsmhmc_sample(m, ptr::null(), &p, 4, 9, &mut b),
            DsmhmcStatus::Ok
        );
        let (shape, da) = contents(a);
        assert_eq!(shape, vec![4, 3]);
        assert_eq!(da, contents(b).1);

        p.gamma = 1.5;
        let mut c = ptr::null_mut();
        assert_eq!(
            dsmhmc_sample(m, ptr::null(), &p, 4, 9, &mut c),
            DsmhmcStatus::Param
        );

        for t in [x, s, wrong, a, b] {
            dsmhmc_tensor_free(t);
        }
        dsmhmc_score_model_free(m);
    }
}

#[test]
fn mri_likelihood_zero_filled_and_psnr() {
    let (h, w) = (8usize, 8usize);
    let mut truth = vec![0.0; h * w * 2];
    for y in 2..6 {
        for x in 2..6 {
            truth[(y * w + x) * 2] = 1.0;
        }
    }
    let mut cols = vec![0.0; w];
    for c in [0, 1, 3, 7] {
        cols[c] = 1.0;
    }
    unsafe {
        let mask = tensor(&[w], &cols);
        let x = tensor(&[h, w, 2], &truth);
        let zero_y = tensor(&[h, w, 2], &vec![0.0; h * w * 2]);
        let mut lik = ptr::null_mut();
        assert_eq!(
            dsmhmc_likelihood_mri(mask, zero_y, 0.1, &mut lik),
            DsmhmcStatus::Ok
        );
        let mut zf = ptr::null_mut();
        assert_eq!(
            dsmhmc_likelihood_zero_filled(lik, &mut zf),
            DsmhmcStatus::Ok
        );
        assert!(contents(zf).1.iter().all(|&v| v == 0.0));

        let mut p = 0.0;
        assert_eq!(dsmhmc_psnr(x, x, 1.0, &mut p), DsmhmcStatus::Ok);
        assert!(p > 100.0);
        assert_eq!(dsmhmc_psnr(x, zf, 1.0, &mut p), DsmhmcStatus::Ok);
        assert!(p.is_finite() && p < 100.0);

        let bad_mask = tensor(&[3], &[1.0, 0.0, 1.0]);
        let mut l2 = ptr::null_mut();
        assert_eq!(
            dsmhmc_likelihood_mri(bad_mask, zero_y, 0.1, &mut l2),
            DsmhmcStatus::Sizing
        );
        for t in [mask, x, zero_y, zf, bad_mask] {
            dsmhmc_tensor_free(t);
        }
        dsmhmc_likelihood_free(lik);
    }
}

#[test]
fn header_declares_the_api() {
    let header =
        std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/dsmhmc.h")).unwrap();
    for name in [
        "DSMHMC_H",
        "typedef struct DsmhmcTensor DsmhmcTensor;",
        "DSMHMC_STATUS_OK = 0",
        "DSMHMC_STATUS_PANIC",
        "dsmhmc_last_error(void)",
        "dsmhmc_sample(",
        "DsmhmcSamplerParams",
    ] {
        assert!(header.contains(name), "header lacks `{name}`");
    }
}

/// Compile and run a C program against the static library, when a C
/// compiler is available.
#[test]
fn c_program_links_against_the_static_library() {
    let exe = std::env::current_exe().unwrap();
    let deps = exe.parent().unwrap();
    let lib = [deps.to_path_buf(), deps.parent().unwrap().to_path_buf()]
        .into_iter()
        .map(|d| d.join("libdsmhmc_ffi.a"))
        .find(|p| p.exists());
    let Some(lib) = lib else {
        eprintln!("skipping: static library not built");
        return;
    };
    if Command::new("cc").arg("--version").output().is_err() {
        eprintln!("skipping: no C compiler");
        return;
    }
    let tmp = tempfile::tempdir().unwrap();
    let src = tmp.path().join("smoke.c");
    std::fs::write(
        &src,
        r#"
#include <stdio.h>
#include "dsmhmc.h"
int main(void) {
    DsmhmcScoreModel *m = NULL;
    if (dsmhmc_score_model_gaussian(2, 1.0, &m) != DSMHMC_STATUS_OK) return 1;
    DsmhmcSamplerParams p = dsmhmc_sampler_params_default();
    p.gamma = 0.8;
    DsmhmcTensor *s = NULL;
    if (dsmhmc_sample(m, NULL, &p, 3, 1, &s) != DSMHMC_STATUS_OK) return 2;
    size_t shape[2];
    if (dsmhmc_tensor_shape(s, shape, 2) != DSMHMC_STATUS_OK) return 3;
    DsmhmcTensor *bad = NULL;
    if (dsmhmc_tensor_read("/nonexistent.tnsr", &bad) != DSMHMC_STATUS_IO) return 4;
    printf("%zu %zu %s\n", shape[0], shape[1], dsmhmc_version());
    dsmhmc_tensor_free(s);
    dsmhmc_score_model_free(m);
    return 0;
}
"#,
    )
    .unwrap();
    let bin: PathBuf = tmp.path().join("smoke");
    let include = concat!(env!("CARGO_MANIFEST_DIR"), "/include");
    let out = Command::new("cc")
        .arg(&src)
        .arg("-I")
        .arg(include)
        .arg(&lib)
        .args(["-lm", "-lpthread", "-ldl", "-o"])
        .arg(&bin)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "cc failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let run = Command::new(&bin).output().unwrap();
    assert!(run.status.success(), "exit {:?}", run.status.code());
    let stdout = String::from_utf8_lossy(&run.stdout);
    assert!(stdout.starts_with("3 2 "), "{stdout}");
}

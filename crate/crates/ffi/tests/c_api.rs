use std::ffi::CStr;
use std::ptr;

use ortho_ffi::*;

fn last_error() -> String {
    let p = ortho_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn blocks(block: usize, noise: f64, seed: u64) -> (Vec<f64>, Vec<usize>) {
    let n = 3 * block;
    let (mut q, mut labels) = (vec![0.0; n * n], vec![0usize; n]);
    let st = unsafe { ortho_noisy_blocks(block, 3, noise, seed, q.as_mut_ptr(), q.len(), labels.as_mut_ptr(), n) };
    assert_eq!(st, OrthoStatus::Ok);
    (q, labels)
}

fn kernel(q: &[f64], n: usize) -> *mut OrthoKernel {
    let mut k = ptr::null_mut();
    assert_eq!(unsafe { ortho_kernel_from_affinity(q.as_ptr(), n, 0.0, true, &mut k) }, OrthoStatus::Ok);
    k
}

#[test]
fn kernel_round_trip() {
    let (q, _) = blocks(4, 0.5, 1);
    let k = kernel(&q, 12);
    unsafe {
        assert_eq!(ortho_kernel_size(k), 12);
        let mut p = vec![0.0; 144];
        assert_eq!(ortho_kernel_matrix(k, p.as_mut_ptr(), p.len()), OrthoStatus::Ok);
        for row in p.chunks(12) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let mut pi = vec![0.0; 12];
        assert_eq!(ortho_kernel_stationary(k, pi.as_mut_ptr(), 12), OrthoStatus::Ok);
        assert!((pi.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let mut lambda = vec![0.0; 12];
        assert_eq!(ortho_spectrum(k, lambda.as_mut_ptr(), 12), OrthoStatus::Ok);
        assert_eq!(lambda[0], 1.0);
        ortho_kernel_free(k);
    }
}

#[test]
fn full_pipeline_recovers_clean_blocks() {
    let (q, truth) = blocks(8, 0.5, 2);
    let n = truth.len();
    let k = kernel(&q, n);
    unsafe {
        let mut settings = ortho_settings_default();
        settings.c2 = 0.1;
        settings.c2_relative = false;
        let mut result = ptr::null_mut();
        assert_eq!(ortho_fixpoint(k, &settings, &mut result), OrthoStatus::Ok);
        assert!(ortho_result_converged(result));
        assert_eq!(ortho_result_effective_c2(result), 0.1);
        let len = ortho_result_trace_len(result);
        assert!(len >= ortho_result_iterations(result));
        let mut res = vec![0.0; len];
        assert_eq!(ortho_result_residuals(result, res.as_mut_ptr(), len), OrthoStatus::Ok);
        assert!(*res.last().unwrap() <= settings.tol);

        let mut pstar = ptr::null_mut();
        assert_eq!(ortho_result_kernel(result, &mut pstar), OrthoStatus::Ok);
        ortho_result_free(result);
        let mut coords = vec![0.0; n * 2];
        assert_eq!(ortho_diffusion_coordinates(pstar, 1.0, 2, coords.as_mut_ptr(), coords.len()), OrthoStatus::Ok);
        let mut pred = vec![0usize; n];
        assert_eq!(ortho_kmeans(coords.as_ptr(), n, 2, 3, 0, 10, pred.as_mut_ptr()), OrthoStatus::Ok);
        let mut m = OrthoMetrics::default();
        assert_eq!(ortho_metrics(pred.as_ptr(), truth.as_ptr(), n, &mut m), OrthoStatus::Ok);
        assert_eq!(m, OrthoMetrics { ari: 1.0, nmi: 1.0, purity: 1.0 });
        ortho_kernel_free(pstar);
        ortho_kernel_free(k);
    }
}

#[test]
fn errors_are_reported_with_codes_and_messages() {
    unsafe {
        let mut k = ptr::null_mut();
        assert_eq!(ortho_kernel_from_affinity(ptr::null(), 3, 0.0, true, &mut k), OrthoStatus::NullPointer);
        assert!(last_error().contains("data"));
        assert!(k.is_null());

        let negative = [1.0, -1.0, -1.0, 1.0];
        assert_eq!(ortho_kernel_from_affinity(negative.as_ptr(), 2, 0.0, true, &mut k), OrthoStatus::InvalidInput);
        assert!(!last_error().is_empty());

        let (q, _) = blocks(2, 0.5, 3);
        let k = kernel(&q, 6);
        assert!(ortho_last_error_message().is_null(), "success clears the message");
        let mut small = [0.0; 5];
        assert_eq!(ortho_spectrum(k, small.as_mut_ptr(), small.len()), OrthoStatus::BufferTooSmall);
        assert!(last_error().contains("6"));
        assert_eq!(small, [0.0; 5]);

        let mut settings = ortho_settings_default();
        settings.truncation = 7;
        let mut r = ptr::null_mut();
        assert_eq!(ortho_fixpoint(k, &settings, &mut r), OrthoStatus::InvalidInput);
        assert!(r.is_null());
        ortho_kernel_free(k);

        let mut m = OrthoMetrics::default();
        let a = [0usize, 1];
        assert_eq!(ortho_metrics(a.as_ptr(), a.as_ptr(), 2, ptr::null_mut()), OrthoStatus::NullPointer);
        assert_eq!(ortho_metrics(a.as_ptr(), a.as_ptr(), 0, &mut m), OrthoStatus::InvalidInput);

        // NULL handles are tolerated by accessors and destructors.
        assert_eq!(ortho_kernel_size(ptr::null()), 0);
        assert!(!ortho_result_converged(ptr::null()));
        assert!(ortho_result_effective_c2(ptr::null()).is_nan());
        ortho_kernel_free(ptr::null_mut());
        ortho_result_free(ptr::null_mut());
    }
}

#[test]
fn default_settings_mirror_the_library() {
    let s = ortho_settings_default();
    assert_eq!(s.c2, 1.0);
    assert!(s.c2_relative);
    assert!(!s.doubly_stochastic);
    assert_eq!(s.truncation, 0);
    assert_eq!(s.max_iter, 200);
    assert_eq!(s.max_restarts, 6);
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/ortho.h")).unwrap();
    let lib = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/src/lib.rs")).unwrap();
    let exports: Vec<&str> = lib
        .split("extern \"C\" fn ")
        .skip(1)
        .map(|rest| rest.split('(').next().unwrap())
        .collect();
    assert!(exports.len() >= 20);
    for name in exports {
        assert!(header.contains(&format!("{name}(")), "{name} missing from header");
    }
    assert!(header.contains("typedef struct OrthoKernel OrthoKernel;"));
    assert!(header.contains("ORTHO_STATUS_BUFFER_TOO_SMALL = 8"));
}

/// Compiles a small C program against the header and the static library.
#[test]
fn c_program_links_and_runs() {
    let Ok(cc) = which_cc() else {
        eprintln!("no C compiler found; skipping");
        return;
    };
    let lib_dir = std::env::current_exe().unwrap().parent().unwrap().parent().unwrap().to_path_buf();
    let archive = lib_dir.join("libortho_ffi.a");
    assert!(archive.exists(), "{} not built", archive.display());
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("smoke.c");
    let exe = dir.path().join("smoke");
    std::fs::write(&src, C_SMOKE).unwrap();
    let status = std::process::Command::new(cc)
        .arg(&src)
        .arg("-I")
        .arg(concat!(env!("CARGO_MANIFEST_DIR"), "/include"))
        .arg(&archive)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success(), "C compilation failed");
    let out = std::process::Command::new(&exe).output().unwrap();
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{stdout}{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(stdout.trim(), "ari=1.000000 null=1");
}

fn which_cc() -> Result<&'static str, ()> {
    ["cc", "gcc", "clang"]
        .into_iter()
        .find(|c| std::process::Command::new(c).arg("--version").output().is_ok_and(|o| o.status.success()))
        .ok_or(())
}

const C_SMOKE: &str = r#"
#include <stdio.h>
#include "ortho.h"

#define B 6
#define N (3 * B)

int main(void) {
    double q[N * N], coords[N * 2];
    size_t truth[N], pred[N];
    OrthoKernel *k = NULL, *pstar = NULL;
    OrthoResult *r = NULL;
    OrthoMetrics m;
    OrthoSettings s = ortho_settings_default();
    s.c2 = 0.1;
    s.c2_relative = false;

    if (ortho_noisy_blocks(B, 3, 0.5, 4, q, N * N, truth, N) != ORTHO_STATUS_OK) return 1;
    if (ortho_kernel_from_affinity(q, N, 0.0, true, &k) != ORTHO_STATUS_OK) return 2;
    if (ortho_fixpoint(k, &s, &r) != ORTHO_STATUS_OK || !ortho_result_converged(r)) return 3;
    if (ortho_result_kernel(r, &pstar) != ORTHO_STATUS_OK) return 4;
    if (ortho_diffusion_coordinates(pstar, 1.0, 2, coords, N * 2) != ORTHO_STATUS_OK) return 5;
    if (ortho_kmeans(coords, N, 2, 3, 0, 10, pred) != ORTHO_STATUS_OK) return 6;
    if (ortho_metrics(pred, truth, N, &m) != ORTHO_STATUS_OK) return 7;
    int null_ok = ortho_kernel_matrix(NULL, coords, 1) == ORTHO_STATUS_NULL_POINTER
        && ortho_last_error_message() != NULL;
    printf("ari=%f null=%d\n", m.ari, null_ok);
    ortho_result_free(r);
    ortho_kernel_free(pstar);
    ortho_kernel_free(k);
    return 0;
}
"#;

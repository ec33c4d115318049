use std::ffi::{CStr, CString};
use std::ptr;

use flowsr::num_complex::Complex64;
use flowsr::{ComplexVolume, Decimation, Grid3, KernelChoice, PriorMode, SolverConfig};
use flowsr_ffi::*;

fn last_error() -> String {
    let p = flowsr_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

struct Handle(*mut FlowsrDataset);

impl Drop for Handle {
    fn drop(&mut self) {
        unsafe { flowsr_dataset_free(self.0) };
    }
}

fn phantom(dims: [usize; 3], frames: usize) -> Handle {
    let mut out = ptr::null_mut();
    let st = unsafe { flowsr_phantom_poiseuille(dims.as_ptr(), frames, 150.0, 100.0, &mut out) };
    assert_eq!(st, FlowsrStatus::Ok);
    Handle(out)
}

#[test]
fn full_workflow_through_handles() {
    let truth = phantom([32, 32, 16], 2);
    let factor = [2usize, 2, 2];
    let mut lr = ptr::null_mut();
    let mut achieved = 0.0;
    let st = unsafe { flowsr_degrade(truth.0, factor.as_ptr(), FlowsrKernel::Ideal, 15.0, 1, &mut lr, &mut achieved) };
    assert_eq!(st, FlowsrStatus::Ok);
    let lr = Handle(lr);
    assert!((achieved - 15.0).abs() < 0.5);

    let (mut dims, mut frames, mut venc) = ([0usize; 3], 0usize, 0.0);
    assert_eq!(unsafe { flowsr_dataset_info(lr.0, dims.as_mut_ptr(), &mut frames, &mut venc) }, FlowsrStatus::Ok);
    assert_eq!((dims, frames, venc), ([16, 16, 8], 2, 150.0));

    let mut sr = ptr::null_mut();
    let st = unsafe { flowsr_superresolve(lr.0, factor.as_ptr(), FlowsrKernel::Ideal, 1.0, FlowsrPrior::Trilinear, &mut sr) };
    assert_eq!(st, FlowsrStatus::Ok);
    let sr = Handle(sr);
    let mut base = ptr::null_mut();
    assert_eq!(unsafe { flowsr_upsample(lr.0, factor.as_ptr(), FlowsrInterp::Trilinear, &mut base) }, FlowsrStatus::Ok);
    let base = Handle(base);

    let mut summary = FlowsrSummary { psnr_db_sr: 0.0, mre_percent_sr: 0.0, psnr_db_baseline: 0.0, mre_percent_baseline: 0.0 };
    assert_eq!(unsafe { flowsr_evaluate(truth.0, sr.0, base.0, 0.1, &mut summary) }, FlowsrStatus::Ok);
    assert!(summary.psnr_db_sr.is_finite() && summary.psnr_db_baseline.is_finite());
    assert!(summary.psnr_db_sr > summary.psnr_db_baseline, "{summary:?}");

    let mut only = summary;
    assert_eq!(unsafe { flowsr_evaluate(truth.0, sr.0, ptr::null(), 0.1, &mut only) }, FlowsrStatus::Ok);
    assert!(only.psnr_db_baseline.is_nan());
    assert_eq!(only.psnr_db_sr, summary.psnr_db_sr);

    let mut w = vec![0.0; 32 * 32 * 16];
    let st = unsafe { flowsr_dataset_copy_volume(sr.0, 1, FlowsrVolume::W, w.as_mut_ptr(), w.len()) };
    assert_eq!(st, FlowsrStatus::Ok);
    assert!(w.iter().any(|v| *v > 10.0));
    let st = unsafe { flowsr_dataset_copy_volume(sr.0, 2, FlowsrVolume::W, w.as_mut_ptr(), w.len()) };
    assert_eq!(st, FlowsrStatus::InvalidArgument);
    assert!(last_error().contains("out of range"));
    let st = unsafe { flowsr_dataset_copy_volume(sr.0, 0, FlowsrVolume::U, w.as_mut_ptr(), 5) };
    assert_eq!(st, FlowsrStatus::InvalidArgument);
}

#[test]
fn save_and_load_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("p.flw").to_str().unwrap()).unwrap();
    let ds = phantom([8, 8, 4], 1);
    assert_eq!(unsafe { flowsr_dataset_save(ds.0, path.as_ptr()) }, FlowsrStatus::Ok);
    let mut back = ptr::null_mut();
    assert_eq!(unsafe { flowsr_dataset_load(path.as_ptr(), &mut back) }, FlowsrStatus::Ok);
    let back = Handle(back);
    let mut a = vec![0.0; 256];
    let mut b = vec![0.0; 256];
    unsafe {
        flowsr_dataset_copy_volume(ds.0, 0, FlowsrVolume::W, a.as_mut_ptr(), 256);
        flowsr_dataset_copy_volume(back.0, 0, FlowsrVolume::W, b.as_mut_ptr(), 256);
    }
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(*x as f32, *y as f32);
    }
}

#[test]
fn error_codes() {
    let mut out = ptr::null_mut();
    let missing = CString::new("/nonexistent/dir/x.flw").unwrap();
    assert_eq!(unsafe { flowsr_dataset_load(missing.as_ptr(), &mut out) }, FlowsrStatus::Io);
    assert!(out.is_null());
    assert!(last_error().contains("i/o error"));

    assert_eq!(unsafe { flowsr_dataset_load(ptr::null(), &mut out) }, FlowsrStatus::NullPointer);

    let dir = tempfile::tempdir().unwrap();
    let junk = dir.path().join("junk.flw");
    std::fs::write(&junk, [b"FLW9".as_slice(), &[0u8; 60]].concat()).unwrap();
    let junk = CString::new(junk.to_str().unwrap()).unwrap();
    assert_eq!(unsafe { flowsr_dataset_load(junk.as_ptr(), &mut out) }, FlowsrStatus::Parse);
    assert!(last_error().contains("offset 0"));

    // vmax above venc
    let dims = [8usize, 8, 8];
    assert_eq!(unsafe { flowsr_phantom_poiseuille(dims.as_ptr(), 1, 100.0, 120.0, &mut out) }, FlowsrStatus::InvalidArgument);

    let ds = phantom([9, 9, 4], 1);
    let factor = [2usize, 2, 2];
    let st = unsafe { flowsr_degrade(ds.0, factor.as_ptr(), FlowsrKernel::Ideal, f64::NAN, 0, &mut out, ptr::null_mut()) };
    assert_eq!(st, FlowsrStatus::InvalidArgument);
    assert!(out.is_null());

    // success clears the message
    let ok = phantom([4, 4, 4], 1);
    drop(ok);
    assert!(flowsr_last_error().is_null());
    unsafe { flowsr_dataset_free(ptr::null_mut()) };
}

#[test]
fn raw_solve_matches_library() {
    let lr = [4usize, 3, 5];
    let factor = [2usize, 2, 1];
    let n_l = 60;
    let n_h = 240;
    let y: Vec<f64> = (0..2 * n_l).map(|i| ((i * 37 % 23) as f64 - 11.0) / 7.0).collect();
    let mut x = vec![0.0; 2 * n_h];
    let st = unsafe {
        flowsr_fsr_solve(lr.as_ptr(), factor.as_ptr(), FlowsrKernel::Gaussian, 0.05, FlowsrPrior::Trilinear, y.as_ptr(), x.as_mut_ptr())
    };
    assert_eq!(st, FlowsrStatus::Ok);

    let d = Decimation::new(2, 2, 1).unwrap();
    let grid = Grid3::cube(4, 3, 5).unwrap();
    let yv = ComplexVolume::new(grid, y.chunks(2).map(|c| Complex64::new(c[0], c[1])).collect()).unwrap();
    let cfg = SolverConfig::new(0.05, KernelChoice::gaussian_matched(d), d, PriorMode::Trilinear).unwrap();
    let (expect, _) = flowsr::fsr_solve(&yv, &cfg).unwrap();
    for (got, want) in x.chunks(2).zip(expect.data()) {
        assert_eq!(got[0], want.re);
        assert_eq!(got[1], want.im);
    }

    let st = unsafe {
        flowsr_fsr_solve(lr.as_ptr(), factor.as_ptr(), FlowsrKernel::Ideal, 0.0, FlowsrPrior::Trilinear, y.as_ptr(), x.as_mut_ptr())
    };
    assert_eq!(st, FlowsrStatus::InvalidArgument);
    assert!(last_error().contains("tau"));
}

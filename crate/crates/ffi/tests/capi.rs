use std::ffi::CStr;
use std::ptr;

use flowpmc::numkit::{Matrix, RngStream};
use flowpmc::samplers::{run_ais, AisConfig, Algorithm};
use flowpmc::targets::{make_gmm_target, GaussianMixtureTarget, TargetDensity};
use flowpmc_ffi::*;

fn last_error() -> String {
    let p = flowpmc_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn gmm_handle() -> *mut FlowpmcTarget {
    let weights = [0.3, 0.7];
    let means = [0.0, 0.0, 3.0, -1.0];
    let covs = [1.0, 0.2, 0.2, 2.0, 0.5, 0.0, 0.0, 0.5];
    let mut t = ptr::null_mut();
    let s = unsafe { flowpmc_gmm_target_new(2, 2, weights.as_ptr(), means.as_ptr(), covs.as_ptr(), &mut t) };
    assert_eq!(s, FlowpmcStatus::Ok);
    t
}

#[test]
fn gmm_handle_matches_library() {
    let t = gmm_handle();
    let reference = GaussianMixtureTarget::new(
        vec![0.3, 0.7],
        vec![vec![0.0, 0.0], vec![3.0, -1.0]],
        vec![
            Matrix::from_rows(&[vec![1.0, 0.2], vec![0.2, 2.0]]).unwrap(),
            Matrix::scaled_identity(2, 0.5),
        ],
    )
    .unwrap();
    let x = [0.4, -0.3];
    let mut lp = 0.0;
    let mut grad = [0.0; 2];
    unsafe {
        assert_eq!(flowpmc_target_dim(t), 2);
        assert_eq!(flowpmc_target_log_density(t, x.as_ptr(), 2, &mut lp), FlowpmcStatus::Ok);
        assert_eq!(flowpmc_target_grad_log_density(t, x.as_ptr(), 2, grad.as_mut_ptr()), FlowpmcStatus::Ok);
        flowpmc_target_free(t);
    }
    assert_eq!(lp, reference.log_density(&x).unwrap());
    assert_eq!(grad.to_vec(), reference.grad_log_density(&x).unwrap());
}

#[test]
fn errors_map_to_status_codes() {
    let mut t = ptr::null_mut();
    let weights = [1.0];
    let means = [0.0, 0.0];
    let not_spd = [1.0, 2.0, 2.0, 1.0];
    let s = unsafe { flowpmc_gmm_target_new(2, 1, weights.as_ptr(), means.as_ptr(), not_spd.as_ptr(), &mut t) };
    assert_eq!(s, FlowpmcStatus::Numerical);
    assert!(t.is_null());
    assert!(last_error().contains("positive definite"));

    let s = unsafe { flowpmc_gmm_target_new(2, 1, weights.as_ptr(), ptr::null(), not_spd.as_ptr(), &mut t) };
    assert_eq!(s, FlowpmcStatus::NullPointer);
    assert!(last_error().contains("means"));

    let t = gmm_handle();
    let x = [1.0, 2.0, 3.0];
    let mut lp = 0.0;
    unsafe {
        assert_eq!(flowpmc_target_log_density(t, x.as_ptr(), 3, &mut lp), FlowpmcStatus::DimensionMismatch);
        assert_eq!(flowpmc_target_log_density(ptr::null(), x.as_ptr(), 2, &mut lp), FlowpmcStatus::NullPointer);
        assert_eq!(flowpmc_target_dim(ptr::null()), 0);
        flowpmc_target_free(t);
        flowpmc_target_free(ptr::null_mut());
    }

    let design = [1.0, 0.5];
    let labels = [2u8];
    let mut t = ptr::null_mut();
    let s = unsafe { flowpmc_logistic_target_new(2, 1, design.as_ptr(), labels.as_ptr(), 10.0, &mut t) };
    assert_eq!(s, FlowpmcStatus::InvalidArgument);
}

#[test]
fn run_matches_library_and_estimates() {
    let mut t = ptr::null_mut();
    assert_eq!(unsafe { flowpmc_gmm_target_random(3, 1, 3, 2, &mut t) }, FlowpmcStatus::Ok);
    let reference = make_gmm_target(&mut RngStream::new(3, 1), 3, 2).unwrap();

    let mut params = flowpmc_ais_params_default(FlowpmcAlgorithm::NfPmc);
    assert_eq!((params.proposals, params.samples_per_proposal, params.iterations), (100, 10, 50));
    params.proposals = 4;
    params.samples_per_proposal = 3;
    params.iterations = 5;

    let mut out = ptr::null_mut();
    assert_eq!(unsafe { flowpmc_run_ais(t, &params, 9, 0, &mut out) }, FlowpmcStatus::Ok);
    let count = unsafe { flowpmc_output_sample_count(out) };
    assert_eq!(count, 60);

    let mut points = vec![0.0; count * 3];
    let mut lw = vec![0.0; count];
    let s = unsafe { flowpmc_output_samples(out, points.as_mut_ptr(), points.len(), lw.as_mut_ptr(), lw.len()) };
    assert_eq!(s, FlowpmcStatus::Ok);

    let cfg = AisConfig::new(Algorithm::NfPmc, 4, 3, 5, 1.0);
    let lib = run_ais(&cfg, &reference, &RngStream::new(9, 0)).unwrap();
    assert_eq!(lw, lib.log_weights());
    assert_eq!(points[..3], lib.samples[0].point[..]);

    let mut mean = [0.0; 3];
    let mut ess = 0.0;
    let s = unsafe { flowpmc_output_snis_mean(out, 0, mean.as_mut_ptr(), 3, &mut ess, ptr::null_mut()) };
    assert_eq!(s, FlowpmcStatus::Ok);
    let est = flowpmc::estimators::snis_mean(&lib, 0).unwrap();
    assert_eq!(mean.to_vec(), est.mean);
    assert_eq!(ess, est.ess);

    let s = unsafe { flowpmc_output_snis_mean(out, 0, mean.as_mut_ptr(), 2, &mut ess, ptr::null_mut()) };
    assert_eq!(s, FlowpmcStatus::DimensionMismatch);
    let s = unsafe { flowpmc_output_samples(out, points.as_mut_ptr(), 5, ptr::null_mut(), 0) };
    assert_eq!(s, FlowpmcStatus::DimensionMismatch);

    params.proposals = 0;
    let mut bad = ptr::null_mut();
    assert_eq!(unsafe { flowpmc_run_ais(t, &params, 9, 0, &mut bad) }, FlowpmcStatus::InvalidArgument);
    assert!(bad.is_null());

    unsafe {
        flowpmc_output_free(out);
        flowpmc_target_free(t);
    }
}

#[test]
fn header_declares_the_api() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/flowpmc.h")).unwrap();
    for name in [
        "flowpmc_last_error_message",
        "flowpmc_gmm_target_new",
        "flowpmc_gmm_target_random",
        "flowpmc_logistic_target_new",
        "flowpmc_target_log_density",
        "flowpmc_target_grad_log_density",
        "flowpmc_run_ais",
        "flowpmc_output_snis_mean",
        "flowpmc_output_free",
        "typedef struct FlowpmcTarget FlowpmcTarget",
        "FLOWPMC_STATUS_OK = 0",
    ] {
        assert!(header.contains(name), "{name}");
    }
}

#[test]
fn header_compiles_as_c() {
    let Some(cc) = which_cc() else { return };
    let dir = scratch_dir();
    let src = dir.join("use_header.c");
    std::fs::write(
        &src,
        "#include \"flowpmc.h\"\nint main(void) { FlowpmcAisParams p = flowpmc_ais_params_default(FLOWPMC_ALGORITHM_NF_PMC); return (int)p.proposals - 100; }\n",
    )
    .unwrap();
    let status = std::process::Command::new(cc)
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I", concat!(env!("CARGO_MANIFEST_DIR"), "/include")])
        .arg(&src)
        .status()
        .unwrap();
    assert!(status.success());
}

fn which_cc() -> Option<&'static str> {
    ["cc", "gcc", "clang"]
        .into_iter()
        .find(|c| std::process::Command::new(c).arg("--version").output().is_ok())
}

fn scratch_dir() -> std::path::PathBuf {
    let dir = std::env::temp_dir().join(format!("flowpmc-ffi-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

use std::ffi::CStr;
use std::ptr;

use amp_retrain_ffi::*;

fn last_error() -> String {
    unsafe {
        CStr::from_ptr(amp_last_error_message())
            .to_string_lossy()
            .into_owned()
    }
}

#[test]
fn version_is_crate_version() {
    let v = unsafe { CStr::from_ptr(amp_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn gmm_handle_maps_and_crossover() {
    unsafe {
        let mut model = ptr::null_mut();
        assert_eq!(
            amp_gmm_new(1.5, 2.0, 0.3, 0.5, 0, &mut model),
            AmpStatus::Ok
        );
        assert!(!model.is_null());

        let mut opt = 0.0;
        let mut ft = 0.0;
        let mut ct = 0.0;
        assert_eq!(
            amp_gmm_eta_map(model, AmpMapKind::Optimal, 1.0, &mut opt),
            AmpStatus::Ok
        );
        assert_eq!(
            amp_gmm_eta_map(model, AmpMapKind::FullRetrainingLimit, 1.0, &mut ft),
            AmpStatus::Ok
        );
        assert_eq!(
            amp_gmm_eta_map(model, AmpMapKind::ConsensusRetrainingLimit, 1.0, &mut ct),
            AmpStatus::Ok
        );
        assert!(opt >= ft.max(ct) - 1e-9);

        let mut u = 0.0;
        assert_eq!(amp_gmm_crossover(model, &mut u), AmpStatus::Ok);
        assert!((u - 0.7505).abs() < 1e-3, "{u}");

        let mut errs = [0.0; 6];
        assert_eq!(
            amp_gmm_se_errors(model, 6, errs.as_mut_ptr(), 6),
            AmpStatus::Ok
        );
        assert!(errs.windows(2).all(|w| w[1] <= w[0] + 1e-12));
        assert_eq!(
            amp_gmm_se_errors(model, 6, errs.as_mut_ptr(), 3),
            AmpStatus::BufferTooSmall
        );

        amp_gmm_free(model);
    }
}

#[test]
fn gmm_simulation_tracks_prediction() {
    unsafe {
        let mut model = ptr::null_mut();
        assert_eq!(
            amp_gmm_new(1.5, 0.8, 0.3, 0.3, 1500, &mut model),
            AmpStatus::Ok
        );
        let mut sim = [0.0; 4];
        let mut se = [0.0; 4];
        assert_eq!(
            amp_gmm_run(model, 4, 11, 0, sim.as_mut_ptr(), 4),
            AmpStatus::Ok
        );
        assert_eq!(
            amp_gmm_se_errors(model, 4, se.as_mut_ptr(), 4),
            AmpStatus::Ok
        );
        for (a, b) in sim.iter().zip(&se) {
            assert!((a - b).abs() < 0.05, "{a} vs {b}");
        }
        let mut again = [0.0; 4];
        assert_eq!(
            amp_gmm_run(model, 4, 11, 0, again.as_mut_ptr(), 4),
            AmpStatus::Ok
        );
        assert_eq!(sim, again);
        amp_gmm_free(model);
    }
}

#[test]
fn invalid_arguments_report_status_and_message() {
    unsafe {
        let mut model = ptr::null_mut();
        assert_eq!(
            amp_gmm_new(1.5, 2.0, 0.7, 0.5, 0, &mut model),
            AmpStatus::InvalidArgument
        );
        assert!(model.is_null());
        assert!(!last_error().is_empty());

        assert_eq!(
            amp_gmm_new(1.5, 2.0, 0.3, 0.5, 0, ptr::null_mut()),
            AmpStatus::NullPointer
        );
        let mut out = 0.0;
        assert_eq!(
            amp_gmm_crossover(ptr::null(), &mut out),
            AmpStatus::NullPointer
        );

        amp_gmm_free(ptr::null_mut());
        amp_glm_free(ptr::null_mut());
        amp_mixture_free(ptr::null_mut());
    }
}

#[test]
fn flip_threshold() {
    let mut p = 0.0;
    let mut guaranteed = 0;
    unsafe {
        assert_eq!(amp_p_star(1.5, 2.0, &mut p, &mut guaranteed), AmpStatus::Ok);
    }
    assert!((p - 0.224673).abs() < 1e-5, "{p}");
    assert_eq!(guaranteed, 1);
}

#[test]
fn glm_sign_link_errors_decrease() {
    unsafe {
        let mut model = ptr::null_mut();
        assert_eq!(
            amp_glm_new(1.0, 2.0, 0.2, AmpLinkKind::Sign, 0.0, 0, &mut model),
            AmpStatus::Ok
        );
        let mut errs = [0.0; 4];
        assert_eq!(
            amp_glm_se_errors(model, 4, errs.as_mut_ptr(), 4),
            AmpStatus::Ok
        );
        assert!(errs.iter().all(|e| (0.0..=0.5).contains(e)));
        assert!(errs[3] <= errs[0]);
        amp_glm_free(model);

        assert_eq!(
            amp_glm_new(1.0, 2.0, 0.2, AmpLinkKind::Logistic, -1.0, 0, &mut model),
            AmpStatus::InvalidArgument
        );
    }
}

#[test]
fn mixture_fit_and_targets() {
    let mut logits = Vec::new();
    let mut labels = Vec::new();
    for i in 0..80 {
        let y = if i % 2 == 0 { 1.0 } else { -1.0 };
        logits.push(2.0 * y + 0.05 * ((i * 13 % 17) as f64 - 8.0));
        labels.push(if i % 7 == 0 { -y } else { y });
    }
    unsafe {
        let mut fit = ptr::null_mut();
        assert_eq!(
            amp_mixture_fit(logits.as_ptr(), logits.len() as u64, &mut fit),
            AmpStatus::Ok
        );
        let mut params = std::mem::zeroed::<AmpMixtureParams>();
        assert_eq!(amp_mixture_params(fit, &mut params), AmpStatus::Ok);
        assert!(params.mu_plus > 1.0 && params.mu_minus < -1.0);
        assert!((params.pi_plus - 0.5).abs() < 0.05);

        let mut targets = vec![0.0; logits.len()];
        let st = amp_mixture_targets(
            fit,
            0.1,
            logits.as_ptr(),
            labels.as_ptr(),
            logits.len() as u64,
            targets.as_mut_ptr(),
        );
        assert_eq!(st, AmpStatus::Ok);
        for (t, z) in targets.iter().zip(&logits) {
            assert!(t * z > 0.0);
        }
        amp_mixture_free(fit);

        let flat = [1.0; 6];
        assert_eq!(
            amp_mixture_fit(flat.as_ptr(), 6, &mut fit),
            AmpStatus::Numerical
        );
    }
}

#[test]
fn header_declares_exports() {
    let header = std::fs::read_to_string(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/include/amp_retrain.h"
    ))
    .unwrap();
    for name in [
        "amp_version",
        "amp_last_error_message",
        "amp_gmm_new",
        "amp_gmm_free",
        "amp_gmm_eta_map",
        "amp_gmm_crossover",
        "amp_gmm_run",
        "amp_p_star",
        "amp_glm_new",
        "amp_glm_se_errors",
        "amp_mixture_fit",
        "amp_mixture_targets",
        "amp_mixture_free",
        "AmpMixtureParams",
        "AMP_STATUS_OK",
    ] {
        assert!(header.contains(name), "{name} missing from header");
    }
}

//! The C ABI exercised from Rust: status codes, handles and buffers.

use std::ffi::{CStr, CString};
use std::ptr;

use qlab_ffi::*;

fn last_error() -> String {
    let p = qlab_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn random_model() -> *mut QlabModel {
    let dims = [1usize, 2, 2, 2, 2];
    let mut m = ptr::null_mut();
    assert_eq!(
        unsafe { qlab_model_random(dims.as_ptr(), 1.0, 3, &mut m) },
        QlabStatus::Ok
    );
    m
}

#[test]
fn scalar_functions_match_core() {
    let mut v = 0.0;
    assert_eq!(unsafe { qlab_q_log(0.25, 0.5, &mut v) }, QlabStatus::Ok);
    assert!((v - 2.0 * (0.5 - 1.0)).abs() < 1e-15);
    assert!(qlab_last_error().is_null());
    assert_eq!(unsafe { qlab_loss(0.5, 1.0, &mut v) }, QlabStatus::Ok);
    assert!((v - 2f64.ln()).abs() < 1e-15);
    assert_eq!(unsafe { qlab_loss(0.0, 0.5, &mut v) }, QlabStatus::ColdZero);
    assert_eq!(
        unsafe { qlab_loss(1.5, 0.5, &mut v) },
        QlabStatus::InvalidArgument
    );
    assert!(last_error().contains("outside (0, 1]"));
    assert_eq!(
        unsafe { qlab_q_log(0.5, 1.5, &mut v) },
        QlabStatus::InvalidArgument
    );
    assert_eq!(
        unsafe { qlab_q_log(0.5, 0.5, ptr::null_mut()) },
        QlabStatus::NullPointer
    );
    assert_eq!(
        unsafe { qlab_sigmoid_escape_time(1.0, 1e-3, 0.5, &mut v) },
        QlabStatus::Ok
    );
    assert!(v > 0.0);
}

#[test]
fn escort_at_q_one_returns_alpha() {
    let alpha = [0.5, 0.3, 0.2];
    let mut out = [0.0; 3];
    assert_eq!(
        unsafe { qlab_escort(alpha.as_ptr(), 3, 1.0, out.as_mut_ptr()) },
        QlabStatus::Ok
    );
    for (a, b) in alpha.iter().zip(&out) {
        assert!((a - b).abs() < 1e-15);
    }
    let bad = [0.5, 0.6];
    assert_eq!(
        unsafe { qlab_escort(bad.as_ptr(), 2, 0.5, out.as_mut_ptr()) },
        QlabStatus::InvalidArgument
    );
}

#[test]
fn model_round_trips_through_text() {
    let m = random_model();
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { qlab_model_to_string(m, &mut s) }, QlabStatus::Ok);
    let mut back = ptr::null_mut();
    assert_eq!(unsafe { qlab_model_from_str(s, &mut back) }, QlabStatus::Ok);
    let target = [1usize, 0];
    let (mut a, mut b) = (0.0, 0.0);
    unsafe {
        assert_eq!(
            qlab_model_log_marginal(m, 0, target.as_ptr(), 2, &mut a),
            QlabStatus::Ok
        );
        assert_eq!(
            qlab_model_log_marginal(back, 0, target.as_ptr(), 2, &mut b),
            QlabStatus::Ok
        );
        qlab_string_free(s);
        qlab_model_free(back);
        qlab_model_free(m);
    }
    assert_eq!(a.to_bits(), b.to_bits());
    let junk = CString::new("not a model").unwrap();
    assert_eq!(
        unsafe { qlab_model_from_str(junk.as_ptr(), &mut back) },
        QlabStatus::Parse
    );
}

#[test]
fn gradient_buffer_contract() {
    let m = random_model();
    let mut n = 0;
    assert_eq!(unsafe { qlab_model_num_params(m, &mut n) }, QlabStatus::Ok);
    let target = [1usize, 0];
    let mut len = 0;
    let mut small = vec![7.0; n - 1];
    let st = unsafe {
        qlab_model_grad_loss(
            m,
            0,
            target.as_ptr(),
            2,
            0.5,
            small.as_mut_ptr(),
            n - 1,
            &mut len,
        )
    };
    assert_eq!(st, QlabStatus::BufferTooSmall);
    assert_eq!(len, n);
    assert!(small.iter().all(|&v| v == 7.0));
    let mut g = vec![0.0; n];
    let st =
        unsafe { qlab_model_grad_loss(m, 0, target.as_ptr(), 2, 0.5, g.as_mut_ptr(), n, &mut len) };
    assert_eq!(st, QlabStatus::Ok);
    assert!(g.iter().any(|&v| v != 0.0));
    let bad = [5usize, 0];
    let st =
        unsafe { qlab_model_grad_loss(m, 0, bad.as_ptr(), 2, 0.5, g.as_mut_ptr(), n, &mut len) };
    assert_ne!(st, QlabStatus::Ok);
    unsafe { qlab_model_free(m) };
}

#[test]
fn pool_estimators_are_reproducible_and_normalized() {
    let m = random_model();
    let target = [1usize, 0];
    let mut n = 0;
    unsafe { qlab_model_num_params(m, &mut n) };
    let sample = |seed| {
        let mut p = ptr::null_mut();
        assert_eq!(
            unsafe { qlab_pool_sample(m, 0, target.as_ptr(), 2, 16, seed, &mut p) },
            QlabStatus::Ok
        );
        p
    };
    let (p, p2) = (sample(9), sample(9));
    let mut ess = 0.0;
    assert_eq!(unsafe { qlab_pool_ess(p, &mut ess) }, QlabStatus::Ok);
    assert!((1.0..=16.0).contains(&ess));
    let mut len = 0;
    let (mut raw, mut norm, mut again) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    unsafe {
        assert_eq!(
            qlab_garl_plugin(p, 0.5, false, raw.as_mut_ptr(), n, &mut len),
            QlabStatus::Ok
        );
        assert_eq!(
            qlab_garl_plugin(p, 0.5, true, norm.as_mut_ptr(), n, &mut len),
            QlabStatus::Ok
        );
        assert_eq!(
            qlab_garl_plugin(p2, 0.5, false, again.as_mut_ptr(), n, &mut len),
            QlabStatus::Ok
        );
    }
    assert_eq!(raw, again);
    let f = (-0.5 * 16f64.ln()).exp();
    for (r, z) in raw.iter().zip(&norm) {
        assert_eq!((r * f).to_bits(), z.to_bits());
    }
    let (mut a, mut b) = (vec![0.0; n], vec![0.0; n]);
    unsafe {
        assert_eq!(
            qlab_garl_rloo(p, 0.5, true, a.as_mut_ptr(), n, &mut len),
            QlabStatus::Ok
        );
        assert_eq!(
            qlab_paft(p, 0.5, 0, 4, true, a.as_mut_ptr(), n, &mut len),
            QlabStatus::Ok
        );
        assert_eq!(
            qlab_paft(p, 0.5, 0, 4, true, b.as_mut_ptr(), n, &mut len),
            QlabStatus::Ok
        );
        qlab_pool_free(p);
        qlab_pool_free(p2);
        qlab_model_free(m);
    }
    assert_eq!(a, b);
}

#[test]
fn pools_need_latent_models_and_null_handles_are_rejected() {
    let s = CString::new("qlab-model v1\nkind sigmoid\nparams 1\n0.5\n").unwrap();
    let mut m = ptr::null_mut();
    assert_eq!(
        unsafe { qlab_model_from_str(s.as_ptr(), &mut m) },
        QlabStatus::Ok,
        "{}",
        last_error()
    );
    let mut p = ptr::null_mut();
    let target = [1usize];
    assert_eq!(
        unsafe { qlab_pool_sample(m, 0, target.as_ptr(), 1, 4, 1, &mut p) },
        QlabStatus::WrongModelKind
    );
    let mut ess = 0.0;
    assert_eq!(
        unsafe { qlab_pool_ess(ptr::null(), &mut ess) },
        QlabStatus::NullPointer
    );
    unsafe {
        qlab_model_free(m);
        qlab_model_free(ptr::null_mut());
        qlab_pool_free(ptr::null_mut());
        qlab_string_free(ptr::null_mut());
    }
}

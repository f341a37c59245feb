use std::ffi::{CStr, CString};
use std::ptr;

use prinstrat_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(prinstrat_last_error()) }.to_string_lossy().into_owned()
}

fn small_dataset() -> *mut PrinstratDataset {
    let n = 400;
    let t: Vec<u8> = (0..n).map(|i| (i % 2) as u8).collect();
    let s: Vec<f64> = (0..n).map(|i| ((i * 37) % 101) as f64 / 101.0).collect();
    let y: Vec<f64> = (0..n).map(|i| 1.0 + 2.0 * s[i] + t[i] as f64 + ((i * 13) % 7) as f64 * 0.1).collect();
    let mut out = ptr::null_mut();
    let st = unsafe { prinstrat_dataset_new(y.as_ptr(), t.as_ptr(), s.as_ptr(), n, &mut out) };
    assert_eq!(st, PrinstratStatus::Ok, "{}", last_error());
    out
}

#[test]
fn dataset_round_trip_and_free() {
    let d = small_dataset();
    assert_eq!(unsafe { prinstrat_dataset_len(d) }, 400);
    unsafe { prinstrat_dataset_free(d) };
    unsafe { prinstrat_dataset_free(ptr::null_mut()) };
    assert_eq!(unsafe { prinstrat_dataset_len(ptr::null()) }, 0);
}

#[test]
fn null_and_invalid_inputs_map_to_status_codes() {
    let mut out = ptr::null_mut();
    let st = unsafe { prinstrat_dataset_new(ptr::null(), ptr::null(), ptr::null(), 3, &mut out) };
    assert_eq!(st, PrinstratStatus::NullPointer);
    assert!(out.is_null());
    assert!(last_error().contains("null"));

    let (y, t, s) = ([1.0, 2.0], [0u8, 2], [0.0, 1.0]);
    let st = unsafe { prinstrat_dataset_new(y.as_ptr(), t.as_ptr(), s.as_ptr(), 2, &mut out) };
    assert_eq!(st, PrinstratStatus::Data);

    let path = CString::new("/nonexistent/data.csv").unwrap();
    assert_eq!(unsafe { prinstrat_dataset_read_csv(path.as_ptr(), &mut out) }, PrinstratStatus::Data);

    let d = small_dataset();
    let bad = CString::new(r#"{"chain": {"n_iters": 10}}"#).unwrap();
    let mut draws = ptr::null_mut();
    assert_eq!(unsafe { prinstrat_fit(d, bad.as_ptr(), &mut draws) }, PrinstratStatus::Config);
    assert!(last_error().contains("n_iters"));
    unsafe { prinstrat_dataset_free(d) };
}

#[test]
fn fit_exposes_columns_and_summary() {
    let d = small_dataset();
    let cfg = CString::new(
        r#"{"constraints": {"pi": true, "rho_fixed": 0.5}, "chain": {"n_iter": 600, "burn_in": 100, "thin": 5, "seed": 4}}"#,
    )
    .unwrap();
    let mut draws = ptr::null_mut();
    let st = unsafe { prinstrat_fit(d, cfg.as_ptr(), &mut draws) };
    assert_eq!(st, PrinstratStatus::Ok, "{}", last_error());
    assert_eq!(last_error(), "");
    let n = unsafe { prinstrat_draws_len(draws) };
    assert_eq!(n, 100);
    assert!(unsafe { prinstrat_draws_n_columns(draws) } > 10);

    let mut buf = vec![f64::NAN; n];
    let name = CString::new("beta01").unwrap();
    let st = unsafe { prinstrat_draws_column(draws, name.as_ptr(), buf.as_mut_ptr(), n) };
    assert_eq!(st, PrinstratStatus::Ok);
    assert!(buf.iter().all(|&v| v == 0.0));
    let st = unsafe { prinstrat_draws_column(draws, name.as_ptr(), buf.as_mut_ptr(), n - 1) };
    assert_eq!(st, PrinstratStatus::Config);

    let mut json = ptr::null_mut();
    assert_eq!(unsafe { prinstrat_draws_summary_json(draws, &mut json) }, PrinstratStatus::Ok);
    let text = unsafe { CStr::from_ptr(json) }.to_str().unwrap().to_owned();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["n_draws"], 100);
    unsafe {
        prinstrat_string_free(json);
        prinstrat_draws_free(draws);
        prinstrat_dataset_free(d);
    }
}

#[test]
fn region_request_matches_library() {
    let req = CString::new(
        serde_json::json!({
            "truth": prinstrat::psmodel::JointParams::table1_truth(),
            "rho": 0.75,
            "assumption": "none"
        })
        .to_string(),
    )
    .unwrap();
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { prinstrat_pir_json(req.as_ptr(), &mut out) }, PrinstratStatus::Ok, "{}", last_error());
    let v: serde_json::Value = serde_json::from_str(unsafe { CStr::from_ptr(out) }.to_str().unwrap()).unwrap();
    let inner = v["beta10"]["intervals"][1]["lo"].as_f64().unwrap();
    assert!((inner - 11.5).abs() < 1e-9);
    unsafe { prinstrat_string_free(out) };

    let both = CString::new(r#"{"rho": 0.5, "assumption": "none"}"#).unwrap();
    assert_eq!(unsafe { prinstrat_pir_json(both.as_ptr(), &mut out) }, PrinstratStatus::Config);
}

#[test]
fn posterior_variance_and_not_estimable() {
    let mut i = PrinstratAsymInputs {
        t_bar: 0.5,
        beta10: 1.2,
        beta01: 0.0,
        sigma_s0: 1.0,
        sigma_s1: 1.0,
        sigma_y2: 0.25,
        rho: 0.75,
        n: 1200,
    };
    let (mut v, mut ok) = (0.0, -1);
    assert_eq!(unsafe { prinstrat_posterior_var(&i, &mut v, &mut ok) }, PrinstratStatus::Ok);
    assert_eq!(ok, 1);
    assert!((v / 3.585_185e-4 - 1.0).abs() < 1e-5);
    i.beta10 = 0.0;
    assert_eq!(unsafe { prinstrat_posterior_var(&i, &mut v, &mut ok) }, PrinstratStatus::Ok);
    assert_eq!(ok, 0);
    assert!(v.is_nan());
    i.n = 0;
    assert_eq!(unsafe { prinstrat_posterior_var(&i, &mut v, &mut ok) }, PrinstratStatus::Config);
}

/// The generated header must compile as C.
#[test]
fn header_is_valid_c() {
    let header = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("include/prinstrat.h");
    assert!(header.exists());
    let Ok(out) = std::process::Command::new("cc").args(["-fsyntax-only", "-x", "c", "-std=c99", "-Wall", "-Werror"]).arg(&header).output() else {
        eprintln!("no C compiler on PATH; header syntax not checked");
        return;
    };
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

//! Exercises the C ABI from Rust: handles, status codes, error messages,
//! and the JSON-configured entry points.

use std::ffi::{CStr, CString};
use std::ptr;

use gradekit_ffi::*;

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> String {
    unsafe {
        let ptr = gk_last_error_message();
        assert!(!ptr.is_null(), "expected an error message");
        let msg = CStr::from_ptr(ptr).to_str().unwrap().to_string();
        gk_string_free(ptr);
        msg
    }
}

/// Small synthetic corpus via the JSON spec entry point.
fn make_datasets() -> (*mut GkDataset, *mut GkDataset, *mut GkDataset) {
    let spec = c(r#"{
        "n_train": 12, "n_calibration": 6, "n_test": 6,
        "frames_min": 2, "frames_max": 4, "seed": 5
    }"#);
    let mut train = ptr::null_mut();
    let mut cal = ptr::null_mut();
    let mut test = ptr::null_mut();
    let status = unsafe { gk_synth_generate(spec.as_ptr(), &mut train, &mut cal, &mut test) };
    assert_eq!(status, GkStatus::GkOk);
    (train, cal, test)
}

#[test]
fn version_is_a_static_string() {
    let v = unsafe { CStr::from_ptr(gk_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn synth_dataset_roundtrip_through_files() {
    let (train, cal, test) = make_datasets();
    unsafe {
        assert_eq!(gk_dataset_num_speakers(train), 12);
        assert_eq!(gk_dataset_num_speakers(cal), 6);
        assert_eq!(gk_dataset_num_speakers(test), 6);

        let dir = tempfile::tempdir().unwrap();
        let path = c(dir.path().join("train.jsonl").to_str().unwrap());
        assert_eq!(gk_dataset_save(train, path.as_ptr()), GkStatus::GkOk);
        let mut back = ptr::null_mut();
        assert_eq!(gk_dataset_load(path.as_ptr(), &mut back), GkStatus::GkOk);
        assert_eq!(gk_dataset_num_speakers(back), 12);

        gk_dataset_free(train);
        gk_dataset_free(cal);
        gk_dataset_free(test);
        gk_dataset_free(back);
    }
}

#[test]
fn train_predict_and_score_through_the_abi() {
    let (train, _cal, test) = make_datasets();
    let cfg = c(r#"{
        "part": "P1", "architecture": "shallow",
        "batch_size": 8, "grad_accum_steps": 1,
        "dropout_rate": 0.0, "learning_rate": 0.002, "epochs": 6,
        "weight_decay": 0.0, "hidden_width": 16, "penult_width": 4,
        "activation": "identity"
    }"#);
    unsafe {
        let mut ens = ptr::null_mut();
        assert_eq!(
            gk_train_ensemble(train, cfg.as_ptr(), 2, 77, &mut ens),
            GkStatus::GkOk
        );
        assert_eq!(gk_ensemble_part_index(ens), 0);

        let n = gk_dataset_num_speakers(test);
        let mut scores = vec![0.0f64; n];
        assert_eq!(
            gk_ensemble_predict(ens, test, scores.as_mut_ptr(), n),
            GkStatus::GkOk
        );
        assert!(scores.iter().all(|s| s.is_finite()));

        // Ensemble save/load keeps predictions identical.
        let dir = tempfile::tempdir().unwrap();
        let ens_dir = c(dir.path().join("ens").to_str().unwrap());
        assert_eq!(gk_ensemble_save(ens, ens_dir.as_ptr()), GkStatus::GkOk);
        let mut back = ptr::null_mut();
        assert_eq!(
            gk_ensemble_load(ens_dir.as_ptr(), &mut back),
            GkStatus::GkOk
        );
        let mut scores2 = vec![0.0f64; n];
        assert_eq!(
            gk_ensemble_predict(back, test, scores2.as_mut_ptr(), n),
            GkStatus::GkOk
        );
        for (a, b) in scores.iter().zip(&scores2) {
            assert_eq!(a.to_bits(), b.to_bits());
        }

        gk_ensemble_free(ens);
        gk_ensemble_free(back);
        gk_dataset_free(train);
        gk_dataset_free(_cal);
        gk_dataset_free(test);
    }
}

#[test]
fn metrics_report_matches_library() {
    let pred = [1.0, 2.0, 3.0, 4.5];
    let refs = [1.0, 2.5, 3.0, 4.0];
    let mut out = GkMetrics {
        pcc: 0.0,
        src: 0.0,
        rmse: 0.0,
        within_half: 0.0,
        within_one: 0.0,
        n: 0,
    };
    let status = unsafe { gk_metrics_report(pred.as_ptr(), refs.as_ptr(), pred.len(), &mut out) };
    assert_eq!(status, GkStatus::GkOk);
    let want = gradekit::metrics::report(&pred, &refs).unwrap();
    assert_eq!(out.rmse, want.rmse);
    assert_eq!(out.pcc, want.pcc);
    assert_eq!(out.src, want.src);
    assert_eq!(out.within_half, want.within_half);
    assert_eq!(out.within_one, want.within_one);
    assert_eq!(out.n, 4);
}

#[test]
fn degenerate_metrics_are_a_numeric_error() {
    let pred = [2.0, 2.0, 2.0];
    let refs = [1.0, 2.0, 3.0];
    let mut out = GkMetrics {
        pcc: 0.0,
        src: 0.0,
        rmse: 0.0,
        within_half: 0.0,
        within_one: 0.0,
        n: 0,
    };
    let status = unsafe { gk_metrics_report(pred.as_ptr(), refs.as_ptr(), pred.len(), &mut out) };
    assert_eq!(status, GkStatus::GkNumeric);
    assert!(last_error().contains("degenerate"));
}

#[test]
fn combination_fit_apply_and_persistence() {
    use gradekit::io::{save_predictions, PredPart, PredictionRecord};
    use gradekit::synth::{generate_grader_views, SynthSpec};

    let spec = SynthSpec {
        n_train: 4,
        n_calibration: 30,
        n_test: 10,
        frames_min: 2,
        frames_max: 3,
        seed: 9,
        ..SynthSpec::default()
    };
    let views = generate_grader_views(&spec, 2).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let mut paths = Vec::new();
    for name in &views.grader_names {
        let records: Vec<PredictionRecord> = views
            .calibration
            .iter()
            .filter(|r| &r.grader == name)
            .cloned()
            .collect();
        let path = dir.path().join(format!("{name}.csv"));
        save_predictions(&records, &path).unwrap();
        paths.push(CString::new(path.to_str().unwrap()).unwrap());
    }
    // Calibration targets as a dataset handle.
    let (_, cal, _) = {
        let mut train = ptr::null_mut();
        let mut cal = ptr::null_mut();
        let mut test = ptr::null_mut();
        let spec_json = c(&serde_json::to_string(&spec).unwrap());
        let status =
            unsafe { gk_synth_generate(spec_json.as_ptr(), &mut train, &mut cal, &mut test) };
        assert_eq!(status, GkStatus::GkOk);
        unsafe {
            gk_dataset_free(train);
            gk_dataset_free(test);
        }
        ((), cal, ())
    };

    unsafe {
        let path_ptrs: Vec<*const std::ffi::c_char> = paths.iter().map(|p| p.as_ptr()).collect();
        let mut model = ptr::null_mut();
        assert_eq!(
            gk_combination_fit(path_ptrs.as_ptr(), path_ptrs.len(), cal, &mut model),
            GkStatus::GkOk
        );

        // Apply to an all-3.0 row across both graders' parts.
        let tags: Vec<CString> = views
            .grader_names
            .iter()
            .flat_map(|g| (1..=5).map(move |p| c(&format!("{g}:P{p}"))))
            .collect();
        let tag_ptrs: Vec<*const std::ffi::c_char> = tags.iter().map(|t| t.as_ptr()).collect();
        let values = vec![3.0f64; tag_ptrs.len()];
        let mut score = 0.0f64;
        assert_eq!(
            gk_combination_apply(
                model,
                tag_ptrs.as_ptr(),
                values.as_ptr(),
                values.len(),
                &mut score
            ),
            GkStatus::GkOk
        );
        assert!(score.is_finite());

        let model_path = c(dir.path().join("model.json").to_str().unwrap());
        assert_eq!(
            gk_combination_save(model, model_path.as_ptr()),
            GkStatus::GkOk
        );
        let mut back = ptr::null_mut();
        assert_eq!(
            gk_combination_load(model_path.as_ptr(), &mut back),
            GkStatus::GkOk
        );
        let mut score2 = 0.0f64;
        assert_eq!(
            gk_combination_apply(
                back,
                tag_ptrs.as_ptr(),
                values.as_ptr(),
                values.len(),
                &mut score2
            ),
            GkStatus::GkOk
        );
        assert_eq!(score.to_bits(), score2.to_bits());

        gk_combination_free(model);
        gk_combination_free(back);
        gk_dataset_free(cal);
        let PredPart::Part(_) = views.calibration[0].part else {
            panic!("views emit part rows");
        };
    }
}

#[test]
fn null_and_missing_inputs_give_usage_and_data_errors() {
    unsafe {
        let mut out = ptr::null_mut();
        assert_eq!(gk_dataset_load(ptr::null(), &mut out), GkStatus::GkUsage);
        assert!(last_error().contains("null"));

        let missing = c("/nonexistent/dataset.jsonl");
        assert_eq!(
            gk_dataset_load(missing.as_ptr(), &mut out),
            GkStatus::GkData
        );
        assert!(last_error().contains("nonexistent"));

        let bad_spec = c("{\"no_such_field\": 1}");
        let (mut a, mut b, mut d) = (ptr::null_mut(), ptr::null_mut(), ptr::null_mut());
        assert_eq!(
            gk_synth_generate(bad_spec.as_ptr(), &mut a, &mut b, &mut d),
            GkStatus::GkUsage
        );
    }
}

#[test]
fn overall_grade_and_cefr_label() {
    unsafe {
        let scores = [2.0, 3.0, 3.0, 4.0, 6.0];
        let mut overall = 0.0f64;
        assert_eq!(
            gk_overall_grade(scores.as_ptr(), &mut overall),
            GkStatus::GkOk
        );
        assert_eq!(overall, 3.6);

        let mut buf = [0i8 as std::ffi::c_char; 8];
        assert_eq!(
            gk_cefr_label(4.6, buf.as_mut_ptr(), buf.len()),
            GkStatus::GkOk
        );
        let label = CStr::from_ptr(buf.as_ptr()).to_str().unwrap();
        assert_eq!(label, "C1");

        assert_eq!(
            gk_cefr_label(f64::NAN, buf.as_mut_ptr(), buf.len()),
            GkStatus::GkData
        );
    }
}

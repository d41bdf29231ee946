use std::ffi::{CStr, CString};
use std::fmt::Write as _;
use std::ptr;

use causalmix_ffi::*;

fn last_error() -> String {
    let p = cm_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn write_chain_csv(dir: &std::path::Path, n: usize) -> CString {
    let mut s = String::from("a,b,y\n");
    for i in 0..n {
        let a = (i as f64 * 0.37).sin();
        let b = 2.0 * a + 0.1 * ((i * 7919 % 101) as f64 / 101.0 - 0.5);
        let y = if b > 0.0 { "pos" } else { "neg" };
        writeln!(s, "{a},{b},{y}").unwrap();
    }
    let path = dir.join("chain.csv");
    std::fs::write(&path, s).unwrap();
    CString::new(path.to_str().unwrap()).unwrap()
}

#[test]
fn table_lifecycle_and_split() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_chain_csv(dir.path(), 300);
    unsafe {
        let mut t: *mut CmTable = ptr::null_mut();
        assert_eq!(cm_table_load_csv(path.as_ptr(), ptr::null(), &mut t), CmStatus::Ok);
        let (mut r, mut c) = (0usize, 0usize);
        assert_eq!(cm_table_shape(t, &mut r, &mut c), CmStatus::Ok);
        assert_eq!((r, c), (300, 3));
        let mut buf = vec![0.0; r * c];
        assert_eq!(cm_table_values(t, buf.as_mut_ptr(), buf.len()), CmStatus::Ok);
        assert_eq!(cm_table_values(t, buf.as_mut_ptr(), 2), CmStatus::InvalidArgument);

        let (mut tr, mut va, mut te) = (ptr::null_mut(), ptr::null_mut(), ptr::null_mut());
        assert_eq!(cm_table_split(t, 4, &mut tr, &mut va, &mut te), CmStatus::Ok);
        let mut total = 0;
        for (h, want) in [(tr, 180), (va, 60), (te, 60)] {
            assert_eq!(cm_table_shape(h, &mut r, &mut c), CmStatus::Ok);
            assert_eq!(r, want);
            total += r;
            cm_table_free(h);
        }
        assert_eq!(total, 300);
        cm_table_free(t);
    }
}

#[test]
fn discover_and_generate() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_chain_csv(dir.path(), 200);
    unsafe {
        let mut raw = ptr::null_mut();
        assert_eq!(cm_table_load_csv(path.as_ptr(), ptr::null(), &mut raw), CmStatus::Ok);
        let mut t = ptr::null_mut();
        assert_eq!(cm_table_preprocess(raw, &mut t), CmStatus::Ok);
        let mut adj = ptr::null_mut();
        assert_eq!(cm_discover(t, 6, 1, &mut adj), CmStatus::Ok);
        let mut n = 0;
        assert_eq!(cm_adjacency_nodes(adj, &mut n), CmStatus::Ok);
        assert_eq!(n, 3);
        let mut v = -1.0;
        assert_eq!(cm_adjacency_get(adj, 0, 1, &mut v), CmStatus::Ok);
        assert!((0.0..=1.0).contains(&v));
        assert_eq!(cm_adjacency_get(adj, 3, 0, &mut v), CmStatus::InvalidArgument);

        let mut syn = ptr::null_mut();
        assert_eq!(cm_generate_scm(t, adj, 0, 50, 9, &mut syn), CmStatus::Ok);
        let (mut r, mut c) = (0, 0);
        cm_table_shape(syn, &mut r, &mut c);
        assert_eq!((r, c), (50, 3));
        assert_eq!(cm_generate_scm(t, adj, 7, 50, 9, &mut syn), CmStatus::InvalidArgument);
        assert!(last_error().contains("tier"));

        let out = CString::new(dir.path().join("syn.csv").to_str().unwrap()).unwrap();
        assert_eq!(cm_table_write_csv(syn, out.as_ptr()), CmStatus::Ok);
        assert_eq!(std::fs::read_to_string(dir.path().join("syn.csv")).unwrap().lines().count(), 51);

        cm_table_free(syn);
        cm_adjacency_free(adj);
        cm_table_free(t);
        cm_table_free(raw);
    }
}

#[test]
fn adjacency_from_values_checks_range() {
    unsafe {
        let mut adj = ptr::null_mut();
        let ok = [0.0, 0.5, 0.2, 0.0];
        assert_eq!(cm_adjacency_from_values(ok.as_ptr(), 2, &mut adj), CmStatus::Ok);
        cm_adjacency_free(adj);
        let bad = [0.0, 1.5, 0.2, 0.0];
        assert_eq!(cm_adjacency_from_values(bad.as_ptr(), 2, &mut adj), CmStatus::InvalidArgument);
    }
}

#[test]
fn metrics_through_the_c_abi() {
    let probs = [0.9, 0.1, 0.2, 0.8, 0.6, 0.4, 0.3, 0.7];
    let labels = [0usize, 1, 1, 0];
    unsafe {
        let mut auc = 0.0;
        assert_eq!(cm_roc_auc(probs.as_ptr(), labels.as_ptr(), 4, 2, &mut auc), CmStatus::Ok);
        // Positives score 0.8 and 0.4, negatives 0.1 and 0.7: 3 of 4 pairs ordered.
        assert_eq!(auc, 0.75);
        let mut ll = 0.0;
        assert_eq!(cm_log_loss(probs.as_ptr(), labels.as_ptr(), 4, 2, &mut ll), CmStatus::Ok);
        let want = -(0.9f64.ln() + 0.8f64.ln() + 0.4f64.ln() + 0.3f64.ln()) / 4.0;
        assert!((ll - want).abs() < 1e-12);
        let (x, y) = ([1.0, 2.0, 3.0], [2.0, 4.0, 6.0]);
        let mut r = 0.0;
        assert_eq!(cm_pearson(x.as_ptr(), y.as_ptr(), 3, &mut r), CmStatus::Ok);
        assert!((r - 1.0).abs() < 1e-12);
    }
}

#[test]
fn normalize_score_and_errors() {
    unsafe {
        let mut v = 0.0;
        assert_eq!(cm_normalize_score(0.9, 0.8, true, &mut v), CmStatus::Ok);
        assert!((v - 12.5).abs() < 1e-9);
        assert_eq!(cm_normalize_score(0.4, 0.5, false, &mut v), CmStatus::Ok);
        assert!((v - 20.0).abs() < 1e-9);
        assert_eq!(cm_normalize_score(0.4, 0.0, true, &mut v), CmStatus::Undefined);
        assert_eq!(cm_normalize_score(0.4, 0.5, true, ptr::null_mut()), CmStatus::NullPointer);
        assert!(last_error().contains("out_value"));
        let mut t = ptr::null_mut();
        assert_eq!(cm_table_load_csv(ptr::null(), ptr::null(), &mut t), CmStatus::NullPointer);
        let missing = CString::new("/nonexistent/x.csv").unwrap();
        assert_eq!(cm_table_load_csv(missing.as_ptr(), ptr::null(), &mut t), CmStatus::Table);
        // Freeing null is a no-op.
        cm_table_free(ptr::null_mut());
        cm_adjacency_free(ptr::null_mut());
    }
}

#[test]
fn header_declares_every_entry_point() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/causalmix.h")).unwrap();
    for f in [
        "cm_last_error",
        "cm_table_load_csv",
        "cm_table_free",
        "cm_table_split",
        "cm_discover",
        "cm_generate_scm",
        "cm_roc_auc",
        "cm_normalize_score",
        "CM_STATUS_PANIC",
    ] {
        assert!(header.contains(f), "{f} missing from header");
    }
}

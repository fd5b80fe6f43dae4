use std::ffi::{CStr, CString};
use std::ptr;

use temg_ffi::*;

fn last_error() -> String {
    let p = temg_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

/// Triangle 0->1->2->0 plus a reciprocated pair.
unsafe fn triangle() -> *mut TemgGraph {
    let src = [0u32, 1, 2, 0, 1];
    let dst = [1u32, 2, 0, 1, 0];
    let time = [1i64, 2, 3, 10, 11];
    let amount = [1.0f64; 5];
    let mut g = ptr::null_mut();
    let st = temg_graph_from_edges(3, src.as_ptr(), dst.as_ptr(), time.as_ptr(), amount.as_ptr(), 5, &mut g);
    assert_eq!(st, TemgStatus::Ok);
    g
}

#[test]
fn constants_and_version() {
    assert_eq!(temg_num_motifs(), 36);
    assert_eq!(temg_count_columns(), 108);
    let v = unsafe { CStr::from_ptr(temg_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn counting_matches_bruteforce() {
    unsafe {
        let g = triangle();
        let mut n = 0usize;
        assert_eq!(temg_graph_num_nodes(g, &mut n), TemgStatus::Ok);
        assert_eq!(n, 3);
        let (mut fast, mut slow) = (ptr::null_mut(), ptr::null_mut());
        assert_eq!(temg_count_motifs(g, 100, 0, -1, 2, &mut fast), TemgStatus::Ok);
        assert_eq!(temg_count_motifs_bruteforce(g, 100, -1, &mut slow), TemgStatus::Ok);
        let mut a = vec![0u64; 3 * 108];
        let mut b = vec![0u64; 3 * 108];
        assert_eq!(temg_counts_copy(fast, a.as_mut_ptr(), a.len()), TemgStatus::Ok);
        assert_eq!(temg_counts_copy(slow, b.as_mut_ptr(), b.len()), TemgStatus::Ok);
        assert_eq!(a, b);
        assert!(a.iter().sum::<u64>() > 0);
        let mut c = 0u64;
        assert_eq!(temg_counts_get(fast, 0, 0, 0, &mut c), TemgStatus::Ok);
        assert_eq!(c, a[0]);
        assert_eq!(temg_counts_get(fast, 3, 0, 0, &mut c), TemgStatus::OutOfRange);
        assert!(last_error().contains("out of range"));
        assert_eq!(temg_counts_copy(fast, a.as_mut_ptr(), 7), TemgStatus::OutOfRange);
        temg_counts_free(fast);
        temg_counts_free(slow);
        temg_graph_free(g);
    }
}

#[test]
fn errors_are_reported() {
    unsafe {
        let mut g = ptr::null_mut();
        let missing = CString::new("/definitely/not/here.csv").unwrap();
        assert_eq!(temg_graph_load(missing.as_ptr(), ptr::null(), &mut g), TemgStatus::Io);
        assert!(g.is_null());
        assert!(last_error().contains("/definitely/not/here.csv"));

        assert_eq!(temg_graph_load(ptr::null(), ptr::null(), &mut g), TemgStatus::NullPointer);
        let mut n = 0usize;
        assert_eq!(temg_graph_num_nodes(ptr::null(), &mut n), TemgStatus::NullPointer);

        let src = [0u32];
        let dst = [5u32];
        let time = [0i64];
        let amount = [1.0f64];
        let st = temg_graph_from_edges(2, src.as_ptr(), dst.as_ptr(), time.as_ptr(), amount.as_ptr(), 1, &mut g);
        assert_eq!(st, TemgStatus::OutOfRange);

        let tri = triangle();
        let mut counts = ptr::null_mut();
        // edge limit 1 is rejected by validation
        assert_eq!(temg_count_motifs(tri, 100, 1, -1, 1, &mut counts), TemgStatus::InvalidArgument);
        assert!(counts.is_null());
        temg_graph_free(tri);

        // a successful call clears the message
        assert_eq!(temg_graph_num_nodes(ptr::null(), &mut n), TemgStatus::NullPointer);
        let mut ap = 0.0;
        assert_eq!(temg_auc_prc([0.9, 0.8, 0.7].as_ptr(), [1u8, 0, 1].as_ptr(), 3, &mut ap), TemgStatus::Ok);
        assert!(temg_last_error().is_null());
        assert_eq!(ap, (1.0 + 2.0 / 3.0) / 2.0);
        assert_eq!(temg_auc_prc([0.9].as_ptr(), [1u8].as_ptr(), 1, &mut ap), TemgStatus::InvalidArgument);

        temg_graph_free(ptr::null_mut());
        temg_counts_free(ptr::null_mut());
        temg_model_free(ptr::null_mut());
    }
}

#[test]
fn load_csv_and_score_with_checkpoint() {
    use temg::gnn::{save_checkpoint, Checkpoint, ModelConfig, ModelParams};

    let dir = tempfile::tempdir().unwrap();
    let tx = dir.path().join("tx.csv");
    let labels = dir.path().join("labels.csv");
    std::fs::write(&tx, "src,dst,time,amount\na,b,1,5\nb,c,2,3\nc,a,3,1\na,c,9,2\n").unwrap();
    std::fs::write(&labels, "address,label\na,1\nb,0\nd,0\n").unwrap();
    let cfg = ModelConfig { hidden: 8, ..ModelConfig::default() };
    let ck = Checkpoint { config: cfg.clone(), provenance: "test".into(), params: ModelParams::init(&cfg, 3).unwrap() };
    let model_path = dir.path().join("m.ckpt");
    save_checkpoint(&model_path, &ck).unwrap();

    unsafe {
        let (tx_c, lb_c, m_c) = (
            CString::new(tx.to_str().unwrap()).unwrap(),
            CString::new(labels.to_str().unwrap()).unwrap(),
            CString::new(model_path.to_str().unwrap()).unwrap(),
        );
        let mut g = ptr::null_mut();
        assert_eq!(temg_graph_load(tx_c.as_ptr(), lb_c.as_ptr(), &mut g), TemgStatus::Ok);
        let (mut n, mut m) = (0usize, 0usize);
        temg_graph_num_nodes(g, &mut n);
        temg_graph_num_edges(g, &mut m);
        assert_eq!((n, m), (4, 4));
        let mut lab = [0i8; 4];
        assert_eq!(temg_graph_labels(g, lab.as_mut_ptr(), 4), TemgStatus::Ok);
        assert_eq!(lab, [1, 0, -1, 0]);

        let mut counts = ptr::null_mut();
        assert_eq!(temg_count_motifs(g, 3600, 100, 3600, 0, &mut counts), TemgStatus::Ok);
        let mut model = ptr::null_mut();
        assert_eq!(temg_model_load(m_c.as_ptr(), &mut model), TemgStatus::Ok);
        let mut scores = [0.0f64; 4];
        assert_eq!(temg_model_score(model, g, counts, scores.as_mut_ptr(), 4), TemgStatus::Ok);
        assert!(scores.iter().all(|s| (0.0..=1.0).contains(s)));
        let mut again = [0.0f64; 4];
        temg_model_score(model, g, counts, again.as_mut_ptr(), 4);
        assert_eq!(scores, again);
        assert_eq!(temg_model_score(model, g, counts, scores.as_mut_ptr(), 3), TemgStatus::OutOfRange);

        let bad = CString::new(tx.to_str().unwrap()).unwrap();
        let mut junk = ptr::null_mut();
        assert_eq!(temg_model_load(bad.as_ptr(), &mut junk), TemgStatus::Parse);

        temg_model_free(model);
        temg_counts_free(counts);
        temg_graph_free(g);
    }
}

//! C ABI over the `temg` library.
//!
//! Objects cross the boundary as opaque handles created by `*_load`/`*_new`
//! functions and released by the matching `*_free`. Every fallible call
//! returns a [`TemgStatus`]; on failure a message for the calling thread is
//! available from [`temg_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use temg::gnn::{forward, load_checkpoint, sigmoid, Checkpoint, DropoutMode, GnnError, ModelInputs};
use temg::graph::{
    build_sorted_stream, load_labels, load_transactions, message_graph, ColumnSchema, GraphError, NodeIndex,
    TemporalGraph,
};
use temg::metrics::auc_prc;
use temg::motif::{
    count_motifs, count_motifs_bruteforce, enumerate_taxonomy, MotifCountMatrix, MotifError, MotifMatchConfig,
    MOTIF_COLUMNS, NUM_MOTIFS, NUM_ROLES,
};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TemgStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Parse = 4,
    InvalidArgument = 5,
    OutOfRange = 6,
    Numeric = 7,
    Panic = 8,
}

/// Temporal transaction graph.
pub struct TemgGraph(TemporalGraph);

/// N x 108 motif-role count matrix.
pub struct TemgCounts(MotifCountMatrix);

/// Trained or adapted classifier checkpoint.
pub struct TemgModel(Checkpoint);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

struct Failure(TemgStatus, String);

impl From<GraphError> for Failure {
    fn from(e: GraphError) -> Self {
        let status = match e {
            GraphError::Io { .. } => TemgStatus::Io,
            GraphError::Invariant(_) | GraphError::BadRatios(_) | GraphError::TooFewLabeled { .. } => {
                TemgStatus::InvalidArgument
            }
            _ => TemgStatus::Parse,
        };
        Failure(status, e.to_string())
    }
}

impl From<MotifError> for Failure {
    fn from(e: MotifError) -> Self {
        Failure(TemgStatus::InvalidArgument, e.to_string())
    }
}

impl From<GnnError> for Failure {
    fn from(e: GnnError) -> Self {
        let status = match e {
            GnnError::Io(_) => TemgStatus::Io,
            GnnError::Checkpoint(_) => TemgStatus::Parse,
            GnnError::NonFinite { .. } | GnnError::Divergence { .. } => TemgStatus::Numeric,
            _ => TemgStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

/// Runs `f`, records its error, and turns panics into `TEMG_STATUS_PANIC`.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> TemgStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => TemgStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            TemgStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(TemgStatus::NullPointer, format!("{what} is null"))
}

unsafe fn path_arg<'a>(p: *const c_char, what: &str) -> Result<&'a Path, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(TemgStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))?;
    Ok(Path::new(s))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

/// Message for the last failed call on this thread, or NULL. The pointer
/// stays valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn temg_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn temg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Number of motif classes (36).
#[no_mangle]
pub extern "C" fn temg_num_motifs() -> usize {
    NUM_MOTIFS
}

/// Columns per node in a count matrix (108).
#[no_mangle]
pub extern "C" fn temg_count_columns() -> usize {
    MOTIF_COLUMNS
}

/// Loads a `src,dst,time,amount` CSV and, when `labels_path` is not NULL,
/// an `address,label` CSV.
///
/// # Safety
/// Paths must be NUL-terminated strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn temg_graph_load(
    tx_path: *const c_char,
    labels_path: *const c_char,
    out: *mut *mut TemgGraph,
) -> TemgStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let raw = load_transactions(path_arg(tx_path, "tx_path")?, &ColumnSchema::default())?;
        let mut graph = TemporalGraph::from_raw(raw)?;
        if !labels_path.is_null() {
            graph.attach_labels(&load_labels(path_arg(labels_path, "labels_path")?)?)?;
        }
        *out = Box::into_raw(Box::new(TemgGraph(graph)));
        Ok(())
    })
}

/// Builds a graph over nodes `0..num_nodes` from parallel edge arrays.
/// Node `i` gets the address `"i"`. Self-transfers are dropped.
///
/// # Safety
/// Each array must hold `num_edges` elements; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn temg_graph_from_edges(
    num_nodes: u32,
    src: *const u32,
    dst: *const u32,
    time: *const i64,
    amount: *const f64,
    num_edges: usize,
    out: *mut *mut TemgGraph,
) -> TemgStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let (src, dst) = (slice_arg(src, num_edges, "src")?, slice_arg(dst, num_edges, "dst")?);
        let (time, amount) = (slice_arg(time, num_edges, "time")?, slice_arg(amount, num_edges, "amount")?);
        let mut ids = NodeIndex::new();
        for v in 0..num_nodes {
            ids.intern(&v.to_string());
        }
        let mut rows = Vec::with_capacity(num_edges);
        for i in 0..num_edges {
            if src[i] >= num_nodes || dst[i] >= num_nodes {
                return Err(Failure(TemgStatus::OutOfRange, format!("edge {i} references a node >= {num_nodes}")));
            }
            if !(amount[i].is_finite() && amount[i] >= 0.0) {
                return Err(Failure(TemgStatus::InvalidArgument, format!("edge {i}: amount must be finite and >= 0")));
            }
            rows.push((src[i], dst[i], time[i], amount[i]));
        }
        let (edges, _) = build_sorted_stream(rows);
        *out = Box::into_raw(Box::new(TemgGraph(TemporalGraph::new(ids, edges)?)));
        Ok(())
    })
}

/// # Safety
/// `graph` must come from this library or be NULL.
#[no_mangle]
pub unsafe extern "C" fn temg_graph_free(graph: *mut TemgGraph) {
    if !graph.is_null() {
        drop(Box::from_raw(graph));
    }
}

/// # Safety
/// `graph` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn temg_graph_num_nodes(graph: *const TemgGraph, out: *mut usize) -> TemgStatus {
    guard(|| {
        *out_arg(out, "out")? = handle(graph, "graph")?.0.num_nodes;
        Ok(())
    })
}

/// # Safety
/// `graph` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn temg_graph_num_edges(graph: *const TemgGraph, out: *mut usize) -> TemgStatus {
    guard(|| {
        *out_arg(out, "out")? = handle(graph, "graph")?.0.edges.len();
        Ok(())
    })
}

/// Copies node labels into `out` (`-1` unknown, `0` benign, `1` anomalous).
///
/// # Safety
/// `out` must hold `len` elements and `len` must equal the node count.
#[no_mangle]
pub unsafe extern "C" fn temg_graph_labels(graph: *const TemgGraph, out: *mut i8, len: usize) -> TemgStatus {
    guard(|| {
        let g = &handle(graph, "graph")?.0;
        if len != g.num_nodes {
            return Err(Failure(TemgStatus::OutOfRange, format!("buffer holds {len}, graph has {} nodes", g.num_nodes)));
        }
        if out.is_null() && len > 0 {
            return Err(null("out"));
        }
        for (i, l) in g.labels.iter().enumerate() {
            *out.add(i) = l.map_or(-1, i8::from);
        }
        Ok(())
    })
}

fn match_config(window: i64, edge_limit: usize, aggregation: i64) -> MotifMatchConfig {
    MotifMatchConfig {
        window,
        edge_limit: (edge_limit > 0).then_some(edge_limit),
        aggregation: (aggregation >= 0).then_some(aggregation),
        ..MotifMatchConfig::default()
    }
}

/// Counts motif roles. `edge_limit == 0` means unlimited; a negative
/// `aggregation` disables merging. `threads == 0` uses every core.
///
/// # Safety
/// `graph` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn temg_count_motifs(
    graph: *const TemgGraph,
    window: i64,
    edge_limit: usize,
    aggregation: i64,
    threads: usize,
    out: *mut *mut TemgCounts,
) -> TemgStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let g = &handle(graph, "graph")?.0;
        let cfg = match_config(window, edge_limit, aggregation);
        let pool = rayon_pool(threads)?;
        let counts = pool.install(|| count_motifs(g, &cfg, &enumerate_taxonomy()))?;
        *out = Box::into_raw(Box::new(TemgCounts(counts)));
        Ok(())
    })
}

fn rayon_pool(threads: usize) -> Result<rayon::ThreadPool, Failure> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Failure(TemgStatus::InvalidArgument, format!("thread pool: {e}")))
}

/// Exhaustive reference counter (no edge limit, small graphs only).
///
/// # Safety
/// `graph` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn temg_count_motifs_bruteforce(
    graph: *const TemgGraph,
    window: i64,
    aggregation: i64,
    out: *mut *mut TemgCounts,
) -> TemgStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let g = &handle(graph, "graph")?.0;
        let counts = count_motifs_bruteforce(g, &match_config(window, 0, aggregation), &enumerate_taxonomy())?;
        *out = Box::into_raw(Box::new(TemgCounts(counts)));
        Ok(())
    })
}

/// # Safety
/// `counts` must come from this library or be NULL.
#[no_mangle]
pub unsafe extern "C" fn temg_counts_free(counts: *mut TemgCounts) {
    if !counts.is_null() {
        drop(Box::from_raw(counts));
    }
}

/// # Safety
/// `counts` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn temg_counts_num_nodes(counts: *const TemgCounts, out: *mut usize) -> TemgStatus {
    guard(|| {
        *out_arg(out, "out")? = handle(counts, "counts")?.0.num_nodes();
        Ok(())
    })
}

/// Count of `node` in role `role` of motif `motif`.
///
/// # Safety
/// `counts` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn temg_counts_get(
    counts: *const TemgCounts,
    node: usize,
    motif: usize,
    role: usize,
    out: *mut u64,
) -> TemgStatus {
    guard(|| {
        let c = &handle(counts, "counts")?.0;
        if node >= c.num_nodes() || motif >= NUM_MOTIFS || role >= NUM_ROLES {
            return Err(Failure(TemgStatus::OutOfRange, format!("index ({node}, {motif}, {role}) out of range")));
        }
        *out_arg(out, "out")? = c.get(node, motif, role);
        Ok(())
    })
}

/// Copies the row-major N x 108 matrix into `out`.
///
/// # Safety
/// `out` must hold `len` elements; `len` must be `N * 108`.
#[no_mangle]
pub unsafe extern "C" fn temg_counts_copy(counts: *const TemgCounts, out: *mut u64, len: usize) -> TemgStatus {
    guard(|| {
        let src = handle(counts, "counts")?.0.as_slice();
        if len != src.len() {
            return Err(Failure(TemgStatus::OutOfRange, format!("buffer holds {len}, matrix has {}", src.len())));
        }
        if len > 0 {
            if out.is_null() {
                return Err(null("out"));
            }
            ptr::copy_nonoverlapping(src.as_ptr(), out, len);
        }
        Ok(())
    })
}

/// Loads a checkpoint written by `temg train` or `temg tta`.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn temg_model_load(path: *const c_char, out: *mut *mut TemgModel) -> TemgStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let ck = load_checkpoint(path_arg(path, "path")?, None)?;
        *out = Box::into_raw(Box::new(TemgModel(ck)));
        Ok(())
    })
}

/// # Safety
/// `model` must come from this library or be NULL.
#[no_mangle]
pub unsafe extern "C" fn temg_model_free(model: *mut TemgModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Anomaly probabilities for every node of `graph`.
///
/// # Safety
/// Handles must be live; `out` must hold `len` = node-count elements.
#[no_mangle]
pub unsafe extern "C" fn temg_model_score(
    model: *const TemgModel,
    graph: *const TemgGraph,
    counts: *const TemgCounts,
    out: *mut f64,
    len: usize,
) -> TemgStatus {
    guard(|| {
        let ck = &handle(model, "model")?.0;
        let g = &handle(graph, "graph")?.0;
        let c = &handle(counts, "counts")?.0;
        if len != g.num_nodes {
            return Err(Failure(TemgStatus::OutOfRange, format!("buffer holds {len}, graph has {} nodes", g.num_nodes)));
        }
        if c.num_nodes() != g.num_nodes {
            return Err(Failure(TemgStatus::InvalidArgument, "counts and graph differ in node count".into()));
        }
        if ck.config.in_dim != g.features.ncols() {
            return Err(Failure(
                TemgStatus::InvalidArgument,
                format!("model expects {} features, graph has {}", ck.config.in_dim, g.features.ncols()),
            ));
        }
        let inputs = ModelInputs::from_graph(g, c, &ck.config)?;
        let logits = forward(&ck.params, &ck.config, &inputs, &message_graph(g), DropoutMode::Eval)?.logits;
        if len > 0 {
            if out.is_null() {
                return Err(null("out"));
            }
            for (i, z) in logits.iter().enumerate() {
                *out.add(i) = sigmoid(*z);
            }
        }
        Ok(())
    })
}

/// Average precision of `scores` against 0/1 `labels`.
///
/// # Safety
/// Both arrays must hold `len` elements; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn temg_auc_prc(scores: *const f64, labels: *const u8, len: usize, out: *mut f64) -> TemgStatus {
    guard(|| {
        let s = slice_arg(scores, len, "scores")?;
        let l: Vec<bool> = slice_arg(labels, len, "labels")?.iter().map(|&y| y != 0).collect();
        *out_arg(out, "out")? = auc_prc(s, &l).map_err(|e| Failure(TemgStatus::InvalidArgument, e.to_string()))?;
        Ok(())
    })
}

//! C interface to the workflow codec and validator.
//!
//! Registries and graphs are opaque handles owned by the caller and
//! released with their `_free` function. Every fallible call returns an
//! [`FsStatus`]; on failure [`fs_last_error`] describes the problem.
//! Strings handed out by the library are freed with [`fs_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use flowsmith::codec::{emit_code, lower, parse_code};
use flowsmith::graph::{parse_prompt_json, serialize_prompt_json, validate, WorkflowGraph};
use flowsmith::schema::{ingest_docs, NodeSchemaRegistry};

/// Result of a call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FsStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Registry = 3,
    Parse = 4,
    Invalid = 5,
    Panic = 6,
}

/// Node schema registry.
pub struct FsRegistry(NodeSchemaRegistry);

/// Workflow graph.
pub struct FsGraph(WorkflowGraph);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: impl Into<String>) {
    let text = message.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

struct Failure(FsStatus, String);

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> FsStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => FsStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_error(message);
            status
        }
        Err(_) => {
            set_error("internal error");
            FsStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(FsStatus::NullArgument, format!("{what} is null"))
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(FsStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

fn out_string(out: *mut *mut c_char, s: String) -> Result<(), Failure> {
    let s = CString::new(s).map_err(|_| Failure(FsStatus::Invalid, "output contains a NUL byte".into()))?;
    unsafe { *out = s.into_raw() };
    Ok(())
}

/// Message for the last failed call on this thread, or NULL. Valid until
/// the next call on the same thread.
#[no_mangle]
pub extern "C" fn fs_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn fs_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Load node docs from the directory `path`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn fs_registry_open(path: *const c_char, out: *mut *mut FsRegistry) -> FsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let path = text(path, "path")?;
        let registry = ingest_docs(Path::new(path)).map_err(|e| Failure(FsStatus::Registry, e.to_string()))?;
        *out = Box::into_raw(Box::new(FsRegistry(registry)));
        Ok(())
    })
}

/// Number of node classes, 0 for NULL.
///
/// # Safety
/// `registry` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fs_registry_len(registry: *const FsRegistry) -> usize {
    registry.as_ref().map_or(0, |r| r.0.len())
}

/// # Safety
/// `registry` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fs_registry_free(registry: *mut FsRegistry) {
    if !registry.is_null() {
        drop(Box::from_raw(registry));
    }
}

/// Parse prompt JSON of `len` bytes.
///
/// # Safety
/// `json` must point to `len` readable bytes and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn fs_graph_from_json(json: *const u8, len: usize, out: *mut *mut FsGraph) -> FsStatus {
    guard(|| {
        if json.is_null() {
            return Err(null("json"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let bytes = std::slice::from_raw_parts(json, len);
        let graph = parse_prompt_json(bytes).map_err(|e| Failure(FsStatus::Parse, e.to_string()))?;
        *out = Box::into_raw(Box::new(FsGraph(graph)));
        Ok(())
    })
}

/// Parse and lower workflow code.
///
/// # Safety
/// `registry` must be a live handle, `code` NUL-terminated and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn fs_graph_from_code(
    registry: *const FsRegistry,
    code: *const c_char,
    out: *mut *mut FsGraph,
) -> FsStatus {
    guard(|| {
        let registry = handle(registry, "registry")?;
        let code = text(code, "code")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let script = parse_code(code).map_err(|e| Failure(FsStatus::Parse, e.to_string()))?;
        let graph = lower(&script, &registry.0).map_err(|e| Failure(FsStatus::Invalid, e.to_string()))?;
        *out = Box::into_raw(Box::new(FsGraph(graph)));
        Ok(())
    })
}

/// Number of nodes, 0 for NULL.
///
/// # Safety
/// `graph` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fs_graph_node_count(graph: *const FsGraph) -> usize {
    graph.as_ref().map_or(0, |g| g.0.len())
}

/// # Safety
/// `graph` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fs_graph_free(graph: *mut FsGraph) {
    if !graph.is_null() {
        drop(Box::from_raw(graph));
    }
}

/// Canonical code for a valid graph. Free the result with [`fs_string_free`].
///
/// # Safety
/// Both handles must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn fs_graph_to_code(
    registry: *const FsRegistry,
    graph: *const FsGraph,
    out: *mut *mut c_char,
) -> FsStatus {
    guard(|| {
        let registry = handle(registry, "registry")?;
        let graph = handle(graph, "graph")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let code = emit_code(&graph.0, &registry.0).map_err(|e| Failure(FsStatus::Invalid, e.to_string()))?;
        out_string(out, code)
    })
}

/// Prompt JSON. Free the result with [`fs_string_free`].
///
/// # Safety
/// `graph` must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn fs_graph_to_json(graph: *const FsGraph, out: *mut *mut c_char) -> FsStatus {
    guard(|| {
        let graph = handle(graph, "graph")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let json = String::from_utf8(serialize_prompt_json(&graph.0)).expect("prompt JSON is UTF-8");
        out_string(out, json)
    })
}

/// Validate `graph`. Stores the error count in `errors` and, when `report`
/// is not NULL, the printed report there. Returns `FS_STATUS_INVALID` when
/// there are errors.
///
/// # Safety
/// Both handles must be live, `errors` writable and `report` NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn fs_graph_validate(
    registry: *const FsRegistry,
    graph: *const FsGraph,
    errors: *mut usize,
    report: *mut *mut c_char,
) -> FsStatus {
    guard(|| {
        let registry = handle(registry, "registry")?;
        let graph = handle(graph, "graph")?;
        if errors.is_null() {
            return Err(null("errors"));
        }
        let result = validate(&graph.0, &registry.0);
        *errors = result.error_count();
        if !report.is_null() {
            out_string(report, result.to_string())?;
        }
        match result.error_count() {
            0 => Ok(()),
            n => Err(Failure(FsStatus::Invalid, format!("{n} validation error(s)"))),
        }
    })
}

/// # Safety
/// `s` must be NULL or a string returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fs_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

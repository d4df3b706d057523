use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use flowsmith_ffi::*;

fn registry_dir() -> CString {
    CString::new(Path::new(flowsmith::DATA_DIR).join("nodes").to_str().unwrap()).unwrap()
}

fn workflow(name: &str) -> PathBuf {
    Path::new(flowsmith::DATA_DIR).join("curriculum").join(name)
}

fn last_error() -> String {
    let p = fs_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn open() -> *mut FsRegistry {
    let mut registry = ptr::null_mut();
    assert_eq!(unsafe { fs_registry_open(registry_dir().as_ptr(), &mut registry) }, FsStatus::Ok);
    registry
}

#[test]
fn round_trip_through_handles() {
    let registry = open();
    assert!(unsafe { fs_registry_len(registry) } > 0);
    let bytes = std::fs::read(workflow("hires_fix.json")).unwrap();
    let mut graph = ptr::null_mut();
    unsafe {
        assert_eq!(fs_graph_from_json(bytes.as_ptr(), bytes.len(), &mut graph), FsStatus::Ok);
        let mut code = ptr::null_mut();
        assert_eq!(fs_graph_to_code(registry, graph, &mut code), FsStatus::Ok);
        let mut back = ptr::null_mut();
        assert_eq!(fs_graph_from_code(registry, code, &mut back), FsStatus::Ok);
        assert_eq!(fs_graph_node_count(back), fs_graph_node_count(graph));

        let mut errors = usize::MAX;
        let mut report = ptr::null_mut();
        assert_eq!(fs_graph_validate(registry, back, &mut errors, &mut report), FsStatus::Ok);
        assert_eq!(errors, 0);
        assert_eq!(CStr::from_ptr(report).to_str().unwrap(), "0 errors");

        let mut json = ptr::null_mut();
        assert_eq!(fs_graph_to_json(back, &mut json), FsStatus::Ok);
        let expected = flowsmith::graph::serialize_prompt_json(
            &flowsmith::graph::parse_prompt_json(&bytes).unwrap(),
        );
        assert_eq!(CStr::from_ptr(json).to_bytes(), &expected[..]);

        for s in [code, report, json] {
            fs_string_free(s);
        }
        fs_graph_free(back);
        fs_graph_free(graph);
        fs_registry_free(registry);
    }
}

#[test]
fn failures_set_status_and_message() {
    let registry = open();
    unsafe {
        let mut graph = ptr::null_mut();
        let bad = b"{\"1\": ";
        assert_eq!(fs_graph_from_json(bad.as_ptr(), bad.len(), &mut graph), FsStatus::Parse);
        assert!(graph.is_null());
        assert!(!last_error().is_empty());

        let code = CString::new("x = = 1").unwrap();
        assert_eq!(fs_graph_from_code(registry, code.as_ptr(), &mut graph), FsStatus::Parse);

        let json = br#"{"1": {"class_type": "NoSuchNode", "inputs": {}}}"#;
        assert_eq!(fs_graph_from_json(json.as_ptr(), json.len(), &mut graph), FsStatus::Ok);
        let mut errors = 0;
        assert_eq!(fs_graph_validate(registry, graph, &mut errors, ptr::null_mut()), FsStatus::Invalid);
        assert_eq!(errors, 1);
        let mut out = ptr::null_mut();
        assert_eq!(fs_graph_to_code(registry, graph, &mut out), FsStatus::Invalid);
        assert!(last_error().contains("NoSuchNode"));
        assert!(out.is_null());

        assert_eq!(fs_graph_to_json(ptr::null(), &mut out), FsStatus::NullArgument);
        assert_eq!(fs_registry_open(ptr::null(), &mut ptr::null_mut()), FsStatus::NullArgument);
        let missing = CString::new("/no/such/registry").unwrap();
        assert_eq!(fs_registry_open(missing.as_ptr(), &mut ptr::null_mut()), FsStatus::Registry);
        let not_utf8 = CString::new(vec![0xff, 0xfe]).unwrap();
        assert_eq!(fs_registry_open(not_utf8.as_ptr(), &mut ptr::null_mut()), FsStatus::InvalidUtf8);

        // a successful call clears the message
        assert_eq!(fs_graph_to_json(graph, &mut out), FsStatus::Ok);
        assert!(fs_last_error().is_null());
        fs_string_free(out);

        fs_graph_free(graph);
        fs_registry_free(registry);
        fs_graph_free(ptr::null_mut());
        fs_registry_free(ptr::null_mut());
        fs_string_free(ptr::null_mut());
        assert_eq!(fs_graph_node_count(ptr::null()), 0);
    }
}

#[test]
fn header_matches_exports() {
    let header = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("include/flowsmith.h")).unwrap();
    for name in [
        "fs_last_error",
        "fs_version",
        "fs_registry_open",
        "fs_registry_len",
        "fs_registry_free",
        "fs_graph_from_json",
        "fs_graph_from_code",
        "fs_graph_node_count",
        "fs_graph_free",
        "fs_graph_to_code",
        "fs_graph_to_json",
        "fs_graph_validate",
        "fs_string_free",
    ] {
        assert!(header.contains(&format!("{name}(")), "{name} missing from header");
    }
    assert!(header.contains("typedef struct FsGraph FsGraph;"));
    assert!(header.contains("FS_STATUS_INVALID = 5"));
    let version = unsafe { CStr::from_ptr(fs_version()) }.to_str().unwrap();
    assert_eq!(version, env!("CARGO_PKG_VERSION"));
}

/// Compile a C program against the header and the static library.
#[test]
fn c_program_links_and_runs() {
    let manifest = Path::new(env!("CARGO_MANIFEST_DIR"));
    let target = std::env::current_exe().unwrap().parent().unwrap().parent().unwrap().to_path_buf();
    let lib = target.join("libflowsmith_ffi.a");
    assert!(lib.is_file(), "{} was not built", lib.display());
    let dir = tempfile::tempdir().unwrap();
    let exe = dir.path().join("smoke");
    let status = Command::new("cc")
        .arg(manifest.join("tests/c/smoke.c"))
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .expect("a C compiler is installed");
    assert!(status.success());
    let out = Command::new(&exe)
        .arg(registry_dir().to_str().unwrap())
        .arg(workflow("inpainting.json"))
        .output()
        .unwrap();
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{stdout}{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout.contains("errors=0 status=0"), "{stdout}");
    assert!(stdout.contains("last error set: 1"));
}

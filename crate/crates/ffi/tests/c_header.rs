//! Compiles and runs a small C program against the generated header and the
//! built shared library.

use std::path::{Path, PathBuf};
use std::process::Command;

const PROGRAM: &str = r#"
#include <stdio.h>
#include "temg.h"

int main(void) {
    uint32_t src[3] = {0, 1, 2};
    uint32_t dst[3] = {1, 2, 0};
    int64_t t[3] = {1, 2, 3};
    double amt[3] = {1.0, 1.0, 1.0};
    TemgGraph *g = NULL;
    TemgCounts *c = NULL;
    uint64_t buf[3 * 108];
    uint64_t total = 0;
    size_t i;
    if (temg_graph_from_edges(3, src, dst, t, amt, 3, &g) != TEMG_STATUS_OK) return 1;
    if (temg_count_motifs(g, 10, 0, -1, 1, &c) != TEMG_STATUS_OK) return 2;
    if (temg_counts_copy(c, buf, 3 * 108) != TEMG_STATUS_OK) return 3;
    for (i = 0; i < 3 * 108; i++) total += buf[i];
    if (temg_graph_load("/no/such/file.csv", NULL, &g) != TEMG_STATUS_IO) return 4;
    printf("%llu %s\n", (unsigned long long)total, temg_last_error());
    temg_counts_free(c);
    return temg_num_motifs() == 36 ? 0 : 5;
}
"#;

fn header_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("include")
}

/// `target/<profile>` from the test executable at `target/<profile>/deps/*`.
fn profile_dir() -> PathBuf {
    let exe = std::env::current_exe().unwrap();
    exe.parent().and_then(Path::parent).unwrap().to_path_buf()
}

#[test]
fn header_compiles_and_links() {
    let dir = tempfile::tempdir().unwrap();
    let c_file = dir.path().join("main.c");
    std::fs::write(&c_file, PROGRAM).unwrap();
    let header = header_dir();
    assert!(header.join("temg.h").is_file());

    let syntax = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(&header)
        .arg(&c_file)
        .output()
        .expect("C compiler available");
    assert!(syntax.status.success(), "{}", String::from_utf8_lossy(&syntax.stderr));

    let lib_dir = profile_dir();
    assert!(lib_dir.join("libtemg_ffi.so").is_file(), "cdylib missing in {}", lib_dir.display());
    let exe = dir.path().join("main");
    let build = Command::new("cc")
        .args(["-std=c99", "-I"])
        .arg(&header)
        .arg(&c_file)
        .arg("-L")
        .arg(&lib_dir)
        .args(["-ltemg_ffi", "-o"])
        .arg(&exe)
        .output()
        .unwrap();
    assert!(build.status.success(), "{}", String::from_utf8_lossy(&build.stderr));
    let run = Command::new(&exe).env("LD_LIBRARY_PATH", &lib_dir).output().unwrap();
    assert!(run.status.success(), "exit {:?}", run.status.code());
    let stdout = String::from_utf8_lossy(&run.stdout);
    assert!(stdout.starts_with("3 "), "{stdout}");
    assert!(stdout.contains("/no/such/file.csv"), "{stdout}");
}

use std::path::PathBuf;
use std::process::Command;

const PROGRAM: &str = r#"
#include <stdio.h>
#include "mfg.h"
int main(void) {
    MfgGrid *g = NULL;
    if (mfg_grid_new(2, 7, 0, 1.0, NULL, NULL, &g) != MFG_STATUS_OK) return 1;
    size_t n = mfg_grid_npts(g);
    mfg_grid_free(g);
    if (mfg_grid_new(9, 7, 0, 1.0, NULL, NULL, &g) != MFG_STATUS_INVALID_INPUT) return 2;
    char msg[128];
    if (mfg_last_error(msg, sizeof msg) == 0) return 3;
    printf("%zu\n", n);
    return 0;
}
"#;

fn compiler() -> Option<String> {
    ["cc", "gcc", "clang"]
        .into_iter()
        .find(|c| Command::new(c).arg("--version").output().is_ok_and(|o| o.status.success()))
        .map(String::from)
}

#[test]
fn header_declares_the_api() {
    let h = std::fs::read_to_string(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include/mfg.h")).unwrap();
    for f in ["mfg_grid_new", "mfg_grid_free", "mfg_baseline_new", "mfg_remainder_decay", "mfg_run", "mfg_last_error"] {
        assert!(h.contains(f), "{f}");
    }
    assert!(h.contains("typedef struct MfgGrid MfgGrid;"));
}

#[test]
fn c_program_links_against_the_static_library() {
    let Some(cc) = compiler() else {
        eprintln!("no C compiler found; link test not run");
        return;
    };
    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let tmp = PathBuf::from(env!("CARGO_TARGET_TMPDIR"));
    // target/<profile>/ holds the library artefacts of this build.
    let libdir = tmp.parent().unwrap().join(if cfg!(debug_assertions) { "debug" } else { "release" });
    let lib = libdir.join("libmfg_ffi.a");
    assert!(lib.exists(), "{} missing", lib.display());
    let src = tmp.join("mfg_smoke.c");
    let exe = tmp.join("mfg_smoke");
    std::fs::write(&src, PROGRAM).unwrap();
    let out = Command::new(&cc)
        .arg(&src)
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let run = Command::new(&exe).output().unwrap();
    assert!(run.status.success(), "exit {:?}", run.status.code());
    assert_eq!(String::from_utf8_lossy(&run.stdout).trim(), "81");
}

//! Compile and run a C program against the generated header and static library.

use std::path::{Path, PathBuf};
use std::process::Command;

const PROGRAM: &str = r#"
#include <math.h>
#include <stdio.h>
#include "qlab.h"

int main(void) {
    double v = 0.0;
    if (qlab_q_log(0.25, 0.5, &v) != QLAB_STATUS_OK || fabs(v + 1.0) > 1e-15) return 1;
    if (qlab_q_log(0.5, 2.0, &v) != QLAB_STATUS_INVALID_ARGUMENT || qlab_last_error() == NULL) return 2;
    size_t dims[5] = {1, 2, 2, 2, 2};
    QlabModel *m = NULL;
    if (qlab_model_random(dims, 1.0, 3, &m) != QLAB_STATUS_OK) return 3;
    size_t target[2] = {1, 0};
    QlabPool *p = NULL;
    if (qlab_pool_sample(m, 0, target, 2, 8, 1, &p) != QLAB_STATUS_OK) return 4;
    double g[64];
    size_t len = 0;
    if (qlab_garl_rloo(p, 0.5, true, g, 64, &len) != QLAB_STATUS_OK || len == 0) return 5;
    qlab_pool_free(p);
    qlab_model_free(m);
    printf("ok %s\n", qlab_version());
    return 0;
}
"#;

fn target_dir() -> PathBuf {
    // CARGO_TARGET_TMPDIR is <target>/tmp
    Path::new(env!("CARGO_TARGET_TMPDIR"))
        .parent()
        .unwrap()
        .to_path_buf()
}

#[test]
fn c_program_links_and_runs() {
    let Ok(cc) = which_cc() else {
        eprintln!("no C compiler found; skipping");
        return;
    };
    let lib = target_dir().join(if cfg!(debug_assertions) {
        "debug"
    } else {
        "release"
    });
    assert!(
        lib.join("libqlab_ffi.a").exists(),
        "static library missing in {}",
        lib.display()
    );
    let work = tempfile::tempdir().unwrap();
    let src = work.path().join("main.c");
    std::fs::write(&src, PROGRAM).unwrap();
    let exe = work.path().join("main");
    let include = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    let status = Command::new(cc)
        .arg("-std=c99")
        .arg("-Wall")
        .arg("-Werror")
        .arg(&src)
        .arg("-I")
        .arg(&include)
        .arg(lib.join("libqlab_ffi.a"))
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success());
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "exit {:?}", out.status.code());
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("ok "));
}

fn which_cc() -> Result<&'static str, ()> {
    ["cc", "gcc", "clang"]
        .into_iter()
        .find(|c| {
            Command::new(c)
                .arg("--version")
                .output()
                .is_ok_and(|o| o.status.success())
        })
        .ok_or(())
}

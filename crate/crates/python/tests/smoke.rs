use std::path::PathBuf;
use std::process::Command;

/// Runs python/smoke_test.py against the extension built for this test run.
#[test]
fn python_smoke_test() {
    let deps = std::env::current_exe().unwrap().parent().unwrap().to_path_buf();
    let lib = [deps.join("../libbiassim_py.so"), deps.join("libbiassim_py.so")].into_iter().find(|p| p.is_file());
    let Some(lib) = lib else {
        panic!("extension module not found next to {}", deps.display());
    };
    let script = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../python/smoke_test.py");
    let out = Command::new("python3").arg(&script).env("BIASSIM_PY_LIB", &lib).output().expect("python3 runs");
    assert!(
        out.status.success(),
        "stdout:\n{}\nstderr:\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(String::from_utf8_lossy(&out.stdout).contains("python smoke test passed"));
}

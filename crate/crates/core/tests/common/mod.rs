//! Helpers shared by the integration test targets.
#![allow(dead_code)]

use std::panic::{catch_unwind, resume_unwind, UnwindSafe};
use std::path::{Path, PathBuf};

/// Run one acceptance criterion and print a single checklist line for it.
/// Panics are re-raised afterwards so the harness still records the failure;
/// run with `--nocapture` to see the checklist.
pub fn criterion(number: u32, name: &str, body: impl FnOnce() + UnwindSafe) {
    let outcome = catch_unwind(body);
    let verdict = if outcome.is_ok() { "PASS" } else { "FAIL" };
    println!("criterion {number} ({name}): {verdict}");
    if let Err(panic) = outcome {
        resume_unwind(panic);
    }
}

/// Absolute path of a file relative to the workspace root.
pub fn workspace_path(relative: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(relative)
}

/// The bundled forty-page dump with hand-checked ground truth.
pub fn mini_dump() -> PathBuf {
    workspace_path("fixtures/mini_dump.xml")
}

/// The bundled demonstration token-vector table.
pub fn demo_embeddings() -> PathBuf {
    workspace_path("data/demo_embeddings.txt")
}

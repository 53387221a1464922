//! Report assembly and atomic output.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::run::Outcome;

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

/// The report holds the config, its hash over the canonical TOML form,
/// versions and hashes of every table; nothing time- or host-dependent.
pub fn build_report(config: &ExperimentConfig, outcome: &Outcome) -> Value {
    let canonical = config.emit();
    let outputs: Vec<Value> = outcome
        .tables
        .iter()
        .map(|(name, bytes)| json!({ "file": name, "bytes": bytes.len(), "sha256": sha256_hex(bytes) }))
        .collect();
    json!({
        "tool": "pbh",
        "tool_version": env!("CARGO_PKG_VERSION"),
        "core_version": pbh_core::VERSION,
        "kind": config.kind(),
        "seed": config.seed(),
        "config_sha256": sha256_hex(canonical.as_bytes()),
        "config": config,
        "result": outcome.result,
        "outputs": outputs,
    })
}

/// Writes through a temporary file in the target directory and renames it
/// into place, so readers never see a partial file.
pub fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> std::io::Result<PathBuf> {
    let target = dir.join(name);
    let tmp = dir.join(format!(".{name}.tmp-{}", std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, &target)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result.map(|_| target)
}

/// Tables first, the report last: a present `report.json` means a complete run.
pub fn emit(dir: &Path, config: &ExperimentConfig, outcome: &Outcome) -> std::io::Result<PathBuf> {
    fs::create_dir_all(dir)?;
    for (name, bytes) in &outcome.tables {
        write_atomic(dir, name, bytes)?;
    }
    let report = build_report(config, outcome);
    let mut text = serde_json::to_string_pretty(&report).map_err(std::io::Error::other)?;
    text.push('\n');
    write_atomic(dir, "report.json", text.as_bytes())
}

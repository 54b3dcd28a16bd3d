//! Run manifest: every subcommand records what it did under its `--out`
//! directory so a run can be audited and reproduced. The manifest is the one
//! output file that is allowed to differ between otherwise identical runs
//! (it carries a wall-clock timestamp).

use std::path::Path;

use serde::Serialize;

use crate::CliError;

/// Format versions of the on-disk artifacts this binary reads and writes.
/// Bumped alongside the corresponding readers/writers in the library.
#[derive(Serialize)]
pub struct FormatVersions {
    pub bundle: u32,
    pub registry: u32,
}

#[derive(Serialize)]
pub struct RunManifest {
    /// Subcommand name, e.g. `train`.
    pub command: String,
    /// Full argv the process was started with.
    pub invocation: Vec<String>,
    /// Resolved configuration after defaults and environment fallbacks.
    pub config: serde_json::Value,
    /// Input paths consumed by the run.
    pub inputs: Vec<String>,
    /// Output paths produced by the run (relative to `--out` where possible).
    pub outputs: Vec<String>,
    /// The seed governing every random draw in the run.
    pub seed: u64,
    /// Seconds since the Unix epoch at manifest write time.
    pub timestamp_unix: u64,
    /// Same instant as an RFC 3339 UTC string.
    pub timestamp_utc: String,
    pub format_versions: FormatVersions,
}

/// Convert a Unix timestamp to an RFC 3339 UTC string without pulling in a
/// calendar dependency (days-to-civil conversion, valid for all post-epoch
/// timestamps).
fn format_utc(unix: u64) -> String {
    let days = unix / 86_400;
    let secs_of_day = unix % 86_400;
    let (hh, mm, ss) = (secs_of_day / 3600, (secs_of_day % 3600) / 60, secs_of_day % 60);

    // Howard Hinnant's civil_from_days, specialized to non-negative days.
    let z = days as i64 + 719_468;
    let era = z / 146_097;
    let doe = z - era * 146_097;
    let yoe = (doe - doe / 1460 + doe / 36_524 - doe / 146_096) / 365;
    let y = yoe + era * 400;
    let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    let mp = (5 * doy + 2) / 153;
    let d = doy - (153 * mp + 2) / 5 + 1;
    let m = if mp < 10 { mp + 3 } else { mp - 9 };
    let y = if m <= 2 { y + 1 } else { y };

    format!("{y:04}-{m:02}-{d:02}T{hh:02}:{mm:02}:{ss:02}Z")
}

/// Write `run_manifest.json` under `out_dir`.
#[allow(clippy::too_many_arguments)]
pub fn write_run_manifest(
    out_dir: &Path,
    command: &str,
    invocation: &[String],
    config: serde_json::Value,
    inputs: Vec<String>,
    outputs: Vec<String>,
    seed: u64,
) -> Result<(), CliError> {
    let unix = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let manifest = RunManifest {
        command: command.to_string(),
        invocation: invocation.to_vec(),
        config,
        inputs,
        outputs,
        seed,
        timestamp_unix: unix,
        timestamp_utc: format_utc(unix),
        format_versions: FormatVersions {
            bundle: kahm::io::bundle::FORMAT_VERSION,
            registry: kahm::io::registry::FORMAT_VERSION,
        },
    };
    let text = serde_json::to_string_pretty(&manifest)?;
    std::fs::write(out_dir.join("run_manifest.json"), text + "\n")?;
    Ok(())
}

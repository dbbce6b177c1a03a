use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use super::config::ExperimentKind;
use super::run::ExperimentRecord;
use super::svg;
use crate::error::{Error, Result};
use crate::UNIT_SYSTEM;

pub const SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

fn protocol(kind: &ExperimentKind) -> &'static str {
    match kind {
        ExperimentKind::ToyRun(_) => "deviation under the toy matrix from t = 0 with (xi0, eta0)",
        ExperimentKind::TodaSweep(_) => {
            "per energy: ensemble members start at x = 0, p_y = 0, y drawn uniformly over the \
             accessible range (ChaCha8 seeded with rng_seed, stream = grid index), p_x > 0 from the \
             energy; max_product and cumulative_product are maxima over members"
        }
        ExperimentKind::TodaPoincare(_) => {
            "orbits start at x = 0, p_y = 0, evenly spaced interior y, p_x > 0; crossings of \
             x = 0 with p_x > 0 refined by cubic Hermite interpolation"
        }
        ExperimentKind::CelestialRun(_) => {
            "orbit started at periapsis of (a, ecc) unless an initial state is given; deviation \
             driven by the selected indicator, both spectra reported"
        }
    }
}

/// Manifest contents for a record. Depends only on the configuration and
/// the computed results, never on timing.
pub fn manifest(record: &ExperimentRecord) -> Value {
    let failed = record.runs.iter().filter(|r| !r.ok).count();
    json!({
        "schema_version": SCHEMA_VERSION,
        "tool": {
            "name": env!("CARGO_PKG_NAME"),
            "version": env!("CARGO_PKG_VERSION"),
        },
        "experiment": record.config.kind.name(),
        "config": record.config,
        "seed": record.config.rng_seed,
        "unit_system": UNIT_SYSTEM,
        "protocol": protocol(&record.config.kind),
        "status": if failed == 0 { "ok" } else { "partial" },
        "runs": record.runs,
        "summary": record.summary,
        "artifacts": record
            .artifacts
            .iter()
            .map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
            .collect::<Vec<_>>(),
    })
}

fn write(path: PathBuf, contents: &str) -> Result<PathBuf> {
    fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Writes every table as CSV, every plot as SVG and finally
/// `manifest.json` into `dir` (the configured output directory when
/// `None`). Paths of written files are stored in `record.artifacts`.
pub fn emit_report(record: &mut ExperimentRecord, dir: Option<&Path>) -> Result<PathBuf> {
    let dir = dir.map_or_else(|| record.config.output_dir.clone(), Path::to_path_buf);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut artifacts = Vec::new();
    for table in &record.tables {
        artifacts.push(write(dir.join(table.file_name()), &table.to_csv())?);
    }
    for plot in &record.plots {
        let Some(table) = record.table(&plot.table) else {
            return Err(Error::InvalidArgument(format!(
                "plot {} has no table {}",
                plot.file, plot.table
            )));
        };
        if let Some(doc) = svg::render(plot, table) {
            artifacts.push(write(dir.join(&plot.file), &doc)?);
        }
    }
    record.artifacts = artifacts;
    let text = serde_json::to_string_pretty(&manifest(record))? + "\n";
    let path = write(dir.join(MANIFEST_FILE), &text)?;
    record.artifacts.push(path);
    Ok(dir)
}

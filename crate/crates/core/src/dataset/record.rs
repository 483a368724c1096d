use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::energy::{ContactAssignment, EnergyBreakdown};
use crate::error::{Error, Result};
use crate::geometry::{ObjectDescriptor, Scene};
use crate::kinematics::HandConfiguration;
use crate::metrics::QualityReport;

/// Version string written into every record's provenance.
pub const TOOL_VERSION: &str = concat!("multigrasp ", env!("CARGO_PKG_VERSION"));

/// Scene a record refers to: stored inline or as a path to a scene file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SceneRef {
    Inline(Vec<ObjectDescriptor>),
    File(PathBuf),
}

impl SceneRef {
    pub fn inline(scene: &Scene) -> Self {
        SceneRef::Inline(scene.descriptors())
    }

    /// Materializes the scene; relative file references resolve against
    /// `base_dir`.
    pub fn load(&self, base_dir: &Path) -> Result<Scene> {
        match self {
            SceneRef::Inline(descs) => Scene::from_descriptors(descs, 0),
            SceneRef::File(path) => Scene::load(&base_dir.join(path)),
        }
    }
}

/// Pipeline stage that produced a record.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Synthesized,
    Refined,
}

/// Everything needed to regenerate a record deterministically.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    /// Sampler seed; also seeds the hand surface samples.
    pub seed: u64,
    pub chain: u64,
    pub iterations: usize,
    /// Iteration at which the chain reached the stored state.
    pub best_iteration: usize,
    pub tool_version: String,
    pub stage: Stage,
    /// Yaw applied by palm alignment; rotating hand and scene by its
    /// negative restores the original frame.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alignment_angle: Option<f64>,
}

/// One serialized grasp.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraspRecord {
    pub scene: SceneRef,
    pub hand: HandConfiguration,
    pub contacts: ContactAssignment,
    pub energy: EnergyBreakdown,
    pub quality: QualityReport,
    pub provenance: Provenance,
}

/// Path of the first JSON null in `value`; serde_json writes non-finite
/// floats as null and records carry no optional nulls.
fn find_null(value: &Value, path: &mut String) -> bool {
    match value {
        Value::Null => true,
        Value::Array(items) => items.iter().enumerate().any(|(i, v)| {
            let len = path.len();
            path.push_str(&format!("[{i}]"));
            let found = find_null(v, path);
            if !found {
                path.truncate(len);
            }
            found
        }),
        Value::Object(map) => map.iter().any(|(k, v)| {
            let len = path.len();
            path.push('.');
            path.push_str(k);
            let found = find_null(v, path);
            if !found {
                path.truncate(len);
            }
            found
        }),
        _ => false,
    }
}

impl GraspRecord {
    /// One JSON line; fails on any non-finite number.
    pub fn to_json_line(&self) -> Result<String> {
        let value = serde_json::to_value(self)?;
        let mut path = String::new();
        if find_null(&value, &mut path) {
            return Err(Error::Input(format!("record field {} is not finite", path.trim_start_matches('.'))));
        }
        Ok(serde_json::to_string(&value)?)
    }
}

/// Writes records as JSONL, validating all of them before touching `path`.
pub fn write_records(path: &Path, records: &[GraspRecord]) -> Result<()> {
    let lines = records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            r.to_json_line()
                .map_err(|e| Error::Input(format!("record {}: {e}", i + 1)))
        })
        .collect::<Result<Vec<_>>>()?;
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for line in lines {
        writeln!(out, "{line}").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// Reads a JSONL file; blank lines are skipped and the first malformed line
/// fails the whole read.
pub fn read_records(path: &Path) -> Result<Vec<GraspRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut records = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|e| Error::MalformedRecord {
            path: path.to_path_buf(),
            line: i + 1,
            detail: e.to_string(),
        })?;
        records.push(record);
    }
    Ok(records)
}

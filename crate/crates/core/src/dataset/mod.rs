//! Dataset tooling: grasp records, palm alignment, object combinations and
//! batch generation with a manifest.
//!
//! A dataset directory holds one JSONL file per object-count category
//! (`objects-1.jsonl`, `objects-2.jsonl`, ...) and `manifest.json`, which
//! is written last.

mod align;
mod combinations;
mod record;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::energy::GraspEnergy;
use crate::error::{Error, Result};
use crate::geometry::{place_objects, ObjectTemplate, PlacementParams, Scene};
use crate::kinematics::HandModel;
use crate::metrics::GraspEvaluator;
use crate::refine::refine;
use crate::sampler::synthesize;

pub use align::{align_palm, palm_direction, rotate_about_z, Aligned, VERTICAL_TOLERANCE};
pub use combinations::{binomial, enumerate_combinations};
pub use record::{read_records, write_records, GraspRecord, Provenance, SceneRef, Stage, TOOL_VERSION};

pub const MANIFEST_FILE: &str = "manifest.json";
const STAGING_DIR: &str = "staging";

/// Objects available for placement and how to place them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Inventory {
    pub objects: Vec<ObjectTemplate>,
    #[serde(default)]
    pub placement: PlacementParams,
}

impl Inventory {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let inv: Self = serde_json::from_str(&text)?;
        inv.validate()?;
        Ok(inv)
    }

    pub fn validate(&self) -> Result<()> {
        if self.objects.is_empty() {
            return Err(Error::Input("inventory has no objects".into()));
        }
        let mut names: Vec<&str> = self.objects.iter().map(|o| o.name.as_str()).collect();
        names.sort_unstable();
        if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Input(format!("inventory object name {:?} is not unique", w[0])));
        }
        for o in &self.objects {
            o.primitive()?;
        }
        Ok(())
    }
}

/// Records stored for one object count.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CategoryEntry {
    pub objects: usize,
    pub file: String,
    pub records: usize,
    /// SHA-256 of the file contents, hex.
    pub sha256: String,
}

/// One requested object combination.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CombinationEntry {
    pub objects: Vec<String>,
    pub scenes: usize,
    pub records: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub tool_version: String,
    pub seed: u64,
    /// SHA-256 of the inventory, combinations and configuration, hex.
    pub config_digest: String,
    pub total_records: usize,
    pub categories: Vec<CategoryEntry>,
    pub combinations: Vec<CombinationEntry>,
}

impl DatasetManifest {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes") + "\n"
    }

    /// SHA-256 of the serialized manifest, hex.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_json().as_bytes()))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

fn category_file(objects: usize) -> String {
    format!("objects-{objects}.jsonl")
}

fn combination_key(names: impl IntoIterator<Item = String>) -> Vec<String> {
    let mut names: Vec<String> = names.into_iter().collect();
    names.sort();
    names
}

/// Digest of everything the generated dataset depends on besides the seed.
pub fn config_digest(
    inventory: &Inventory,
    combinations: &[Vec<usize>],
    scenes_per_combination: usize,
    config: &RunConfig,
    model: &HandModel,
) -> String {
    let doc = serde_json::json!({
        "inventory": inventory,
        "combinations": combinations,
        "scenes_per_combination": scenes_per_combination,
        "energy": config.energy,
        "sampler": config.sampler,
        "filter": config.filter,
        "metrics": config.metrics,
        "refine": config.refine,
        "hand": model.to_json(),
    });
    hex::encode(Sha256::digest(doc.to_string().as_bytes()))
}

/// Placement and sampler seeds of one scene task.
fn task_seeds(seed: u64, task: usize) -> (u64, u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(task as u64);
    (rng.next_u64(), rng.next_u64())
}

/// Places, synthesizes, refines, evaluates and aligns the grasps of one
/// scene.
fn generate_scene(
    model: &HandModel,
    templates: &[ObjectTemplate],
    placement: &PlacementParams,
    config: &RunConfig,
    seed: u64,
    task: usize,
) -> Result<Vec<GraspRecord>> {
    let (placement_seed, synth_seed) = task_seeds(seed, task);
    let scene = place_objects(templates, placement, placement_seed)?;
    let mut synth = config.synthesis();
    synth.sampler.seed = synth_seed;
    let result = synthesize(model, &scene, &synth)?;
    let energy = GraspEnergy::new(model, &scene, synth.energy.clone(), synth_seed)?;
    let evaluator = GraspEvaluator::new(
        model,
        &scene,
        &synth.metrics,
        &synth.filter,
        synth.energy.contacts_per_object,
        synth_seed,
    )?;
    let mut records = Vec::with_capacity(result.survivors.len());
    for survivor in &result.survivors {
        let chain = &survivor.result;
        let refined = refine(&energy, &chain.cfg, &chain.contacts, &config.refine)?;
        let quality = evaluator.report(&refined.cfg)?;
        let aligned = match align_palm(model, &refined.cfg, &scene) {
            Ok(a) => a,
            Err(e) => {
                warn!("scene task {task}, chain {}: {e}; grasp skipped", chain.chain);
                continue;
            }
        };
        records.push(GraspRecord {
            scene: SceneRef::inline(&aligned.scene),
            hand: aligned.cfg,
            contacts: chain.contacts.clone(),
            energy: refined.after,
            quality,
            provenance: Provenance {
                seed: synth_seed,
                chain: chain.chain,
                iterations: synth.sampler.iterations,
                best_iteration: chain.best_iteration,
                tool_version: TOOL_VERSION.into(),
                stage: Stage::Refined,
                alignment_angle: Some(aligned.angle),
            },
        });
    }
    Ok(records)
}

/// Generates `scenes_per_combination` scenes for every combination (indices
/// into the inventory) and writes the dataset to `out_dir`.
///
/// Scenes are processed in parallel, each into its own staging file; the
/// category files and the manifest are then written by a single finalizer.
/// A failed scene is logged and skipped; the run fails only when no record
/// is produced at all. The output is a pure function of the arguments.
pub fn generate_dataset(
    model: &HandModel,
    inventory: &Inventory,
    combinations: &[Vec<usize>],
    scenes_per_combination: usize,
    config: &RunConfig,
    seed: u64,
    out_dir: &Path,
) -> Result<DatasetManifest> {
    inventory.validate()?;
    config.validate()?;
    if let Some(c) = combinations
        .iter()
        .find(|c| c.is_empty() || c.iter().any(|&i| i >= inventory.objects.len()))
    {
        return Err(Error::Input(format!("combination {c:?} does not index the inventory")));
    }
    let staging = out_dir.join(STAGING_DIR);
    fs::create_dir_all(&staging).map_err(|e| Error::io(&staging, e))?;

    let tasks: Vec<(usize, usize)> = (0..combinations.len())
        .flat_map(|c| (0..scenes_per_combination).map(move |s| (c, s)))
        .collect();
    let staged: Vec<Result<Option<PathBuf>>> = tasks
        .par_iter()
        .enumerate()
        .map(|(task, &(c, _))| {
            let templates: Vec<ObjectTemplate> =
                combinations[c].iter().map(|&i| inventory.objects[i].clone()).collect();
            match generate_scene(model, &templates, &inventory.placement, config, seed, task) {
                Ok(records) => {
                    let path = staging.join(format!("scene-{task:06}.jsonl"));
                    write_records(&path, &records)?;
                    Ok(Some(path))
                }
                Err(e) => {
                    warn!("scene task {task} (combination {c}) failed: {e}");
                    Ok(None)
                }
            }
        })
        .collect();

    // finalizer: concatenate staging files in task order per category
    let mut by_category: BTreeMap<usize, String> = BTreeMap::new();
    let mut per_combination = vec![0usize; combinations.len()];
    let mut total = 0;
    for ((_, &(c, _)), outcome) in tasks.iter().enumerate().zip(staged) {
        let Some(path) = outcome? else { continue };
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let count = text.lines().filter(|l| !l.trim().is_empty()).count();
        per_combination[c] += count;
        total += count;
        by_category.entry(combinations[c].len()).or_default().push_str(&text);
    }
    fs::remove_dir_all(&staging).map_err(|e| Error::io(&staging, e))?;
    if total == 0 {
        return Err(Error::Input("dataset generation produced no records".into()));
    }

    let mut categories = Vec::new();
    for (objects, text) in &by_category {
        let file = category_file(*objects);
        let path = out_dir.join(&file);
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        categories.push(CategoryEntry {
            objects: *objects,
            file,
            records: text.lines().filter(|l| !l.trim().is_empty()).count(),
            sha256: hex::encode(Sha256::digest(text.as_bytes())),
        });
    }
    let manifest = DatasetManifest {
        tool_version: TOOL_VERSION.into(),
        seed,
        config_digest: config_digest(inventory, combinations, scenes_per_combination, config, model),
        total_records: total,
        categories,
        combinations: combinations
            .iter()
            .zip(&per_combination)
            .map(|(c, &records)| CombinationEntry {
                objects: combination_key(c.iter().map(|&i| inventory.objects[i].name.clone())),
                scenes: scenes_per_combination,
                records,
            })
            .collect(),
    };
    let path = out_dir.join(MANIFEST_FILE);
    fs::write(&path, manifest.to_json()).map_err(|e| Error::io(&path, e))?;
    info!("dataset: {total} records in {} categories", manifest.categories.len());
    Ok(manifest)
}

/// Recomputes counts and checksums from the category files and compares
/// them with the stored manifest; returns the recomputed manifest.
pub fn verify_dataset(dir: &Path) -> Result<DatasetManifest> {
    let stored = DatasetManifest::load(dir)?;
    let mut recomputed = stored.clone();
    let mut combination_counts: BTreeMap<Vec<String>, usize> = BTreeMap::new();
    let mut total = 0;
    for entry in &mut recomputed.categories {
        let path = dir.join(&entry.file);
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let records = read_records(&path)?;
        for (i, r) in records.iter().enumerate() {
            let SceneRef::Inline(descs) = &r.scene else {
                return Err(Error::Input(format!("{}: record {} has no inline scene", entry.file, i + 1)));
            };
            if descs.len() != entry.objects {
                return Err(Error::Input(format!(
                    "{}: record {} has {} objects, category holds {}",
                    entry.file,
                    i + 1,
                    descs.len(),
                    entry.objects
                )));
            }
            let key = combination_key(descs.iter().map(|d| d.name.clone().unwrap_or_default()));
            *combination_counts.entry(key).or_default() += 1;
        }
        entry.records = records.len();
        entry.sha256 = hex::encode(Sha256::digest(&bytes));
        total += records.len();
    }
    recomputed.total_records = total;
    for c in &mut recomputed.combinations {
        c.records = combination_counts.remove(&c.objects).unwrap_or(0);
    }
    if let Some(extra) = combination_counts.keys().next() {
        return Err(Error::Input(format!("records for unlisted combination {extra:?}")));
    }
    if recomputed != stored {
        let mut diffs = Vec::new();
        for (a, b) in stored.categories.iter().zip(&recomputed.categories) {
            if a != b {
                diffs.push(format!("{}: manifest {} records / {}, files {} / {}", a.file, a.records, a.sha256, b.records, b.sha256));
            }
        }
        for (a, b) in stored.combinations.iter().zip(&recomputed.combinations) {
            if a.records != b.records {
                diffs.push(format!("{:?}: manifest {}, files {}", a.objects, a.records, b.records));
            }
        }
        if stored.total_records != recomputed.total_records {
            diffs.push(format!("total: manifest {}, files {}", stored.total_records, recomputed.total_records));
        }
        return Err(Error::Input(format!("manifest does not match files: {}", diffs.join("; "))));
    }
    Ok(recomputed)
}

/// Loads the scene of a record, resolving file references against
/// `base_dir`.
pub fn record_scene(record: &GraspRecord, base_dir: &Path) -> Result<Scene> {
    record.scene.load(base_dir)
}

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;
use multigrasp::config::RunConfig;
use multigrasp::dataset::{
    enumerate_combinations, generate_dataset, read_records, verify_dataset, write_records, GraspRecord, Inventory,
    Provenance, SceneRef, Stage, TOOL_VERSION,
};
use multigrasp::energy::GraspEnergy;
use multigrasp::export::{hand_meshes, object_meshes, to_obj, to_xyz};
use multigrasp::geometry::Scene;
use multigrasp::kinematics::HandModel;
use multigrasp::metrics::{diversity, GraspEvaluator, QualityReport};
use multigrasp::refine::{flat_hand_start, plan_reach, refine};
use multigrasp::sampler::synthesize;
use multigrasp::{Error, Result};
use rayon::prelude::*;
use serde::Serialize;

use super::{Cli, Command, DatasetCommand, ExportFormat};

struct Context {
    config: RunConfig,
    model: HandModel,
    seed: Option<u64>,
}

impl Context {
    /// The run seed, choosing and printing a random one if none was given.
    fn seed(&self) -> u64 {
        self.seed.unwrap_or_else(|| {
            let seed = rand::random::<u64>();
            eprintln!("seed: {seed}");
            seed
        })
    }
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

/// Refuses to write over any input file.
fn check_output(out: &Path, inputs: &[&Path]) -> Result<()> {
    let Ok(out_abs) = fs::canonicalize(out) else {
        return Ok(()); // does not exist yet
    };
    for input in inputs {
        if fs::canonicalize(input).is_ok_and(|p| p == out_abs) {
            return Err(Error::Config(format!(
                "output {} would overwrite input {}",
                out.display(),
                input.display()
            )));
        }
    }
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

/// The scene given on the command line, or else the record's own.
fn scene_for(record: &GraspRecord, scene: Option<&Scene>, records_path: &Path) -> Result<Scene> {
    match scene {
        Some(s) => Ok(s.clone()),
        None => record.scene.load(records_path.parent().unwrap_or(Path::new("."))),
    }
}

fn pick(records: Vec<GraspRecord>, index: usize, path: &Path) -> Result<GraspRecord> {
    let n = records.len();
    records.into_iter().nth(index).ok_or_else(|| {
        Error::Input(format!("{} holds {n} records, no record {index}", path.display()))
    })
}

pub fn run(cli: Cli) -> Result<()> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(Error::Config("--jobs must be at least 1".into()));
        }
        pool = pool.num_threads(jobs);
    }
    let pool = pool
        .build()
        .map_err(|e| Error::Config(format!("cannot start {} worker threads: {e}", cli.jobs.unwrap_or(0))))?;

    let config = load_config(cli.config.as_deref())?;
    let hand_path = cli.hand.clone().or_else(|| config.paths.hand.clone());
    let model = match &hand_path {
        Some(p) => HandModel::load(p)?,
        None => HandModel::reference(),
    };
    let ctx = Context {
        seed: cli.seed.or(config.seed),
        config,
        model,
    };
    pool.install(|| dispatch(&ctx, cli.command))
}

fn dispatch(ctx: &Context, command: Command) -> Result<()> {
    match command {
        Command::Synth {
            scene,
            out,
            chains,
            iters,
        } => synth(ctx, &scene, &out, chains, iters),
        Command::Refine { input, scene, out } => refine_records(ctx, &input, scene.as_deref(), &out),
        Command::PlanReach {
            grasp,
            index,
            scene,
            out,
        } => plan(ctx, &grasp, index, scene.as_deref(), &out),
        Command::Eval {
            input,
            scene,
            report,
            timing,
        } => eval(ctx, &input, scene.as_deref(), &report, timing),
        Command::Dataset { command } => match command {
            DatasetCommand::Gen {
                inventory,
                out,
                max_objects,
                scenes,
            } => dataset_gen(ctx, &inventory, &out, max_objects, scenes),
            DatasetCommand::Verify { dir } => {
                let manifest = verify_dataset(&dir)?;
                println!("ok: {} records, manifest digest {}", manifest.total_records, manifest.digest());
                Ok(())
            }
        },
        Command::Export {
            grasp,
            index,
            scene,
            format,
            out,
        } => export(ctx, &grasp, index, scene.as_deref(), format, &out),
    }
}

fn synth(ctx: &Context, scene_path: &Path, out: &Path, chains: Option<usize>, iters: Option<usize>) -> Result<()> {
    check_output(out, &[scene_path])?;
    let scene = Scene::load(scene_path)?;
    let mut synth = ctx.config.synthesis();
    if let Some(c) = chains {
        synth.sampler.chains = c;
    }
    if let Some(i) = iters {
        synth.sampler.iterations = i;
    }
    synth.sampler.seed = ctx.seed();
    let result = synthesize(&ctx.model, &scene, &synth)?;
    let scene_ref = SceneRef::inline(&scene);
    let records: Vec<GraspRecord> = result
        .survivors
        .iter()
        .map(|s| GraspRecord {
            scene: scene_ref.clone(),
            hand: s.result.cfg.clone(),
            contacts: s.result.contacts.clone(),
            energy: s.result.energy.clone(),
            quality: s.quality.clone(),
            provenance: Provenance {
                seed: synth.sampler.seed,
                chain: s.result.chain,
                iterations: synth.sampler.iterations,
                best_iteration: s.result.best_iteration,
                tool_version: TOOL_VERSION.into(),
                stage: Stage::Synthesized,
                alignment_angle: None,
            },
        })
        .collect();
    write_records(out, &records)?;
    info!("{} of {} chains passed the filter", records.len(), result.chains);
    println!("{} grasps from {} chains written to {}", records.len(), result.chains, out.display());
    Ok(())
}

fn refine_records(ctx: &Context, input: &Path, scene_path: Option<&Path>, out: &Path) -> Result<()> {
    let mut inputs = vec![input];
    inputs.extend(scene_path);
    check_output(out, &inputs)?;
    let records = read_records(input)?;
    let scene = scene_path.map(Scene::load).transpose()?;
    let cfg = &ctx.config;
    let refined: Vec<GraspRecord> = records
        .par_iter()
        .map(|r| {
            let scene = scene_for(r, scene.as_ref(), input)?;
            let seed = r.provenance.seed;
            let energy = GraspEnergy::new(&ctx.model, &scene, cfg.energy.clone(), seed)?;
            let evaluator = GraspEvaluator::new(
                &ctx.model,
                &scene,
                &cfg.metrics,
                &cfg.filter,
                cfg.energy.contacts_per_object,
                seed,
            )?;
            let out = refine(&energy, &r.hand, &r.contacts, &cfg.refine)?;
            Ok(GraspRecord {
                hand: out.cfg.clone(),
                energy: out.after,
                quality: evaluator.report(&out.cfg)?,
                provenance: Provenance {
                    stage: Stage::Refined,
                    tool_version: TOOL_VERSION.into(),
                    ..r.provenance.clone()
                },
                ..r.clone()
            })
        })
        .collect::<Result<_>>()?;
    write_records(out, &refined)?;
    println!("{} grasps refined into {}", refined.len(), out.display());
    Ok(())
}

fn plan(ctx: &Context, grasp: &Path, index: usize, scene_path: Option<&Path>, out: &Path) -> Result<()> {
    let mut inputs = vec![grasp];
    inputs.extend(scene_path);
    check_output(out, &inputs)?;
    let record = pick(read_records(grasp)?, index, grasp)?;
    let scene = scene_path.map(Scene::load).transpose()?;
    let scene = scene_for(&record, scene.as_ref(), grasp)?;
    let energy = GraspEnergy::new(&ctx.model, &scene, ctx.config.energy.clone(), record.provenance.seed)?;
    let start = flat_hand_start(&ctx.model, &scene);
    let trajectory = plan_reach(&energy, &start, &record.hand, &ctx.config.reach)?;
    write_json(out, &trajectory)?;
    println!(
        "{} waypoints written to {}; max penetration {:.3} mm{}",
        trajectory.waypoints.len(),
        out.display(),
        1000.0 * trajectory.max_penetration,
        if trajectory.warning { " (warning: above threshold)" } else { "" }
    );
    Ok(())
}

#[derive(Serialize)]
struct Aggregate {
    /// Means are null for an empty input.
    mean_q1_min: Option<f64>,
    mean_penetration_mm: Option<f64>,
    /// Joint-angle diversity, deg^2; null for fewer than two grasps.
    diversity: Option<f64>,
    feasible: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    wall_clock_s: Option<f64>,
}

#[derive(Serialize)]
struct EvalReport {
    records: usize,
    grasps: Vec<QualityReport>,
    aggregate: Aggregate,
}

fn eval(ctx: &Context, input: &Path, scene_path: Option<&Path>, report: &Path, timing: bool) -> Result<()> {
    let mut inputs = vec![input];
    inputs.extend(scene_path);
    check_output(report, &inputs)?;
    let started = Instant::now();
    let records = read_records(input)?;
    let scene = scene_path.map(Scene::load).transpose()?;
    let cfg = &ctx.config;
    // one evaluator per distinct (scene, surface seed)
    let mut keys: Vec<(String, u64)> = Vec::new();
    let mut scenes: Vec<Scene> = Vec::new();
    let mut slot = Vec::with_capacity(records.len());
    for r in &records {
        let scene = scene_for(r, scene.as_ref(), input)?;
        let key = (serde_json::to_string(&scene.descriptors())?, r.provenance.seed);
        let k = match keys.iter().position(|k| *k == key) {
            Some(k) => k,
            None => {
                keys.push(key);
                scenes.push(scene);
                keys.len() - 1
            }
        };
        slot.push(k);
    }
    let evaluators = scenes
        .par_iter()
        .zip(&keys)
        .map(|(scene, (_, seed))| {
            GraspEvaluator::new(
                &ctx.model,
                scene,
                &cfg.metrics,
                &cfg.filter,
                cfg.energy.contacts_per_object,
                *seed,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let grasps: Vec<QualityReport> = records
        .par_iter()
        .zip(&slot)
        .map(|(r, &k)| evaluators[k].report(&r.hand))
        .collect::<Result<_>>()?;
    let n = grasps.len();
    let mean = |f: fn(&QualityReport) -> f64| (n > 0).then(|| grasps.iter().map(f).sum::<f64>() / n as f64);
    let configs: Vec<_> = records.iter().map(|r| r.hand.clone()).collect();
    let aggregate = Aggregate {
        mean_q1_min: mean(|g| g.q1_min),
        mean_penetration_mm: mean(|g| g.penetration_mm),
        diversity: if n >= 2 { Some(diversity(&configs)?) } else { None },
        feasible: grasps.iter().filter(|g| g.feasible).count(),
        wall_clock_s: timing.then(|| started.elapsed().as_secs_f64()),
    };
    let elapsed = started.elapsed().as_secs_f64();
    write_json(
        report,
        &EvalReport {
            records: n,
            grasps,
            aggregate,
        },
    )?;
    eprintln!("evaluated {n} grasps in {elapsed:.2} s");
    Ok(())
}

fn dataset_gen(
    ctx: &Context,
    inventory_path: &Path,
    out: &Path,
    max_objects: Option<usize>,
    scenes: Option<usize>,
) -> Result<()> {
    check_output(out, &[inventory_path])?;
    let inventory = Inventory::load(inventory_path)?;
    let max_objects = max_objects.unwrap_or(ctx.config.dataset.max_objects);
    let scenes = scenes.unwrap_or(ctx.config.dataset.scenes_per_combination);
    let combinations = enumerate_combinations(inventory.objects.len(), max_objects);
    let seed = ctx.seed();
    fs::create_dir_all(out).map_err(|e| Error::Io {
        path: PathBuf::from(out),
        source: e,
    })?;
    let manifest = generate_dataset(&ctx.model, &inventory, &combinations, scenes, &ctx.config, seed, out)?;
    println!(
        "{} records over {} combinations written to {}",
        manifest.total_records,
        manifest.combinations.len(),
        out.display()
    );
    Ok(())
}

fn export(
    ctx: &Context,
    grasp: &Path,
    index: usize,
    scene_path: Option<&Path>,
    format: ExportFormat,
    out: &Path,
) -> Result<()> {
    let mut inputs = vec![grasp];
    inputs.extend(scene_path);
    check_output(out, &inputs)?;
    let record = pick(read_records(grasp)?, index, grasp)?;
    let scene = scene_path.map(Scene::load).transpose()?;
    let scene = scene_for(&record, scene.as_ref(), grasp)?;
    let text = match format {
        ExportFormat::Obj => {
            let mut meshes = hand_meshes(&ctx.model, &record.hand)?;
            meshes.extend(object_meshes(&scene));
            to_obj(&meshes)
        }
        ExportFormat::Xyz => to_xyz(&ctx.model, &record.hand, &scene, record.provenance.seed)?,
    };
    write_text(out, &text)?;
    println!("exported record {index} to {}", out.display());
    Ok(())
}

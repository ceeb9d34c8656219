//! Command-line orchestration: `simulate`, `pipeline`, `route`, `eval` and
//! `split` subcommands over the library pipeline.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 internal invariant violation.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annot::{self, Annotation, ClassMap};
use crate::config::{CameraConfig, ConfigError, CorrespondenceConfig, LotConfig, RunConfig};
use crate::depth::{DepthMethod, PlanarPoint};
use crate::eval::evaluate_vacancy;
use crate::fusion::{fuse_views, project_object, CameraView, FusionError, FusionParams};
use crate::nav::{build_nav_graph, nearest_vacant, NavError, NodeKind};
use crate::scene::{to_plot_script, to_points_csv, SceneDocument};
use crate::synth::{default_camera_rig, generate_lot, render_views, RigCamera, SynthError};
use crate::vacancy::{assign_rows, extract_vacancies, LotModel, RowBand, VacancyError, VacancyMap};

#[derive(Debug, Parser)]
#[command(
    name = "lotmap",
    version,
    about = "Fuse per-camera parking-lot detections into a 3D lot model, extract vacant spots, and route to the nearest vacancy"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Run configuration JSON.
    #[arg(long)]
    pub config: PathBuf,
    /// Override the output directory from the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Override the run seed from the config.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Dotted-path config overrides, e.g. --set inputs.synth.noise.bbox_jitter_sigma=2.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Omit timestamps from emitted metadata (byte-deterministic outputs).
    #[arg(long)]
    pub no_timestamp: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic lot and per-camera VOC annotations plus truth.
    Simulate(RunArgs),
    /// Run ingest -> project -> fuse -> extract -> serialize.
    Pipeline(RunArgs),
    /// Route from an entrance to the nearest vacant spot of a scene.
    Route {
        /// Scene JSON produced by `pipeline`.
        #[arg(long)]
        scene: PathBuf,
        /// Run configuration JSON (supplies entrances and lane offset).
        #[arg(long)]
        config: PathBuf,
        /// Entrance index (0-based).
        #[arg(long, default_value_t = 0)]
        entrance: usize,
        /// Where to write route.json (defaults next to the scene).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare a predicted run directory against a truth directory.
    Eval {
        #[arg(long)]
        predicted: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        /// Where to write the report JSON (defaults to stdout only).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Split a labels CSV into train/test label files.
    Split {
        /// Labels CSV (filename,width,height,class,xmin,ymin,xmax,ymax).
        #[arg(long)]
        labels: PathBuf,
        #[arg(long, default_value_t = 0.75)]
        fraction: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory for train_label.csv and test_label.csv.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Data(String),
    #[error("internal invariant violated: {0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 1,
            CliError::Data(_) => 2,
            CliError::Internal(_) => 3,
        }
    }

    fn io(context: &str, path: &Path, err: std::io::Error) -> CliError {
        CliError::Data(format!("{context} {}: {err}", path.display()))
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::InvalidSpec { .. } => CliError::Usage(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<annot::AnnotError> for CliError {
    fn from(e: annot::AnnotError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<VacancyError> for CliError {
    fn from(e: VacancyError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<NavError> for CliError {
    fn from(e: NavError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        CliError::Data(e.to_string())
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("view {view}: {source}")]
    Projection { view: u32, source: FusionError },
    #[error("{views} cameras but {annotations} annotation files")]
    ViewCountMismatch { views: usize, annotations: usize },
    #[error(transparent)]
    Rows(#[from] VacancyError),
}

/// Pure pipeline core shared by `pipeline` and the test harnesses: project
/// every per-view detection onto the floor, fuse the views, assign rows and
/// extract vacancies. Annotations pair with views by index.
#[allow(clippy::too_many_arguments)]
pub fn run_detection_pipeline(
    views: &[CameraView],
    annotations: &[Annotation],
    depth_mode: DepthMethod,
    fusion: &FusionParams,
    rows: &[RowBand],
    spot_width: f64,
    lot_bounds: crate::fusion::FloorRect,
    occupancy_fraction: f64,
    lot_id: &str,
) -> Result<PipelineOutput, PipelineError> {
    if views.len() != annotations.len() {
        return Err(PipelineError::ViewCountMismatch {
            views: views.len(),
            annotations: annotations.len(),
        });
    }
    let mut per_view = Vec::with_capacity(views.len());
    for (view, annotation) in views.iter().zip(annotations) {
        let mut objects = Vec::with_capacity(annotation.boxes.len());
        for bbox in &annotation.boxes {
            let object = project_object(view, bbox, depth_mode, fusion).map_err(|source| {
                PipelineError::Projection {
                    view: view.view_id,
                    source,
                }
            })?;
            objects.push(object);
        }
        per_view.push(objects);
    }
    let fused = fuse_views(&per_view, fusion.iou_threshold);
    let assignment = assign_rows(fused, rows, spot_width, lot_bounds, lot_id)?;
    let vmap = extract_vacancies(&assignment.lot, occupancy_fraction);
    Ok(PipelineOutput {
        lot: assignment.lot,
        vmap,
        unassigned: assignment.unassigned.len(),
    })
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub lot: LotModel,
    pub vmap: VacancyMap,
    pub unassigned: usize,
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::Pipeline(args) => cmd_pipeline(args),
        Command::Route {
            scene,
            config,
            entrance,
            out,
        } => cmd_route(&scene, &config, entrance, out),
        Command::Eval {
            predicted,
            truth,
            out,
        } => cmd_eval(&predicted, &truth, out),
        Command::Split {
            labels,
            fraction,
            seed,
            out,
        } => cmd_split(&labels, fraction, seed, &out),
    }
}

fn load_run_config(args: &RunArgs) -> Result<RunConfig, CliError> {
    let mut overrides = args.set.clone();
    if let Some(seed) = args.seed {
        overrides.push(format!("seed={seed}"));
    }
    let mut config = RunConfig::load(&args.config, &overrides)?;
    if let Some(out) = &args.out {
        config.output_dir = out.clone();
    }
    Ok(config)
}

/// Camera set for a synthetic run: the configured cameras when a lot config
/// is present, the default rig derived from the generated lot otherwise.
fn synth_cameras(
    config: &RunConfig,
    lot: &LotModel,
) -> Result<(Vec<CameraView>, Option<Vec<RigCamera>>), CliError> {
    match config.load_lot_config()? {
        Some(lot_config) => Ok((lot_config.build_views()?, None)),
        None => {
            let rig = default_camera_rig(lot.lot_bounds)?;
            let views = rig.iter().map(|r| r.view.clone()).collect();
            Ok((views, Some(rig)))
        }
    }
}

fn timestamp(args: &RunArgs) -> Option<String> {
    if args.no_timestamp {
        return None;
    }
    let seconds = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    Some(seconds.to_string())
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| CliError::io("cannot create", parent, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| CliError::io("cannot write", path, e))
}

/// Lot config document equivalent to the default rig, so a simulated run is
/// reproducible through the same calibration path as real configurations.
fn rig_to_lot_config(rig: &[RigCamera], lot: &LotModel, entrances: Vec<[f64; 2]>) -> LotConfig {
    LotConfig {
        cameras: rig
            .iter()
            .map(|r| CameraConfig {
                view_id: r.view.view_id,
                image_width: r.view.image_width,
                image_height: r.view.image_height,
                camera_floor_position: [
                    r.view.camera_floor_position.x,
                    r.view.camera_floor_position.y,
                ],
                correspondences: r
                    .correspondences
                    .iter()
                    .map(|c| CorrespondenceConfig {
                        image: [c.image_point.x, c.image_point.y],
                        floor: [c.floor_point.x, c.floor_point.y],
                    })
                    .collect(),
            })
            .collect(),
        fusion: FusionParams::default(),
        rows: lot.rows.clone(),
        spot_width: lot.spot_width,
        lot_bounds: lot.lot_bounds,
        occupancy_fraction: crate::vacancy::DEFAULT_OCCUPANCY_FRACTION,
        lane_offset: crate::nav::DEFAULT_LANE_OFFSET,
        entrances,
    }
}

const DEFAULT_ENTRANCE: [f64; 2] = [1.0, 1.0];

fn cmd_simulate(args: RunArgs) -> Result<(), CliError> {
    let config = load_run_config(&args)?;
    let Some(synth) = config.inputs.synth.clone() else {
        return Err(CliError::Usage(
            "simulate requires inputs.synth in the config".into(),
        ));
    };
    let mut spec = synth.lot_spec;
    spec.seed = config.seed;
    let generated = generate_lot(&spec)?;

    let (views, rig) = synth_cameras(&config, &generated.lot)?;
    let annotations = render_views(&generated.lot, &views, &synth.noise, config.seed)?;

    let run_dir = config.output_dir.join(config.seed.to_string());
    for (view, annotation) in views.iter().zip(&annotations) {
        let path = run_dir.join(format!("view{}.xml", view.view_id));
        write_file(&path, &annot::write_voc_xml(annotation))?;
    }
    write_file(
        &run_dir.join("truth.json"),
        &crate::scene::to_scene_json(&generated.lot, &generated.truth),
    )?;
    if let Some(rig) = rig {
        let lot_config = rig_to_lot_config(&rig, &generated.lot, vec![DEFAULT_ENTRANCE]);
        let bytes = serde_json::to_vec_pretty(&lot_config).expect("lot config serializes");
        write_file(&run_dir.join("lot.json"), &bytes)?;
    }

    println!(
        "simulated lot seed={} -> {} ({} views, {} spots: {} vacant / {} occupied)",
        config.seed,
        run_dir.display(),
        annotations.len(),
        generated.truth.spots.len(),
        generated.truth.vacant_count(),
        generated.truth.occupied_count(),
    );
    Ok(())
}

/// Vacancy report artifact: headline counts plus the full map.
#[derive(Debug, Serialize, Deserialize)]
struct VacancyReport {
    occupied: usize,
    vacant: usize,
    map: VacancyMap,
}

fn cmd_pipeline(args: RunArgs) -> Result<(), CliError> {
    let config = load_run_config(&args)?;
    let class_map = ClassMap::default();

    struct Prepared {
        views: Vec<CameraView>,
        annotations: Vec<Annotation>,
        fusion: FusionParams,
        rows: Vec<RowBand>,
        spot_width: f64,
        lot_bounds: crate::fusion::FloorRect,
        occupancy_fraction: f64,
        lot_id: String,
    }

    let prepared = if let Some(files) = &config.inputs.annotations {
        let lot_config = config.load_lot_config()?.ok_or_else(|| {
            CliError::Usage("annotation inputs require lot_config in the run config".into())
        })?;
        let views = lot_config.build_views()?;
        if views.len() != files.len() {
            return Err(CliError::Usage(format!(
                "lot config has {} cameras but {} annotation files were given",
                views.len(),
                files.len()
            )));
        }
        let mut annotations = Vec::with_capacity(files.len());
        for file in files {
            let bytes = std::fs::read(file).map_err(|e| CliError::io("cannot read", file, e))?;
            annotations.push(annot::parse_voc_xml(&bytes, &class_map)?);
        }
        Prepared {
            views,
            annotations,
            fusion: lot_config.fusion,
            rows: lot_config.rows.clone(),
            spot_width: lot_config.spot_width,
            lot_bounds: lot_config.lot_bounds,
            occupancy_fraction: lot_config.occupancy_fraction,
            lot_id: args.config.display().to_string(),
        }
    } else {
        let synth = config
            .inputs
            .synth
            .clone()
            .expect("validated: synth present");
        let mut spec = synth.lot_spec;
        spec.seed = config.seed;
        let generated = generate_lot(&spec)?;
        let (views, _) = synth_cameras(&config, &generated.lot)?;
        let annotations = render_views(&generated.lot, &views, &synth.noise, config.seed)?;
        let (fusion, occupancy_fraction) = match config.load_lot_config()? {
            Some(lc) => (lc.fusion, lc.occupancy_fraction),
            None => (
                FusionParams::default(),
                crate::vacancy::DEFAULT_OCCUPANCY_FRACTION,
            ),
        };
        Prepared {
            views,
            annotations,
            fusion,
            rows: generated.lot.rows.clone(),
            spot_width: generated.lot.spot_width,
            lot_bounds: generated.lot.lot_bounds,
            occupancy_fraction,
            lot_id: format!("synthetic:seed={}", config.seed),
        }
    };

    let output = run_detection_pipeline(
        &prepared.views,
        &prepared.annotations,
        config.depth_mode,
        &prepared.fusion,
        &prepared.rows,
        prepared.spot_width,
        prepared.lot_bounds,
        prepared.occupancy_fraction,
        &prepared.lot_id,
    )?;

    let mut vmap = output.vmap.clone();
    vmap.generated_from.timestamp = timestamp(&args);

    let out = &config.output_dir;
    let scene = SceneDocument::build(&output.lot, &vmap);
    write_file(&out.join("scene.json"), &scene.to_json())?;
    write_file(&out.join("points.csv"), &to_points_csv(&output.lot, &vmap))?;
    write_file(&out.join("scene.plot"), &to_plot_script(&scene))?;
    let report = VacancyReport {
        occupied: vmap.occupied_count(),
        vacant: vmap.vacant_count(),
        map: vmap.clone(),
    };
    let mut report_bytes = serde_json::to_vec_pretty(&report).expect("report serializes");
    report_bytes.push(b'\n');
    write_file(&out.join("vacancy.json"), &report_bytes)?;

    println!(
        "pipeline: {} objects fused ({} unassigned), vacant: {}, occupied: {} -> {}",
        output.lot.pillars.len() + output.lot.vehicles.len(),
        output.unassigned,
        vmap.vacant_count(),
        vmap.occupied_count(),
        out.display(),
    );
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct RouteDocument {
    target_spot: u32,
    total_distance: f64,
    node_sequence: Vec<usize>,
    nodes: Vec<RouteNode>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RouteNode {
    id: usize,
    kind: NodeKind,
    x: f64,
    y: f64,
}

fn cmd_route(
    scene_path: &Path,
    config_path: &Path,
    entrance: usize,
    out: Option<PathBuf>,
) -> Result<(), CliError> {
    let bytes =
        std::fs::read(scene_path).map_err(|e| CliError::io("cannot read", scene_path, e))?;
    let scene = SceneDocument::from_json(&bytes).map_err(|e| CliError::Data(e.to_string()))?;

    let run_config = RunConfig::load(config_path, &[])?;
    let (entrances, lane_offset) = match run_config.load_lot_config()? {
        Some(lc) => (
            if lc.entrances.is_empty() {
                vec![DEFAULT_ENTRANCE]
            } else {
                lc.entrances.clone()
            },
            lc.lane_offset,
        ),
        None => (vec![DEFAULT_ENTRANCE], crate::nav::DEFAULT_LANE_OFFSET),
    };
    let entrance_points: Vec<PlanarPoint> = entrances
        .iter()
        .map(|e| PlanarPoint::new(e[0], e[1]))
        .collect();

    let lot = scene_to_lot(&scene)?;
    let vmap = scene.vacancy_map(&lot.lot_id);
    let graph = build_nav_graph(&lot, &vmap, &entrance_points, lane_offset)?;
    if entrance >= entrance_points.len() {
        return Err(CliError::Usage(format!(
            "entrance {entrance} does not exist ({} configured)",
            entrance_points.len()
        )));
    }
    let route = nearest_vacant(&graph, &vmap, entrance)?;

    let nodes: Vec<RouteNode> = route
        .node_sequence
        .iter()
        .map(|&id| {
            let n = &graph.nodes[id];
            RouteNode {
                id,
                kind: n.kind,
                x: n.position.x,
                y: n.position.y,
            }
        })
        .collect();
    let document = RouteDocument {
        target_spot: route.target_spot,
        total_distance: route.total_distance,
        node_sequence: route.node_sequence.clone(),
        nodes,
    };
    let mut doc_bytes = serde_json::to_vec_pretty(&document).expect("route serializes");
    doc_bytes.push(b'\n');
    let out_path = out.unwrap_or_else(|| {
        scene_path
            .parent()
            .unwrap_or_else(|| Path::new("."))
            .join("route.json")
    });
    write_file(&out_path, &doc_bytes)?;

    println!(
        "route to spot {} (distance {:.3}):",
        route.target_spot, route.total_distance
    );
    for node in &document.nodes {
        println!(
            "  {:?} {} at ({:.2}, {:.2})",
            node.kind, node.id, node.x, node.y
        );
    }
    Ok(())
}

/// Rebuild a lot model from a scene document for routing.
fn scene_to_lot(scene: &SceneDocument) -> Result<LotModel, CliError> {
    let objects: Vec<crate::fusion::Object3D> = scene
        .objects
        .iter()
        .map(|o| crate::fusion::Object3D {
            class_label: o.class,
            floor_position: PlanarPoint::new(o.x, o.y),
            z: o.z,
            pixel_area: o.footprint.area(),
            footprint: o.footprint,
            source_view: 0,
        })
        .collect();
    let assignment = assign_rows(
        objects,
        &scene.metadata.rows,
        scene.metadata.spot_width,
        scene.metadata.lot_bounds,
        "scene",
    )?;
    Ok(assignment.lot)
}

fn find_scene_file(dir: &Path) -> Result<PathBuf, CliError> {
    for name in ["scene.json", "truth.json"] {
        let candidate = dir.join(name);
        if candidate.exists() {
            return Ok(candidate);
        }
    }
    Err(CliError::Data(format!(
        "no scene.json or truth.json in {}",
        dir.display()
    )))
}

fn cmd_eval(predicted: &Path, truth: &Path, out: Option<PathBuf>) -> Result<(), CliError> {
    let load = |dir: &Path| -> Result<SceneDocument, CliError> {
        let path = find_scene_file(dir)?;
        let bytes = std::fs::read(&path).map_err(|e| CliError::io("cannot read", &path, e))?;
        SceneDocument::from_json(&bytes).map_err(|e| CliError::Data(e.to_string()))
    };
    let predicted_map = load(predicted)?.vacancy_map("predicted");
    let truth_map = load(truth)?.vacancy_map("truth");
    let report =
        evaluate_vacancy(&predicted_map, &truth_map).map_err(|e| CliError::Data(e.to_string()))?;

    let mut bytes = serde_json::to_vec_pretty(&report).expect("report serializes");
    bytes.push(b'\n');
    if let Some(path) = out {
        write_file(&path, &bytes)?;
    }
    print!("{}", String::from_utf8_lossy(&bytes));
    Ok(())
}

fn cmd_split(labels: &Path, fraction: f64, seed: u64, out: &Path) -> Result<(), CliError> {
    if !fraction.is_finite() || fraction <= 0.0 || fraction >= 1.0 {
        return Err(CliError::Usage(format!(
            "fraction must be in (0, 1), got {fraction}"
        )));
    }
    let bytes = std::fs::read(labels).map_err(|e| CliError::io("cannot read", labels, e))?;
    let annotations = annot::parse_labels_csv(&bytes, &ClassMap::default())?;
    let split = annot::split_dataset(annotations, fraction, seed)?;
    write_file(
        &out.join("train_label.csv"),
        &annot::write_labels_csv(&split.train),
    )?;
    write_file(
        &out.join("test_label.csv"),
        &annot::write_labels_csv(&split.test),
    )?;
    println!(
        "split {} annotations -> {} train / {} test (seed {seed})",
        split.train.len() + split.test.len(),
        split.train.len(),
        split.test.len(),
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fusion::FloorRect;
    use crate::ipm::Homography;

    fn identity_view() -> CameraView {
        CameraView {
            view_id: 0,
            image_width: 640,
            image_height: 640,
            homography: Homography::IDENTITY,
            camera_floor_position: PlanarPoint::ORIGIN,
        }
    }

    #[test]
    fn empty_annotations_yield_empty_lot_and_no_spots() {
        let views = [identity_view()];
        let annotations = [Annotation::new("view0.png".into(), 640, 640, vec![]).unwrap()];
        let output = run_detection_pipeline(
            &views,
            &annotations,
            DepthMethod::CentroidInverse,
            &FusionParams::default(),
            &[RowBand::new(0.0, 5.0)],
            2.5,
            FloorRect::new(0.0, 0.0, 100.0, 100.0),
            0.2,
            "empty",
        )
        .unwrap();
        assert!(output.lot.pillars.is_empty());
        assert!(output.lot.vehicles.is_empty());
        assert!(output.vmap.spots.is_empty());
    }

    #[test]
    fn view_count_mismatch_is_reported() {
        let views = [identity_view()];
        let result = run_detection_pipeline(
            &views,
            &[],
            DepthMethod::CentroidInverse,
            &FusionParams::default(),
            &[],
            2.5,
            FloorRect::new(0.0, 0.0, 10.0, 10.0),
            0.2,
            "mismatch",
        );
        assert!(matches!(
            result,
            Err(PipelineError::ViewCountMismatch { .. })
        ));
    }
}

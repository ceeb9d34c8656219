//! Run configuration: a single JSON document describing the lot, the input
//! source (annotation files or a synthetic spec) and pipeline parameters,
//! with a dotted-path override mechanism for experiments.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::depth::{DepthMethod, PlanarPoint};
use crate::fusion::{CameraView, FloorRect, FusionParams};
use crate::ipm::{fit_homography, Correspondence};
use crate::synth::{LotSpec, NoiseModel};
use crate::vacancy::{RowBand, DEFAULT_OCCUPANCY_FRACTION};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config is not valid json: {0}")]
    Json(String),
    #[error("camera {0}: {1}")]
    Camera(u32, String),
    #[error("config: {0}")]
    Invalid(String),
    #[error("override '{key}': {reason}")]
    BadOverride { key: String, reason: String },
    #[error("referenced path does not exist: {0}")]
    MissingPath(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrespondenceConfig {
    pub image: [f64; 2],
    pub floor: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraConfig {
    pub view_id: u32,
    pub image_width: u32,
    pub image_height: u32,
    pub camera_floor_position: [f64; 2],
    #[serde(default)]
    pub correspondences: Vec<CorrespondenceConfig>,
}

/// The lot: cameras, parking geometry and extraction parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LotConfig {
    pub cameras: Vec<CameraConfig>,
    #[serde(default)]
    pub fusion: FusionParams,
    pub rows: Vec<RowBand>,
    pub spot_width: f64,
    pub lot_bounds: FloorRect,
    #[serde(default = "default_occupancy_fraction")]
    pub occupancy_fraction: f64,
    #[serde(default = "default_lane_offset")]
    pub lane_offset: f64,
    #[serde(default)]
    pub entrances: Vec<[f64; 2]>,
}

fn default_occupancy_fraction() -> f64 {
    DEFAULT_OCCUPANCY_FRACTION
}

fn default_lane_offset() -> f64 {
    crate::nav::DEFAULT_LANE_OFFSET
}

impl LotConfig {
    /// Fit camera homographies from the configured correspondences.
    pub fn build_views(&self) -> Result<Vec<CameraView>, ConfigError> {
        let mut seen = std::collections::BTreeSet::new();
        let mut views = Vec::with_capacity(self.cameras.len());
        for cam in &self.cameras {
            if !seen.insert(cam.view_id) {
                return Err(ConfigError::Camera(cam.view_id, "duplicate view_id".into()));
            }
            if cam.correspondences.len() < 4 {
                return Err(ConfigError::Camera(
                    cam.view_id,
                    format!(
                        "needs at least 4 correspondences, has {}",
                        cam.correspondences.len()
                    ),
                ));
            }
            let correspondences: Vec<Correspondence> = cam
                .correspondences
                .iter()
                .map(|c| Correspondence {
                    image_point: PlanarPoint::new(c.image[0], c.image[1]),
                    floor_point: PlanarPoint::new(c.floor[0], c.floor[1]),
                })
                .collect();
            let homography = fit_homography(&correspondences)
                .map_err(|e| ConfigError::Camera(cam.view_id, e.to_string()))?;
            views.push(CameraView {
                view_id: cam.view_id,
                image_width: cam.image_width,
                image_height: cam.image_height,
                homography,
                camera_floor_position: PlanarPoint::new(
                    cam.camera_floor_position[0],
                    cam.camera_floor_position[1],
                ),
            });
        }
        Ok(views)
    }

    pub fn entrance_points(&self) -> Vec<PlanarPoint> {
        self.entrances
            .iter()
            .map(|e| PlanarPoint::new(e[0], e[1]))
            .collect()
    }
}

/// Synthetic input: a lot spec plus the noise model applied at render time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthInput {
    pub lot_spec: LotSpec,
    #[serde(default)]
    pub noise: NoiseModel,
}

/// Where detections come from: exactly one of the two sources.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct RunInputs {
    /// Annotation files, one per camera, in camera order.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotations: Option<Vec<PathBuf>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synth: Option<SynthInput>,
}

/// Top-level run configuration document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Path to a [`LotConfig`] JSON document. Optional for synthetic runs,
    /// where the default camera rig is derived from the generated lot.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lot_config: Option<PathBuf>,
    pub inputs: RunInputs,
    #[serde(default = "default_depth_mode")]
    pub depth_mode: DepthMethod,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
}

fn default_depth_mode() -> DepthMethod {
    DepthMethod::CentroidInverse
}

impl RunConfig {
    /// Load from disk, apply `--set key=value` overrides, validate, and
    /// resolve referenced paths relative to the config file's directory.
    pub fn load(path: &Path, overrides: &[String]) -> Result<RunConfig, ConfigError> {
        let bytes = std::fs::read(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut value: serde_json::Value =
            serde_json::from_slice(&bytes).map_err(|e| ConfigError::Json(e.to_string()))?;
        for entry in overrides {
            apply_override(&mut value, entry)?;
        }
        let mut config: RunConfig =
            serde_json::from_value(value).map_err(|e| ConfigError::Json(e.to_string()))?;

        let base = path.parent().unwrap_or_else(|| Path::new("."));
        if let Some(lot) = &config.lot_config {
            config.lot_config = Some(resolve_existing(base, lot)?);
        }
        if let Some(files) = &config.inputs.annotations {
            let resolved: Result<Vec<PathBuf>, ConfigError> =
                files.iter().map(|f| resolve_existing(base, f)).collect();
            config.inputs.annotations = Some(resolved?);
        }
        config.output_dir = resolve(base, &config.output_dir);
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        match (&self.inputs.annotations, &self.inputs.synth) {
            (Some(_), Some(_)) => Err(ConfigError::Invalid(
                "inputs.annotations and inputs.synth are mutually exclusive".into(),
            )),
            (None, None) => Err(ConfigError::Invalid(
                "one of inputs.annotations or inputs.synth is required".into(),
            )),
            _ => Ok(()),
        }
    }

    pub fn load_lot_config(&self) -> Result<Option<LotConfig>, ConfigError> {
        let Some(path) = &self.lot_config else {
            return Ok(None);
        };
        let bytes = std::fs::read(path).map_err(|source| ConfigError::Io {
            path: path.clone(),
            source,
        })?;
        let lot: LotConfig =
            serde_json::from_slice(&bytes).map_err(|e| ConfigError::Json(e.to_string()))?;
        Ok(Some(lot))
    }
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn resolve_existing(base: &Path, p: &Path) -> Result<PathBuf, ConfigError> {
    let resolved = resolve(base, p);
    if !resolved.exists() {
        return Err(ConfigError::MissingPath(resolved));
    }
    Ok(resolved)
}

/// Apply one `key.path=value` override to a JSON document. The value parses
/// as JSON when possible and falls back to a string.
fn apply_override(root: &mut serde_json::Value, entry: &str) -> Result<(), ConfigError> {
    let (key, raw_value) = entry
        .split_once('=')
        .ok_or_else(|| ConfigError::BadOverride {
            key: entry.into(),
            reason: "expected key.path=value".into(),
        })?;
    let parsed: serde_json::Value = serde_json::from_str(raw_value)
        .unwrap_or_else(|_| serde_json::Value::String(raw_value.to_string()));

    let mut cursor = root;
    let segments: Vec<&str> = key.split('.').collect();
    for (i, segment) in segments.iter().enumerate() {
        let last = i + 1 == segments.len();
        if let Ok(index) = segment.parse::<usize>() {
            let arr = cursor
                .as_array_mut()
                .ok_or_else(|| ConfigError::BadOverride {
                    key: key.into(),
                    reason: format!("'{segment}' indexes a non-array"),
                })?;
            if index >= arr.len() {
                return Err(ConfigError::BadOverride {
                    key: key.into(),
                    reason: format!("index {index} out of bounds (len {})", arr.len()),
                });
            }
            if last {
                arr[index] = parsed;
                return Ok(());
            }
            cursor = &mut arr[index];
        } else {
            if !cursor.is_object() {
                return Err(ConfigError::BadOverride {
                    key: key.into(),
                    reason: format!("'{segment}' indexes a non-object"),
                });
            }
            let map = cursor.as_object_mut().expect("checked above");
            if last {
                map.insert((*segment).to_string(), parsed);
                return Ok(());
            }
            cursor = map
                .entry((*segment).to_string())
                .or_insert_with(|| serde_json::Value::Object(Default::default()));
        }
    }
    Ok(())
}

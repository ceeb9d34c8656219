//! Scene artifacts: the scene JSON document, the points CSV and the plot
//! script.
//!
//! All three emitters are byte-deterministic for equal logical content: JSON
//! keys are fixed alphabetically, arrays are sorted by id, and numbers use
//! the shortest representation that round-trips.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annot::ClassLabel;
use crate::fusion::{FloorRect, Object3D};
use crate::vacancy::{LotModel, RowBand, SpotStatus, VacancyMap, VacancySpot};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SceneError {
    #[error("scene document is not valid json: {0}")]
    InvalidJson(String),
}

pub const POINTS_CSV_HEADER: &str = "kind,id,x,y,z";

/// Serialized form of the fused lot: fused objects, vacancy intervals and
/// the lot geometry needed to re-plot and re-route. Field declaration order
/// is the serialized key order (alphabetical).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneDocument {
    pub metadata: SceneMetadata,
    pub objects: Vec<SceneObject>,
    pub vacancies: Vec<SceneVacancy>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneMetadata {
    pub generator_version: String,
    pub lot_bounds: FloorRect,
    pub rows: Vec<RowBand>,
    pub spot_width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub class: ClassLabel,
    pub footprint: FloorRect,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneVacancy {
    pub row: u32,
    pub spot_id: u32,
    pub status: SpotStatus,
    pub x_hi: f64,
    pub x_lo: f64,
}

impl SceneDocument {
    pub fn build(lot: &LotModel, vmap: &VacancyMap) -> Self {
        let mut objects: Vec<SceneObject> = lot
            .pillars
            .iter()
            .chain(lot.vehicles.iter())
            .map(|r| SceneObject {
                class: r.object.class_label,
                footprint: r.object.footprint,
                x: r.object.floor_position.x,
                y: r.object.floor_position.y,
                z: r.object.z,
            })
            .collect();
        objects.sort_by(|a, b| {
            (a.class, a.x, a.y)
                .partial_cmp(&(b.class, b.x, b.y))
                .expect("scene coordinates are finite")
        });

        let mut vacancies: Vec<SceneVacancy> = vmap
            .spots
            .iter()
            .map(|s| SceneVacancy {
                row: s.row_index,
                spot_id: s.spot_id,
                status: s.status,
                x_hi: s.x_hi,
                x_lo: s.x_lo,
            })
            .collect();
        vacancies.sort_by_key(|v| v.spot_id);

        SceneDocument {
            metadata: SceneMetadata {
                generator_version: env!("CARGO_PKG_VERSION").to_string(),
                lot_bounds: lot.lot_bounds,
                rows: lot.rows.clone(),
                spot_width: lot.spot_width,
            },
            objects,
            vacancies,
        }
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, SceneError> {
        serde_json::from_slice(bytes).map_err(|e| SceneError::InvalidJson(e.to_string()))
    }

    pub fn to_json(&self) -> Vec<u8> {
        let mut bytes = serde_json::to_vec_pretty(self).expect("scene document serializes");
        bytes.push(b'\n');
        bytes
    }

    /// Vacancy map as recorded in the document, for evaluation and routing.
    pub fn vacancy_map(&self, lot_id: impl Into<String>) -> VacancyMap {
        VacancyMap {
            spots: self
                .vacancies
                .iter()
                .map(|v| VacancySpot {
                    spot_id: v.spot_id,
                    row_index: v.row,
                    x_lo: v.x_lo,
                    x_hi: v.x_hi,
                    status: v.status,
                })
                .collect(),
            generated_from: crate::vacancy::SourceStamp {
                lot_id: lot_id.into(),
                timestamp: None,
            },
        }
    }
}

/// Serialize the fused lot and vacancy map as scene JSON.
pub fn to_scene_json(lot: &LotModel, vmap: &VacancyMap) -> Vec<u8> {
    SceneDocument::build(lot, vmap).to_json()
}

/// Points table: one row per fused object and one per vacant spot center
/// (vacancies lie on the floor plane, z = 0). Rows sorted by (kind, id).
pub fn to_points_csv(lot: &LotModel, vmap: &VacancyMap) -> Vec<u8> {
    let mut rows: Vec<(String, u32, f64, f64, f64)> = Vec::new();

    let mut sorted: Vec<&Object3D> = lot
        .pillars
        .iter()
        .chain(lot.vehicles.iter())
        .map(|r| &r.object)
        .collect();
    sorted.sort_by(|a, b| {
        (a.class_label, a.floor_position.x, a.floor_position.y)
            .partial_cmp(&(b.class_label, b.floor_position.x, b.floor_position.y))
            .expect("positions are finite")
    });
    let mut per_kind: std::collections::BTreeMap<&'static str, u32> = Default::default();
    for o in sorted {
        let kind = o.class_label.as_str();
        let id = per_kind.entry(kind).or_insert(0);
        rows.push((
            kind.into(),
            *id,
            o.floor_position.x,
            o.floor_position.y,
            o.z,
        ));
        *id += 1;
    }

    for s in vmap.spots.iter().filter(|s| s.status == SpotStatus::Vacant) {
        let y = lot
            .rows
            .get(s.row_index as usize)
            .map(RowBand::center)
            .unwrap_or(0.0);
        rows.push(("vacant".into(), s.spot_id, (s.x_lo + s.x_hi) / 2.0, y, 0.0));
    }

    rows.sort_by(|a, b| (&a.0, a.1).cmp(&(&b.0, b.1)));

    let mut out = String::from(POINTS_CSV_HEADER);
    out.push('\n');
    for (kind, id, x, y, z) in rows {
        let _ = writeln!(out, "{kind},{id},{x},{y},{z}");
    }
    out.into_bytes()
}

/// Plain-text plot script: objects as 3D boxes, vacant spots as flat floor
/// rectangles. References the points CSV by relative path. Grammar:
///
/// ```text
/// points <relative-path>
/// axes x y z
/// box <class> <x_lo> <y_lo> <x_hi> <y_hi> <z>
/// flat vacant <spot_id> <x_lo> <y_lo> <x_hi> <y_hi>
/// ```
pub fn to_plot_script(scene: &SceneDocument) -> Vec<u8> {
    let mut out = String::new();
    out.push_str("# lotmap plot script v1\n");
    out.push_str("points points.csv\n");
    out.push_str("axes x y z\n");
    for o in &scene.objects {
        let f = &o.footprint;
        let _ = writeln!(
            out,
            "box {} {} {} {} {} {}",
            o.class.as_str(),
            f.x_lo,
            f.y_lo,
            f.x_hi,
            f.y_hi,
            o.z
        );
    }
    for v in scene
        .vacancies
        .iter()
        .filter(|v| v.status == SpotStatus::Vacant)
    {
        let band = scene.metadata.rows.get(v.row as usize);
        let (y_lo, y_hi) = band.map_or((0.0, 0.0), |b| (b.y_lo, b.y_hi));
        let _ = writeln!(
            out,
            "flat vacant {} {} {} {} {}",
            v.spot_id, v.x_lo, y_lo, v.x_hi, y_hi
        );
    }
    out.into_bytes()
}

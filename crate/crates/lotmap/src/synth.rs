//! Synthetic-lot oracle: ground-truth generation and per-camera annotation
//! rendering.
//!
//! The generator replaces the neural detector for verification purposes: it
//! lays out a lot with known geometry, renders each object's floor footprint
//! into every camera through the inverse homography, and optionally corrupts
//! the resulting boxes with a seeded noise model. Everything downstream of
//! detection can then be checked against the exact truth.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annot::{Annotation, BBox2D, ClassLabel};
use crate::depth::PlanarPoint;
use crate::fusion::{CameraView, FloorRect, Object3D};
use crate::ipm::{fit_homography, Correspondence, Homography, IpmError};
use crate::vacancy::{
    assign_rows, candidate_spots, extract_vacancies, LotModel, RowBand, VacancyMap,
    DEFAULT_OCCUPANCY_FRACTION,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("invalid lot spec: {field} {reason}")]
    InvalidSpec { field: &'static str, reason: String },
    #[error(transparent)]
    Ipm(#[from] IpmError),
    #[error("row assignment failed: {0}")]
    Rows(#[from] crate::vacancy::VacancyError),
}

/// Parameters of a generated lot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LotSpec {
    pub rows: u32,
    pub pillars_per_row: u32,
    pub pillar_pitch: f64,
    pub spot_width: f64,
    pub occupancy_probability: f64,
    pub seed: u64,
}

impl LotSpec {
    fn validate(&self) -> Result<(), SynthError> {
        let err =
            |field: &'static str, reason: String| Err(SynthError::InvalidSpec { field, reason });
        if self.rows < 1 {
            return err("rows", "must be at least 1".into());
        }
        if self.pillars_per_row < 1 {
            return err("pillars_per_row", "must be at least 1".into());
        }
        if !self.spot_width.is_finite() || self.spot_width <= 0.0 {
            return err(
                "spot_width",
                format!("must be positive, got {}", self.spot_width),
            );
        }
        if !self.pillar_pitch.is_finite() || self.pillar_pitch <= self.spot_width {
            return err(
                "pillar_pitch",
                format!(
                    "must exceed spot_width ({} <= {})",
                    self.pillar_pitch, self.spot_width
                ),
            );
        }
        if !(0.0..=1.0).contains(&self.occupancy_probability) {
            return err(
                "occupancy_probability",
                format!("must be in [0, 1], got {}", self.occupancy_probability),
            );
        }
        Ok(())
    }
}

/// Physical dimensions used when materializing a lot. Typical indoor-garage
/// values; override for experiments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthGeometry {
    pub pillar_size: f64,
    pub vehicle_width: f64,
    pub vehicle_depth: f64,
    pub band_height: f64,
    pub row_pitch: f64,
    pub margin: f64,
}

impl Default for SynthGeometry {
    fn default() -> Self {
        Self {
            pillar_size: 0.8,
            vehicle_width: 2.0,
            vehicle_depth: 4.5,
            band_height: 5.0,
            row_pitch: 9.0,
            margin: 4.0,
        }
    }
}

/// Detection corruption model. Jitter is Gaussian per coordinate in pixels;
/// drops and duplicates are Bernoulli per box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseModel {
    pub bbox_jitter_sigma: f64,
    pub drop_probability: f64,
    pub duplicate_probability: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            bbox_jitter_sigma: 0.0,
            drop_probability: 0.0,
            duplicate_probability: 0.0,
        }
    }
}

impl NoiseModel {
    fn validate(&self) -> Result<(), SynthError> {
        let err =
            |field: &'static str, reason: String| Err(SynthError::InvalidSpec { field, reason });
        if !self.bbox_jitter_sigma.is_finite() || self.bbox_jitter_sigma < 0.0 {
            return err("bbox_jitter_sigma", "must be non-negative".into());
        }
        for (field, p) in [
            ("drop_probability", self.drop_probability),
            ("duplicate_probability", self.duplicate_probability),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return err(field, format!("must be in [0, 1], got {p}"));
            }
        }
        Ok(())
    }
}

/// A generated ground-truth lot with its exact vacancy map.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedLot {
    pub lot: LotModel,
    pub truth: VacancyMap,
}

fn truth_object(class: ClassLabel, footprint: FloorRect) -> Object3D {
    Object3D {
        class_label: class,
        floor_position: footprint.center(),
        // Ground-truth objects have no camera; unit depth keeps invariants.
        z: 1.0,
        pixel_area: footprint.area(),
        footprint,
        source_view: 0,
    }
}

/// Generate a lot: pillars on a regular grid, each candidate spot
/// independently occupied with the configured probability. The truth
/// vacancy map is produced by running the extractor on the exact model, so
/// it is consistent by construction.
pub fn generate_lot(spec: &LotSpec) -> Result<GeneratedLot, SynthError> {
    generate_lot_with(spec, &SynthGeometry::default())
}

pub fn generate_lot_with(spec: &LotSpec, geom: &SynthGeometry) -> Result<GeneratedLot, SynthError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let p = spec.pillars_per_row as usize;
    let lot_width = 2.0 * geom.margin + geom.pillar_size + (p as f64 - 1.0) * spec.pillar_pitch;
    let lot_depth =
        2.0 * geom.margin + (f64::from(spec.rows) - 1.0) * geom.row_pitch + geom.band_height;
    let bounds = FloorRect::new(0.0, 0.0, lot_width, lot_depth);

    let mut bands = Vec::new();
    let mut objects: Vec<Object3D> = Vec::new();
    for row in 0..spec.rows {
        let band_lo = geom.margin + f64::from(row) * geom.row_pitch;
        let band = RowBand::new(band_lo, band_lo + geom.band_height);
        let row_center = band.center();
        bands.push(band);

        let mut row_pillars = Vec::new();
        for j in 0..p {
            let x_lo = geom.margin + j as f64 * spec.pillar_pitch;
            let footprint = FloorRect::new(
                x_lo,
                row_center - geom.pillar_size / 2.0,
                x_lo + geom.pillar_size,
                row_center + geom.pillar_size / 2.0,
            );
            row_pillars.push(truth_object(ClassLabel::Pillar, footprint));
        }

        let pillar_refs: Vec<&Object3D> = row_pillars.iter().collect();
        for (lo, hi) in candidate_spots(&pillar_refs, spec.spot_width) {
            if rng.random_bool(spec.occupancy_probability) {
                let cx = (lo + hi) / 2.0;
                let footprint = FloorRect::new(
                    cx - geom.vehicle_width / 2.0,
                    row_center - geom.vehicle_depth / 2.0,
                    cx + geom.vehicle_width / 2.0,
                    row_center + geom.vehicle_depth / 2.0,
                );
                objects.push(truth_object(ClassLabel::Vehicle, footprint));
            }
        }
        objects.extend(row_pillars);
    }

    let lot = assign_rows(
        objects,
        &bands,
        spec.spot_width,
        bounds,
        format!("synthetic:seed={}", spec.seed),
    )?
    .lot;
    let truth = extract_vacancies(&lot, DEFAULT_OCCUPANCY_FRACTION);
    Ok(GeneratedLot { lot, truth })
}

/// A camera of the default rig: the calibrated view plus the floor
/// correspondences it was fitted from (the same points a lot config would
/// carry).
#[derive(Debug, Clone, PartialEq)]
pub struct RigCamera {
    pub view: CameraView,
    pub correspondences: Vec<Correspondence>,
}

/// Four-camera rig covering the whole lot.
///
/// The cameras share axis orientation and differ in scale, principal offset
/// and a mild projective term, so every object is seen several times at
/// different pixel areas. Views are fitted from five floor-to-image
/// correspondences exactly like user-supplied configurations.
pub fn default_camera_rig(lot_bounds: FloorRect) -> Result<Vec<RigCamera>, SynthError> {
    const IMAGE_SIZE: u32 = 640;
    const PAD: f64 = 20.0;
    let span = lot_bounds.width().max(lot_bounds.depth()).max(1.0);

    let scale_factor = [1.0, 0.92, 0.85, 0.78];
    let pixel_shift = [(0.0, 0.0), (6.0, -4.0), (-5.0, 3.0), (2.0, 7.0)];
    let projective = [
        (0.0, 0.0),
        (1.0e-4, -8.0e-5),
        (-7.0e-5, 1.2e-4),
        (9.0e-5, 9.0e-5),
    ];
    let camera_corners = [
        (lot_bounds.x_lo - 2.0, lot_bounds.y_lo - 2.0),
        (lot_bounds.x_hi + 2.0, lot_bounds.y_lo - 2.0),
        (lot_bounds.x_lo - 2.0, lot_bounds.y_hi + 2.0),
        (lot_bounds.x_hi + 2.0, lot_bounds.y_hi + 2.0),
    ];

    let mut rig = Vec::with_capacity(4);
    for k in 0..4 {
        let s = (f64::from(IMAGE_SIZE) - 2.0 * PAD) / span * scale_factor[k];
        let (sx, sy) = pixel_shift[k];
        let tx = PAD - s * lot_bounds.x_lo + sx;
        let ty = PAD - s * lot_bounds.y_lo + sy;
        let (g, h) = projective[k];
        let floor_to_image = Homography([[s, 0.0, tx], [0.0, s, ty], [g, h, 1.0]]);

        let center = lot_bounds.center();
        let floor_points = [
            PlanarPoint::new(lot_bounds.x_lo, lot_bounds.y_lo),
            PlanarPoint::new(lot_bounds.x_hi, lot_bounds.y_lo),
            PlanarPoint::new(lot_bounds.x_hi, lot_bounds.y_hi),
            PlanarPoint::new(lot_bounds.x_lo, lot_bounds.y_hi),
            PlanarPoint::new(center.x, center.y),
        ];
        let correspondences: Vec<Correspondence> = floor_points
            .iter()
            .map(|&fp| {
                Ok(Correspondence {
                    image_point: floor_to_image.apply(fp)?,
                    floor_point: fp,
                })
            })
            .collect::<Result<_, IpmError>>()?;

        let homography = fit_homography(&correspondences)?;
        rig.push(RigCamera {
            view: CameraView {
                view_id: k as u32,
                image_width: IMAGE_SIZE,
                image_height: IMAGE_SIZE,
                homography,
                camera_floor_position: PlanarPoint::new(camera_corners[k].0, camera_corners[k].1),
            },
            correspondences,
        });
    }
    Ok(rig)
}

/// Smallest pixel extent a rendered box may have after clipping.
pub const MIN_BOX_EXTENT_PX: f64 = 4.0;

/// Render the lot into each camera as a detection annotation.
///
/// Footprint corners map through the camera's floor-to-image transform; the
/// pixel hull, clipped to the image, becomes the box. Noise draws come from
/// a stream keyed by (seed, view id), and the jitter consumes unit normals
/// that are scaled by sigma, so runs with different sigma see the same
/// underlying randomness.
pub fn render_views(
    lot: &LotModel,
    cameras: &[CameraView],
    noise: &NoiseModel,
    seed: u64,
) -> Result<Vec<Annotation>, SynthError> {
    noise.validate()?;
    let unit_normal = Normal::new(0.0, 1.0).expect("unit normal is valid");

    let mut annotations = Vec::with_capacity(cameras.len());
    for camera in cameras {
        let floor_to_image = camera.homography.inverse()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(u64::from(camera.view_id).wrapping_add(1));

        let mut boxes = Vec::new();
        for rowed in lot.pillars.iter().chain(lot.vehicles.iter()) {
            let object = &rowed.object;
            let Some(clean) = project_footprint(&floor_to_image, object, camera)? else {
                continue;
            };

            let jitter: [f64; 4] = std::array::from_fn(|_| unit_normal.sample(&mut rng));
            let dropped = rng.random_bool(noise.drop_probability);
            let duplicated = rng.random_bool(noise.duplicate_probability);

            if !dropped {
                if let Some(b) = apply_jitter(&clean, &jitter, noise.bbox_jitter_sigma, camera) {
                    boxes.push(b);
                }
            }
            if duplicated {
                // Draws stay aligned across sigma values; a dropped box
                // cannot fire twice, so its duplicate is suppressed too.
                let extra: [f64; 4] = std::array::from_fn(|_| unit_normal.sample(&mut rng));
                if !dropped {
                    if let Some(b) = apply_jitter(&clean, &extra, noise.bbox_jitter_sigma, camera) {
                        boxes.push(b);
                    }
                }
            }
        }

        let annotation = Annotation::new(
            format!("view{}.png", camera.view_id),
            camera.image_width,
            camera.image_height,
            boxes,
        )
        .expect("rendered boxes are clamped to image bounds");
        annotations.push(annotation);
    }
    Ok(annotations)
}

/// Clean (noise-free) box for one object in one camera, or None when the
/// object clips below the minimum extent.
fn project_footprint(
    floor_to_image: &Homography,
    object: &Object3D,
    camera: &CameraView,
) -> Result<Option<BBox2D>, SynthError> {
    let f = &object.footprint;
    let corners = [
        PlanarPoint::new(f.x_lo, f.y_lo),
        PlanarPoint::new(f.x_hi, f.y_lo),
        PlanarPoint::new(f.x_hi, f.y_hi),
        PlanarPoint::new(f.x_lo, f.y_hi),
    ];
    let mut xmin = f64::INFINITY;
    let mut ymin = f64::INFINITY;
    let mut xmax = f64::NEG_INFINITY;
    let mut ymax = f64::NEG_INFINITY;
    for corner in corners {
        let p = floor_to_image.apply(corner)?;
        xmin = xmin.min(p.x);
        ymin = ymin.min(p.y);
        xmax = xmax.max(p.x);
        ymax = ymax.max(p.y);
    }
    let (w, h) = (
        f64::from(camera.image_width),
        f64::from(camera.image_height),
    );
    let xmin = xmin.clamp(0.0, w);
    let xmax = xmax.clamp(0.0, w);
    let ymin = ymin.clamp(0.0, h);
    let ymax = ymax.clamp(0.0, h);
    if xmax - xmin < MIN_BOX_EXTENT_PX || ymax - ymin < MIN_BOX_EXTENT_PX {
        return Ok(None);
    }
    Ok(Some(
        BBox2D::new(object.class_label, xmin, ymin, xmax, ymax)
            .expect("clipped box has positive extent"),
    ))
}

fn apply_jitter(
    clean: &BBox2D,
    unit_draws: &[f64; 4],
    sigma: f64,
    camera: &CameraView,
) -> Option<BBox2D> {
    let (w, h) = (
        f64::from(camera.image_width),
        f64::from(camera.image_height),
    );
    let xa = clean.xmin + unit_draws[0] * sigma;
    let ya = clean.ymin + unit_draws[1] * sigma;
    let xb = clean.xmax + unit_draws[2] * sigma;
    let yb = clean.ymax + unit_draws[3] * sigma;
    let xmin = xa.min(xb).clamp(0.0, w);
    let xmax = xa.max(xb).clamp(0.0, w);
    let ymin = ya.min(yb).clamp(0.0, h);
    let ymax = ya.max(yb).clamp(0.0, h);
    if xmax - xmin < MIN_BOX_EXTENT_PX || ymax - ymin < MIN_BOX_EXTENT_PX {
        return None;
    }
    Some(BBox2D::new(clean.class_label, xmin, ymin, xmax, ymax).expect("jittered box is valid"))
}

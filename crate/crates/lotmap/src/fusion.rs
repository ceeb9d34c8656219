//! Projection of per-view detections onto the lot floor and merging of the
//! camera views.
//!
//! Overlap between views is resolved by duplicate clustering: same-class
//! footprints whose IoU reaches the threshold are considered the same
//! physical object, and within each cluster only the detection with the
//! largest pixel area survives — the larger image means the closer, better
//! resolved view.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annot::{BBox2D, ClassLabel};
use crate::depth::{
    area_depth, bbox_area, euclidean_distance, inverse_depth, DepthMethod, PlanarPoint,
};
use crate::ipm::{Homography, IpmError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FusionError {
    #[error(transparent)]
    Ipm(#[from] IpmError),
    #[error("invalid depth input: {0}")]
    Depth(#[from] crate::depth::DepthError),
}

/// One calibrated camera: image dimensions plus the image-to-floor
/// homography and the camera's own position on the floor plane.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraView {
    pub view_id: u32,
    pub image_width: u32,
    pub image_height: u32,
    pub homography: Homography,
    pub camera_floor_position: PlanarPoint,
}

/// Axis-aligned rectangle on the lot floor. Fields are declared in the
/// serialized (alphabetical) key order; use [`FloorRect::new`] to construct.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FloorRect {
    pub x_hi: f64,
    pub x_lo: f64,
    pub y_hi: f64,
    pub y_lo: f64,
}

impl FloorRect {
    pub fn new(x_lo: f64, y_lo: f64, x_hi: f64, y_hi: f64) -> Self {
        Self {
            x_hi,
            x_lo,
            y_hi,
            y_lo,
        }
    }

    pub fn width(&self) -> f64 {
        self.x_hi - self.x_lo
    }

    pub fn depth(&self) -> f64 {
        self.y_hi - self.y_lo
    }

    pub fn area(&self) -> f64 {
        self.width().max(0.0) * self.depth().max(0.0)
    }

    pub fn center(&self) -> PlanarPoint {
        PlanarPoint::new((self.x_lo + self.x_hi) / 2.0, (self.y_lo + self.y_hi) / 2.0)
    }

    pub fn contains(&self, p: PlanarPoint) -> bool {
        p.x >= self.x_lo && p.x <= self.x_hi && p.y >= self.y_lo && p.y <= self.y_hi
    }

    pub fn intersection(&self, other: &FloorRect) -> Option<FloorRect> {
        let x_lo = self.x_lo.max(other.x_lo);
        let y_lo = self.y_lo.max(other.y_lo);
        let x_hi = self.x_hi.min(other.x_hi);
        let y_hi = self.y_hi.min(other.y_hi);
        (x_lo < x_hi && y_lo < y_hi).then(|| FloorRect::new(x_lo, y_lo, x_hi, y_hi))
    }

    /// Overlap of the two x-extents, zero when disjoint.
    pub fn x_overlap(&self, x_lo: f64, x_hi: f64) -> f64 {
        (self.x_hi.min(x_hi) - self.x_lo.max(x_lo)).max(0.0)
    }
}

/// A fused lot-frame object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Object3D {
    pub class_label: ClassLabel,
    pub floor_position: PlanarPoint,
    /// Depth proxy from the source view, strictly positive.
    pub z: f64,
    /// Bounding-box area in the source image, pixels squared.
    pub pixel_area: f64,
    pub footprint: FloorRect,
    pub source_view: u32,
}

/// Fusion tuning: duplicate threshold and the modeled footprint depth per
/// class (IPM of a 2D box yields only a ground segment, so the across-lane
/// extent has to be modeled).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusionParams {
    #[serde(default = "default_iou_threshold")]
    pub iou_threshold: f64,
    #[serde(default = "default_vehicle_depth")]
    pub vehicle_depth: f64,
    #[serde(default = "default_pillar_depth")]
    pub pillar_depth: f64,
}

fn default_iou_threshold() -> f64 {
    0.5
}
fn default_vehicle_depth() -> f64 {
    4.5
}
fn default_pillar_depth() -> f64 {
    0.8
}

impl Default for FusionParams {
    fn default() -> Self {
        Self {
            iou_threshold: default_iou_threshold(),
            vehicle_depth: default_vehicle_depth(),
            pillar_depth: default_pillar_depth(),
        }
    }
}

/// Project one detection onto the lot floor.
///
/// The box's bottom-center is taken as the object's floor contact point; the
/// two bottom corners span the footprint's x-extent and the configured class
/// depth widens it symmetrically across the lane direction. The depth value
/// comes from the inverse distance between the contact point and the camera
/// (centroid mode) or the inverse pixel area (area mode).
pub fn project_object(
    view: &CameraView,
    bbox: &BBox2D,
    depth_mode: DepthMethod,
    params: &FusionParams,
) -> Result<Object3D, FusionError> {
    let h = &view.homography;
    let bottom_center = PlanarPoint::new((bbox.xmin + bbox.xmax) / 2.0, bbox.ymax);
    let floor_position = h.apply(bottom_center)?;
    let corner_l = h.apply(PlanarPoint::new(bbox.xmin, bbox.ymax))?;
    let corner_r = h.apply(PlanarPoint::new(bbox.xmax, bbox.ymax))?;

    let modeled_depth = match bbox.class_label {
        ClassLabel::Vehicle => params.vehicle_depth,
        ClassLabel::Pillar => params.pillar_depth,
    };
    let footprint = widen_footprint(corner_l, corner_r, floor_position, modeled_depth);

    let pixel_area = bbox_area(bbox);
    let z = match depth_mode {
        DepthMethod::CentroidInverse => {
            let d = euclidean_distance(floor_position, view.camera_floor_position);
            inverse_depth(d)?.value
        }
        DepthMethod::AreaInverse => area_depth(pixel_area)?.value,
    };

    Ok(Object3D {
        class_label: bbox.class_label,
        floor_position,
        z,
        pixel_area,
        footprint,
        source_view: view.view_id,
    })
}

/// Hull of the projected bottom edge and contact point, widened across the
/// lane direction to the modeled depth. Always contains `position` and keeps
/// strictly positive extent even when the bottom edge projects onto a
/// vertical floor segment.
fn widen_footprint(
    corner_l: PlanarPoint,
    corner_r: PlanarPoint,
    position: PlanarPoint,
    modeled_depth: f64,
) -> FloorRect {
    const MIN_WIDTH: f64 = 1e-9;
    let mut x_lo = corner_l.x.min(corner_r.x).min(position.x);
    let mut x_hi = corner_l.x.max(corner_r.x).max(position.x);
    if x_hi - x_lo < MIN_WIDTH {
        let cx = (x_lo + x_hi) / 2.0;
        x_lo = cx - MIN_WIDTH / 2.0;
        x_hi = cx + MIN_WIDTH / 2.0;
    }
    let y_lo = corner_l.y.min(corner_r.y).min(position.y);
    let y_hi = corner_l.y.max(corner_r.y).max(position.y);
    let cy = (y_lo + y_hi) / 2.0;
    let half = modeled_depth / 2.0;
    FloorRect::new(x_lo, y_lo.min(cy - half), x_hi, y_hi.max(cy + half))
}

/// Intersection over union of two footprints. Symmetric, in [0, 1].
pub fn footprint_iou(a: &FloorRect, b: &FloorRect) -> f64 {
    let inter = a.intersection(b).map_or(0.0, |r| r.area());
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        return 0.0;
    }
    inter / union
}

/// Merge per-view object lists into one canonical list.
///
/// Same-class pairs with footprint IoU at or above the threshold are
/// duplicates; clusters are their transitive closure. Each cluster keeps
/// exactly the object with the largest pixel area (ties: lowest view id,
/// then lowest floor x). The result is sorted by (class, floor x, floor y)
/// so the output is independent of view order.
pub fn fuse_views(per_view_objects: &[Vec<Object3D>], iou_threshold: f64) -> Vec<Object3D> {
    debug_assert!(iou_threshold > 0.0 && iou_threshold <= 1.0);
    let objects: Vec<&Object3D> = per_view_objects.iter().flatten().collect();
    let n = objects.len();

    // Union-find over object indices.
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], i: usize) -> usize {
        let mut root = i;
        while parent[root] != root {
            root = parent[root];
        }
        let mut cur = i;
        while parent[cur] != root {
            let next = parent[cur];
            parent[cur] = root;
            cur = next;
        }
        root
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if objects[i].class_label == objects[j].class_label
                && footprint_iou(&objects[i].footprint, &objects[j].footprint) >= iou_threshold
            {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[ri.max(rj)] = ri.min(rj);
                }
            }
        }
    }

    let mut winner_of_cluster: Vec<Option<usize>> = vec![None; n];
    for i in 0..n {
        let root = find(&mut parent, i);
        match winner_of_cluster[root] {
            None => winner_of_cluster[root] = Some(i),
            Some(best) => {
                if better_duplicate(objects[i], objects[best]) {
                    winner_of_cluster[root] = Some(i);
                }
            }
        }
    }

    let mut fused: Vec<Object3D> = winner_of_cluster
        .into_iter()
        .flatten()
        .map(|i| objects[i].clone())
        .collect();
    fused.sort_by(|a, b| {
        (a.class_label, a.floor_position.x, a.floor_position.y)
            .partial_cmp(&(b.class_label, b.floor_position.x, b.floor_position.y))
            .expect("floor positions are finite")
    });
    fused
}

fn better_duplicate(candidate: &Object3D, incumbent: &Object3D) -> bool {
    let key = |o: &Object3D| {
        (
            std::cmp::Reverse(ordered(o.pixel_area)),
            o.source_view,
            ordered(o.floor_position.x),
        )
    };
    key(candidate) < key(incumbent)
}

fn ordered(v: f64) -> OrderedF64 {
    OrderedF64(v)
}

#[derive(PartialEq)]
struct OrderedF64(f64);

impl Eq for OrderedF64 {}

impl PartialOrd for OrderedF64 {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for OrderedF64 {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn view(view_id: u32, h: Homography, camera: PlanarPoint) -> CameraView {
        CameraView {
            view_id,
            image_width: 640,
            image_height: 640,
            homography: h,
            camera_floor_position: camera,
        }
    }

    fn vehicle_box(xmin: f64, ymin: f64, xmax: f64, ymax: f64) -> BBox2D {
        BBox2D::new(ClassLabel::Vehicle, xmin, ymin, xmax, ymax).unwrap()
    }

    fn obj(class: ClassLabel, fp: FloorRect, area: f64, view: u32) -> Object3D {
        Object3D {
            class_label: class,
            floor_position: fp.center(),
            z: 1.0,
            pixel_area: area,
            footprint: fp,
            source_view: view,
        }
    }

    #[test]
    fn project_identity_centroid_depth() {
        let v = view(0, Homography::IDENTITY, PlanarPoint::ORIGIN);
        let o = project_object(
            &v,
            &vehicle_box(2.0, 2.0, 4.0, 6.0),
            DepthMethod::CentroidInverse,
            &FusionParams::default(),
        )
        .unwrap();
        assert_eq!(o.floor_position, PlanarPoint::new(3.0, 6.0));
        assert_relative_eq!(o.z, 1.0 / 45.0f64.sqrt(), max_relative = 1e-12);
        assert!(o.footprint.contains(o.floor_position));
        assert_eq!(o.pixel_area, 8.0);
    }

    #[test]
    fn project_identity_area_depth() {
        let v = view(0, Homography::IDENTITY, PlanarPoint::ORIGIN);
        let o = project_object(
            &v,
            &vehicle_box(0.0, 0.0, 2.0, 4.0),
            DepthMethod::AreaInverse,
            &FusionParams::default(),
        )
        .unwrap();
        assert_eq!(o.z, 0.125);
    }

    #[test]
    fn project_footprint_spans_bottom_corners_and_modeled_depth() {
        let v = view(0, Homography::IDENTITY, PlanarPoint::ORIGIN);
        let o = project_object(
            &v,
            &vehicle_box(2.0, 2.0, 4.0, 6.0),
            DepthMethod::CentroidInverse,
            &FusionParams::default(),
        )
        .unwrap();
        assert_eq!((o.footprint.x_lo, o.footprint.x_hi), (2.0, 4.0));
        assert_relative_eq!(o.footprint.depth(), 4.5, max_relative = 1e-12);
    }

    #[test]
    fn project_through_calibrated_homography_matches_oracle() {
        // Fit a non-trivial H from correspondences, then check the projected
        // contact point against explicit matrix-vector arithmetic.
        let truth = Homography([
            [0.08, 0.004, -3.0],
            [-0.002, 0.075, 1.5],
            [1e-4, -2e-4, 1.0],
        ]);
        let correspondences: Vec<crate::ipm::Correspondence> = [
            (40.0, 30.0),
            (600.0, 25.0),
            (610.0, 580.0),
            (35.0, 560.0),
            (320.0, 300.0),
        ]
        .iter()
        .map(|&(x, y)| {
            let p = PlanarPoint::new(x, y);
            crate::ipm::Correspondence {
                image_point: p,
                floor_point: truth.apply(p).unwrap(),
            }
        })
        .collect();
        let fitted = crate::ipm::fit_homography(&correspondences).unwrap();
        let v = view(2, fitted, PlanarPoint::new(-1.0, -1.0));

        let bbox = vehicle_box(100.0, 200.0, 180.0, 330.0);
        let o = project_object(
            &v,
            &bbox,
            DepthMethod::CentroidInverse,
            &FusionParams::default(),
        )
        .unwrap();

        let m = &v.homography.0;
        let (bx, by) = (140.0, 330.0);
        let w = m[2][0] * bx + m[2][1] * by + m[2][2];
        let expected_x = (m[0][0] * bx + m[0][1] * by + m[0][2]) / w;
        let expected_y = (m[1][0] * bx + m[1][1] * by + m[1][2]) / w;
        assert!((o.floor_position.x - expected_x).abs() < 1e-6);
        assert!((o.floor_position.y - expected_y).abs() < 1e-6);
    }

    #[test]
    fn iou_identical_disjoint_partial() {
        let a = FloorRect::new(0.0, 0.0, 2.0, 2.0);
        assert_eq!(footprint_iou(&a, &a), 1.0);
        let b = FloorRect::new(5.0, 5.0, 6.0, 6.0);
        assert_eq!(footprint_iou(&a, &b), 0.0);
        let c = FloorRect::new(1.0, 0.0, 3.0, 2.0);
        assert_relative_eq!(footprint_iou(&a, &c), 1.0 / 3.0, max_relative = 1e-12);
    }

    #[test]
    fn fuse_keeps_larger_area() {
        let fp = FloorRect::new(0.0, 0.0, 2.0, 4.0);
        let fused = fuse_views(
            &[
                vec![obj(ClassLabel::Vehicle, fp, 400.0, 0)],
                vec![obj(ClassLabel::Vehicle, fp, 900.0, 1)],
            ],
            0.5,
        );
        assert_eq!(fused.len(), 1);
        assert_eq!(fused[0].source_view, 1);
        assert_eq!(fused[0].pixel_area, 900.0);
    }

    #[test]
    fn fuse_keeps_disjoint_objects() {
        let fused = fuse_views(
            &[
                vec![obj(
                    ClassLabel::Vehicle,
                    FloorRect::new(0.0, 0.0, 2.0, 4.0),
                    100.0,
                    0,
                )],
                vec![obj(
                    ClassLabel::Vehicle,
                    FloorRect::new(10.0, 0.0, 12.0, 4.0),
                    100.0,
                    1,
                )],
            ],
            0.5,
        );
        assert_eq!(fused.len(), 2);
    }

    #[test]
    fn fuse_tie_breaks_by_lowest_view() {
        let fp = FloorRect::new(0.0, 0.0, 2.0, 4.0);
        let fused = fuse_views(
            &[
                vec![obj(ClassLabel::Vehicle, fp, 500.0, 3)],
                vec![obj(ClassLabel::Vehicle, fp, 500.0, 1)],
            ],
            0.5,
        );
        assert_eq!(fused.len(), 1);
        assert_eq!(fused[0].source_view, 1);
    }

    #[test]
    fn fuse_does_not_merge_across_classes() {
        let fp = FloorRect::new(0.0, 0.0, 2.0, 2.0);
        let fused = fuse_views(
            &[
                vec![obj(ClassLabel::Vehicle, fp, 100.0, 0)],
                vec![obj(ClassLabel::Pillar, fp, 100.0, 1)],
            ],
            0.5,
        );
        assert_eq!(fused.len(), 2);
    }

    #[test]
    fn fuse_transitive_chain_collapses_to_one() {
        // a overlaps b, b overlaps c, a and c barely overlap: one cluster.
        let a = FloorRect::new(0.0, 0.0, 2.0, 2.0);
        let b = FloorRect::new(0.8, 0.0, 2.8, 2.0);
        let c = FloorRect::new(1.6, 0.0, 3.6, 2.0);
        let fused = fuse_views(
            &[vec![
                obj(ClassLabel::Vehicle, a, 10.0, 0),
                obj(ClassLabel::Vehicle, b, 30.0, 0),
                obj(ClassLabel::Vehicle, c, 20.0, 0),
            ]],
            0.4,
        );
        assert_eq!(fused.len(), 1);
        assert_eq!(fused[0].pixel_area, 30.0);
    }
}

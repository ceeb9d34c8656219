//! Depth proxies computed from 2D bounding boxes.
//!
//! Two estimators are provided: the inverse of the Euclidean distance between
//! a representative point and the camera origin, and the inverse of the box
//! area. Both produce ordinal depth values, not metric distances. The
//! comparator in [`compare_depth_methods`] evaluates both side by side for a
//! pair of boxes and classifies the configuration by which of the two source
//! quantities agree.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annot::BBox2D;

/// Distances and areas below this floor are clamped before inversion so the
/// resulting depth stays finite for degenerate inputs (an object centered on
/// the camera origin).
pub const EPSILON_FLOOR: f64 = 1e-6;

/// Relative tolerance for the equal-distance / equal-area classification in
/// [`compare_depth_methods`]. The pipeline feeding it is pure arithmetic, so
/// the tolerance only has to absorb floating-point noise.
pub const COMPARE_REL_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DepthError {
    #[error("distance is not a finite non-negative number: {0}")]
    NonFiniteInput(f64),
    #[error("area must be positive, got {0}")]
    NonPositiveArea(f64),
}

/// A point on a plane: image pixels or lot-floor ground units depending on
/// context. The operations in this module are unit-agnostic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanarPoint {
    pub x: f64,
    pub y: f64,
}

impl PlanarPoint {
    pub const ORIGIN: PlanarPoint = PlanarPoint { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }
}

/// Which quantity was inverted to produce a depth value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DepthMethod {
    /// z = 1 / D where D is the Euclidean distance to the camera origin.
    CentroidInverse,
    /// z = 1 / A where A is the bounding-box area.
    AreaInverse,
}

/// A computed depth value together with the quantity it was derived from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepthEstimate {
    pub method: DepthMethod,
    /// The inverted quantity, strictly positive.
    pub value: f64,
    /// The distance or area that was actually inverted (after clamping).
    pub source_quantity: f64,
    /// True when the input fell below [`EPSILON_FLOOR`] and was clamped.
    pub clamped: bool,
}

/// How the representative point of a box is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CentroidMode {
    /// Geometric center: ((xmin+xmax)/2, (ymin+ymax)/2). The default.
    Midpoint,
    /// Half-extents: ((xmax-xmin)/2, (ymax-ymin)/2). Kept for fidelity
    /// experiments; for boxes not anchored at the origin this point can lie
    /// outside the box.
    HalfExtent,
}

/// Representative point of a bounding box under the given mode.
pub fn centroid(bbox: &BBox2D, mode: CentroidMode) -> PlanarPoint {
    match mode {
        CentroidMode::Midpoint => {
            PlanarPoint::new((bbox.xmin + bbox.xmax) / 2.0, (bbox.ymin + bbox.ymax) / 2.0)
        }
        CentroidMode::HalfExtent => {
            PlanarPoint::new((bbox.xmax - bbox.xmin) / 2.0, (bbox.ymax - bbox.ymin) / 2.0)
        }
    }
}

pub fn euclidean_distance(p: PlanarPoint, origin: PlanarPoint) -> f64 {
    let dx = p.x - origin.x;
    let dy = p.y - origin.y;
    (dx * dx + dy * dy).sqrt()
}

/// Depth from inverse distance: z = 1 / max(d, epsilon floor).
///
/// Strictly decreasing in `d` for d >= [`EPSILON_FLOOR`]; the value is always
/// positive and finite.
pub fn inverse_depth(d: f64) -> Result<DepthEstimate, DepthError> {
    if !d.is_finite() || d < 0.0 {
        return Err(DepthError::NonFiniteInput(d));
    }
    let clamped = d < EPSILON_FLOOR;
    let source = if clamped { EPSILON_FLOOR } else { d };
    Ok(DepthEstimate {
        method: DepthMethod::CentroidInverse,
        value: 1.0 / source,
        source_quantity: source,
        clamped,
    })
}

/// Area of a bounding box, positive for any valid box.
pub fn bbox_area(bbox: &BBox2D) -> f64 {
    (bbox.xmax - bbox.xmin) * (bbox.ymax - bbox.ymin)
}

/// Depth from inverse area: z' = 1 / max(a, epsilon floor).
pub fn area_depth(a: f64) -> Result<DepthEstimate, DepthError> {
    if !a.is_finite() || a <= 0.0 {
        return Err(DepthError::NonPositiveArea(a));
    }
    let clamped = a < EPSILON_FLOOR;
    let source = if clamped { EPSILON_FLOOR } else { a };
    Ok(DepthEstimate {
        method: DepthMethod::AreaInverse,
        value: 1.0 / source,
        source_quantity: source,
        clamped,
    })
}

/// Classification of a two-box configuration by which source quantities agree.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DepthComparisonCase {
    /// Equal centroid distances, unequal areas: the distance method assigns
    /// equal depths while the area method separates the boxes.
    EqualDistanceUnequalArea,
    /// Equal areas, unequal centroid distances: the area method assigns equal
    /// depths while the distance method separates the boxes.
    EqualAreaUnequalDistance,
    Other,
}

/// Side-by-side evaluation of both depth methods for a pair of boxes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DepthComparison {
    pub distance_a: f64,
    pub distance_b: f64,
    pub centroid_depth_a: f64,
    pub centroid_depth_b: f64,
    pub area_a: f64,
    pub area_b: f64,
    pub area_depth_a: f64,
    pub area_depth_b: f64,
    pub case: DepthComparisonCase,
}

fn rel_eq(a: f64, b: f64) -> bool {
    let diff = (a - b).abs();
    diff == 0.0 || diff <= COMPARE_REL_TOL * a.abs().max(b.abs())
}

/// Compare both depth methods for two boxes, measuring distances from
/// `origin` to the midpoint centroids.
///
/// The case classification reports which source quantity agrees between the
/// boxes; it takes no side on which method is preferable.
pub fn compare_depth_methods(
    box_a: &BBox2D,
    box_b: &BBox2D,
    origin: PlanarPoint,
) -> DepthComparison {
    let d_a = euclidean_distance(centroid(box_a, CentroidMode::Midpoint), origin);
    let d_b = euclidean_distance(centroid(box_b, CentroidMode::Midpoint), origin);
    let a_a = bbox_area(box_a);
    let a_b = bbox_area(box_b);

    let equal_distance = rel_eq(d_a, d_b);
    let equal_area = rel_eq(a_a, a_b);
    let case = match (equal_distance, equal_area) {
        (true, false) => DepthComparisonCase::EqualDistanceUnequalArea,
        (false, true) => DepthComparisonCase::EqualAreaUnequalDistance,
        _ => DepthComparisonCase::Other,
    };

    // Clamped inversion keeps both depths finite even for degenerate boxes.
    let z = |d: f64| 1.0 / d.max(EPSILON_FLOOR);
    DepthComparison {
        distance_a: d_a,
        distance_b: d_b,
        centroid_depth_a: z(d_a),
        centroid_depth_b: z(d_b),
        area_a: a_a,
        area_b: a_b,
        area_depth_a: z(a_a),
        area_depth_b: z(a_b),
        case,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annot::ClassLabel;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn vbox(xmin: f64, ymin: f64, xmax: f64, ymax: f64) -> BBox2D {
        BBox2D::new(ClassLabel::Vehicle, xmin, ymin, xmax, ymax).unwrap()
    }

    #[test]
    fn centroid_midpoint_is_arithmetic_mean() {
        let c = centroid(&vbox(2.0, 2.0, 4.0, 6.0), CentroidMode::Midpoint);
        assert_eq!(c, PlanarPoint::new(3.0, 4.0));
    }

    #[test]
    fn centroid_half_extent_mode() {
        let c = centroid(&vbox(2.0, 2.0, 4.0, 6.0), CentroidMode::HalfExtent);
        assert_eq!(c, PlanarPoint::new(1.0, 2.0));
    }

    #[test]
    fn centroid_modes_agree_for_origin_anchored_box() {
        let b = vbox(0.0, 0.0, 10.0, 10.0);
        assert_eq!(
            centroid(&b, CentroidMode::Midpoint),
            PlanarPoint::new(5.0, 5.0)
        );
        assert_eq!(
            centroid(&b, CentroidMode::HalfExtent),
            PlanarPoint::new(5.0, 5.0)
        );
    }

    #[test]
    fn distance_three_four_five() {
        assert_eq!(
            euclidean_distance(PlanarPoint::new(3.0, 4.0), PlanarPoint::ORIGIN),
            5.0
        );
        assert_eq!(
            euclidean_distance(PlanarPoint::new(-3.0, -4.0), PlanarPoint::ORIGIN),
            5.0
        );
    }

    #[test]
    fn distance_to_self_is_zero() {
        let p = PlanarPoint::new(1.5, -2.5);
        assert_eq!(euclidean_distance(p, p), 0.0);
    }

    #[test]
    fn inverse_depth_reciprocal() {
        assert_eq!(inverse_depth(5.0).unwrap().value, 0.2);
        assert_eq!(inverse_depth(0.2).unwrap().value, 5.0);
    }

    #[test]
    fn inverse_depth_clamps_zero_distance() {
        let z = inverse_depth(0.0).unwrap();
        assert!(z.clamped);
        assert_eq!(z.value, 1.0 / EPSILON_FLOOR);
        assert_eq!(z.source_quantity, EPSILON_FLOOR);
    }

    #[test]
    fn inverse_depth_rejects_non_finite() {
        assert!(matches!(
            inverse_depth(f64::NAN),
            Err(DepthError::NonFiniteInput(_))
        ));
        assert!(matches!(
            inverse_depth(-1.0),
            Err(DepthError::NonFiniteInput(_))
        ));
    }

    #[test]
    fn area_of_boxes() {
        assert_eq!(bbox_area(&vbox(0.0, 0.0, 2.0, 4.0)), 8.0);
        assert_eq!(bbox_area(&vbox(0.0, 0.0, 1.0, 1.0)), 1.0);
        // Translation invariance.
        assert_eq!(bbox_area(&vbox(2.0, 2.0, 4.0, 6.0)), 8.0);
    }

    #[test]
    fn area_depth_values() {
        assert_eq!(area_depth(8.0).unwrap().value, 0.125);
        assert_eq!(area_depth(1.0).unwrap().value, 1.0);
        assert!(matches!(
            area_depth(0.0),
            Err(DepthError::NonPositiveArea(_))
        ));
    }

    #[test]
    fn estimate_value_is_exact_reciprocal_of_source() {
        for d in [0.3, 1.0, 17.25, 4096.0] {
            let e = inverse_depth(d).unwrap();
            assert_relative_eq!(e.value * e.source_quantity, 1.0, max_relative = 1e-12);
        }
    }

    #[test]
    fn comparison_equal_distance_unequal_area() {
        // Same midpoint centroid (4,1), areas 4 vs 8.
        let a = vbox(3.0, 0.0, 5.0, 2.0);
        let b = vbox(3.0, -1.0, 5.0, 3.0);
        let r = compare_depth_methods(&a, &b, PlanarPoint::ORIGIN);
        assert_eq!(r.case, DepthComparisonCase::EqualDistanceUnequalArea);
        assert_eq!(r.centroid_depth_a, r.centroid_depth_b);
        assert_eq!(r.area_depth_a, 0.25);
        assert_eq!(r.area_depth_b, 0.125);
    }

    #[test]
    fn comparison_equal_area_unequal_distance() {
        // Both area 4; centroids (4,1) and (7,1).
        let a = vbox(3.0, 0.0, 5.0, 2.0);
        let b = vbox(6.0, 0.0, 8.0, 2.0);
        let r = compare_depth_methods(&a, &b, PlanarPoint::ORIGIN);
        assert_eq!(r.case, DepthComparisonCase::EqualAreaUnequalDistance);
        assert_eq!(r.area_depth_a, 0.25);
        assert_eq!(r.area_depth_b, 0.25);
        assert_ne!(r.centroid_depth_a, r.centroid_depth_b);
    }

    #[test]
    fn comparison_degenerate_equal_equal_is_other() {
        // Centroids (4,1) and (1,4): both at distance sqrt(17); both area 4.
        let a = vbox(3.0, 0.0, 5.0, 2.0);
        let b = vbox(0.0, 3.0, 2.0, 5.0);
        let r = compare_depth_methods(&a, &b, PlanarPoint::ORIGIN);
        assert_eq!(r.case, DepthComparisonCase::Other);
    }

    proptest! {
        // Strictly decreasing depth above the clamp floor.
        #[test]
        fn monotone_in_distance(d1 in 1e-6..1e6f64, delta in 1e-6..1e6f64) {
            let d2 = d1 + delta;
            let z1 = inverse_depth(d1).unwrap().value;
            let z2 = inverse_depth(d2).unwrap().value;
            prop_assert!(z1 > z2);
        }

        #[test]
        fn area_translation_invariant(
            x in -1e3..1e3f64, y in -1e3..1e3f64,
            w in 0.1..1e3f64, h in 0.1..1e3f64,
            dx in -1e3..1e3f64, dy in -1e3..1e3f64,
        ) {
            let a = BBox2D::new(ClassLabel::Vehicle, x, y, x + w, y + h).unwrap();
            let b = BBox2D::new(ClassLabel::Vehicle, x + dx, y + dy, x + dx + w, y + dy + h).unwrap();
            prop_assert!((bbox_area(&a) - bbox_area(&b)).abs() <= 1e-9 * bbox_area(&a).abs());
        }

        // Midpoint centroid commutes with translation.
        #[test]
        fn centroid_translation_equivariant(
            x in -1e3..1e3f64, y in -1e3..1e3f64,
            w in 0.1..1e3f64, h in 0.1..1e3f64,
            dx in -1e3..1e3f64, dy in -1e3..1e3f64,
        ) {
            let a = BBox2D::new(ClassLabel::Vehicle, x, y, x + w, y + h).unwrap();
            let b = BBox2D::new(ClassLabel::Vehicle, x + dx, y + dy, x + dx + w, y + dy + h).unwrap();
            let ca = centroid(&a, CentroidMode::Midpoint);
            let cb = centroid(&b, CentroidMode::Midpoint);
            prop_assert!((cb.x - (ca.x + dx)).abs() < 1e-9);
            prop_assert!((cb.y - (ca.y + dy)).abs() < 1e-9);
        }
    }
}

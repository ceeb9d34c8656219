//! Vacant-spot extraction: gap division between pillars and occupancy
//! classification against vehicle footprints.
//!
//! Rows are configuration-supplied y-bands. Within each row, the space
//! between consecutive pillars is divided into spots of exactly the
//! configured width, laid left to right; leftover slack accumulates at the
//! right end of the gap. A spot is occupied when some vehicle's x-overlap
//! with it reaches the occupancy fraction of the spot width.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fusion::{FloorRect, Object3D};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VacancyError {
    #[error("row bands {0} and {1} overlap")]
    OverlappingRowBands(usize, usize),
    #[error("row band {index} is empty (y_lo {y_lo} >= y_hi {y_hi})")]
    EmptyRowBand { index: usize, y_lo: f64, y_hi: f64 },
}

/// Fraction of the spot width a vehicle must cover for the spot to count as
/// occupied. Tolerates bounding-box jitter while catching straddlers.
pub const DEFAULT_OCCUPANCY_FRACTION: f64 = 0.2;

/// Y-interval of one parking row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RowBand {
    pub y_lo: f64,
    pub y_hi: f64,
}

impl RowBand {
    pub fn new(y_lo: f64, y_hi: f64) -> Self {
        Self { y_lo, y_hi }
    }

    pub fn contains(&self, y: f64) -> bool {
        y >= self.y_lo && y <= self.y_hi
    }

    pub fn center(&self) -> f64 {
        (self.y_lo + self.y_hi) / 2.0
    }
}

/// An object assigned to a parking row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowedObject {
    pub row: usize,
    pub object: Object3D,
}

/// The fused lot: row bands plus pillars and vehicles assigned to them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LotModel {
    pub lot_id: String,
    pub spot_width: f64,
    pub lot_bounds: FloorRect,
    pub rows: Vec<RowBand>,
    /// Sorted by (row, footprint x_lo).
    pub pillars: Vec<RowedObject>,
    pub vehicles: Vec<RowedObject>,
}

impl LotModel {
    pub fn pillars_in_row(&self, row: usize) -> impl Iterator<Item = &Object3D> {
        self.pillars
            .iter()
            .filter(move |p| p.row == row)
            .map(|p| &p.object)
    }

    pub fn vehicles_in_row(&self, row: usize) -> impl Iterator<Item = &Object3D> {
        self.vehicles
            .iter()
            .filter(move |v| v.row == row)
            .map(|v| &v.object)
    }
}

/// Row assignment outcome: the assembled model plus objects that fell
/// outside every band.
#[derive(Debug, Clone, PartialEq)]
pub struct RowAssignment {
    pub lot: LotModel,
    pub unassigned: Vec<Object3D>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpotStatus {
    Vacant,
    Occupied,
}

/// One candidate parking interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VacancySpot {
    pub spot_id: u32,
    pub row_index: u32,
    pub x_lo: f64,
    pub x_hi: f64,
    pub status: SpotStatus,
}

/// Where a vacancy map came from. The timestamp is optional so emitters can
/// stay byte-deterministic when reproducibility matters more than provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceStamp {
    pub lot_id: String,
    pub timestamp: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VacancyMap {
    pub spots: Vec<VacancySpot>,
    pub generated_from: SourceStamp,
}

impl VacancyMap {
    pub fn vacant_count(&self) -> usize {
        self.spots
            .iter()
            .filter(|s| s.status == SpotStatus::Vacant)
            .count()
    }

    pub fn occupied_count(&self) -> usize {
        self.spots.len() - self.vacant_count()
    }
}

/// Assign fused objects to row bands by their floor position.
///
/// Footprints are intersected with the lot bounds; objects whose position
/// lies outside every band (or whose footprint leaves the bounds entirely)
/// are reported unassigned. Pillars are sorted by x within each row.
pub fn assign_rows(
    objects: Vec<Object3D>,
    row_bands: &[RowBand],
    spot_width: f64,
    lot_bounds: FloorRect,
    lot_id: impl Into<String>,
) -> Result<RowAssignment, VacancyError> {
    for (i, band) in row_bands.iter().enumerate() {
        if band.y_lo >= band.y_hi {
            return Err(VacancyError::EmptyRowBand {
                index: i,
                y_lo: band.y_lo,
                y_hi: band.y_hi,
            });
        }
        for (j, other) in row_bands.iter().enumerate().skip(i + 1) {
            if band.y_lo <= other.y_hi && other.y_lo <= band.y_hi {
                return Err(VacancyError::OverlappingRowBands(i, j));
            }
        }
    }

    let mut pillars = Vec::new();
    let mut vehicles = Vec::new();
    let mut unassigned = Vec::new();
    for mut object in objects {
        let row = row_bands
            .iter()
            .position(|band| band.contains(object.floor_position.y));
        let clipped = object.footprint.intersection(&lot_bounds);
        match (row, clipped) {
            (Some(row), Some(footprint)) => {
                object.footprint = footprint;
                match object.class_label {
                    crate::annot::ClassLabel::Pillar => pillars.push(RowedObject { row, object }),
                    crate::annot::ClassLabel::Vehicle => vehicles.push(RowedObject { row, object }),
                }
            }
            _ => unassigned.push(object),
        }
    }
    let by_row_x = |a: &RowedObject, b: &RowedObject| {
        (a.row, a.object.footprint.x_lo)
            .partial_cmp(&(b.row, b.object.footprint.x_lo))
            .expect("footprints are finite")
    };
    pillars.sort_by(by_row_x);
    vehicles.sort_by(by_row_x);

    Ok(RowAssignment {
        lot: LotModel {
            lot_id: lot_id.into(),
            spot_width,
            lot_bounds,
            rows: row_bands.to_vec(),
            pillars,
            vehicles,
        },
        unassigned,
    })
}

/// Number of whole spots of `spot_width` that fit into `gap`.
///
/// Equivalent to repeated subtraction of the width; the quotient from
/// floating division is corrected at the boundary so the two formulations
/// never disagree.
pub fn count_spots(gap: f64, spot_width: f64) -> u32 {
    assert!(spot_width > 0.0, "spot width must be positive");
    if gap.is_nan() || gap < spot_width {
        return 0;
    }
    let mut n = (gap / spot_width).floor();
    while (n + 1.0) * spot_width <= gap {
        n += 1.0;
    }
    while n > 0.0 && n * spot_width > gap {
        n -= 1.0;
    }
    n as u32
}

/// Candidate spot intervals for one row of pillars (sorted by x).
///
/// For each consecutive pillar pair the gap between their footprints is
/// divided into `count_spots` intervals of exactly the spot width, laid left
/// to right from the left pillar's edge; slack accumulates at the right end.
pub fn candidate_spots(row_pillars: &[&Object3D], spot_width: f64) -> Vec<(f64, f64)> {
    let mut intervals = Vec::new();
    for pair in row_pillars.windows(2) {
        let start = pair[0].footprint.x_hi;
        let gap = pair[1].footprint.x_lo - start;
        let n = count_spots(gap.max(0.0), spot_width);
        for i in 0..n {
            let lo = start + f64::from(i) * spot_width;
            intervals.push((lo, lo + spot_width));
        }
    }
    intervals
}

/// Occupied iff some vehicle footprint covers at least
/// `occupancy_fraction` of the interval's width.
pub fn spot_status(
    interval: (f64, f64),
    row_vehicles: &[&Object3D],
    occupancy_fraction: f64,
) -> SpotStatus {
    debug_assert!(occupancy_fraction > 0.0 && occupancy_fraction <= 1.0);
    let width = interval.1 - interval.0;
    let threshold = occupancy_fraction * width;
    let occupied = row_vehicles
        .iter()
        .any(|v| v.footprint.x_overlap(interval.0, interval.1) >= threshold);
    if occupied {
        SpotStatus::Occupied
    } else {
        SpotStatus::Vacant
    }
}

/// Extract the vacancy map: candidate spots per row, occupancy via
/// [`spot_status`], ids assigned row-major left to right.
pub fn extract_vacancies(lot: &LotModel, occupancy_fraction: f64) -> VacancyMap {
    let mut spots = Vec::new();
    let mut next_id: u32 = 0;
    for (row_index, _) in lot.rows.iter().enumerate() {
        let pillars: Vec<&Object3D> = lot.pillars_in_row(row_index).collect();
        let vehicles: Vec<&Object3D> = lot.vehicles_in_row(row_index).collect();
        for interval in candidate_spots(&pillars, lot.spot_width) {
            spots.push(VacancySpot {
                spot_id: next_id,
                row_index: row_index as u32,
                x_lo: interval.0,
                x_hi: interval.1,
                status: spot_status(interval, &vehicles, occupancy_fraction),
            });
            next_id += 1;
        }
    }
    VacancyMap {
        spots,
        generated_from: SourceStamp {
            lot_id: lot.lot_id.clone(),
            timestamp: None,
        },
    }
}

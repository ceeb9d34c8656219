//! lotmap — detector-agnostic indoor parking-lot mapping.
//!
//! The crate turns per-camera object-detection annotations (PASCAL VOC XML or
//! a flat labels CSV) into a fused top-down lot model, extracts vacant parking
//! spots between pillars, and routes from an entrance to the nearest vacancy.
//!
//! Pipeline stages:
//!
//! 1. **annot** – parse, validate, normalize and split annotations.
//! 2. **depth** – per-box depth proxies (inverse distance, inverse area).
//! 3. **ipm** – ground-plane homography fitting (normalized DLT) and application.
//! 4. **fusion** – project detections onto the lot floor and merge the camera
//!    views with area-prioritized duplicate removal.
//! 5. **vacancy** – gap division between pillars and occupancy classification.
//! 6. **nav** – lane-graph construction and Dijkstra routing to vacant spots.
//! 7. **scene** – scene JSON / points CSV / plot-script emitters.
//! 8. **synth** – ground-truth lot generator and camera renderer used as the
//!    end-to-end oracle, plus precision/recall evaluation in **eval**.
//!
//! The `lotmap` binary wires these together behind `simulate`, `pipeline`,
//! `route`, `eval` and `split` subcommands.

pub mod annot;
pub mod cli;
pub mod config;
pub mod depth;
pub mod eval;
pub mod fusion;
pub mod ipm;
pub mod nav;
pub mod scene;
pub mod synth;
pub mod vacancy;

pub use annot::{Annotation, BBox2D, ClassLabel, ClassMap, DatasetSplit};
pub use depth::{DepthEstimate, DepthMethod, PlanarPoint};
pub use fusion::{CameraView, FloorRect, FusionParams, Object3D};
pub use ipm::{Correspondence, Homography};
pub use nav::{NavGraph, Route};
pub use vacancy::{LotModel, RowBand, SpotStatus, VacancyMap, VacancySpot};

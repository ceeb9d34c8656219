//! Inverse perspective mapping: ground-plane homography fitting and
//! application.
//!
//! A camera's view of the flat lot floor is related to top-down floor
//! coordinates by a 3x3 projective transform. [`fit_homography`] estimates it
//! from marked point correspondences with the normalized direct linear
//! transform: both point sets are translated to their centroid and scaled to
//! mean distance sqrt(2), the 2n x 9 homogeneous system is solved by least
//! squares (smallest-singular-value right vector), and the result is
//! denormalized and scaled so h33 = 1.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::depth::PlanarPoint;

/// Homogeneous scale below which a mapped point is treated as being on the
/// vanishing line.
pub const W_EPSILON: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IpmError {
    #[error("homography needs at least 4 correspondences, got {0}")]
    InsufficientPoints(usize),
    #[error("degenerate configuration: {0}")]
    DegenerateConfiguration(String),
    #[error("point maps to infinity (pixel on the vanishing line)")]
    PointAtInfinity,
    #[error("matrix is not invertible")]
    NonInvertible,
}

/// A marked floor point seen in a camera image, used for calibration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correspondence {
    pub image_point: PlanarPoint,
    pub floor_point: PlanarPoint,
}

/// 3x3 projective transform between planes, stored row-major.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Homography(pub [[f64; 3]; 3]);

impl Homography {
    pub const IDENTITY: Homography =
        Homography([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);

    pub fn translation(dx: f64, dy: f64) -> Self {
        Homography([[1.0, 0.0, dx], [0.0, 1.0, dy], [0.0, 0.0, 1.0]])
    }

    /// Map a point through the transform.
    pub fn apply(&self, p: PlanarPoint) -> Result<PlanarPoint, IpmError> {
        let m = &self.0;
        let hx = m[0][0] * p.x + m[0][1] * p.y + m[0][2];
        let hy = m[1][0] * p.x + m[1][1] * p.y + m[1][2];
        let w = m[2][0] * p.x + m[2][1] * p.y + m[2][2];
        if w.abs() < W_EPSILON {
            return Err(IpmError::PointAtInfinity);
        }
        Ok(PlanarPoint::new(hx / w, hy / w))
    }

    pub fn det(&self) -> f64 {
        let m = &self.0;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    /// Inverse via the adjugate.
    pub fn inverse(&self) -> Result<Homography, IpmError> {
        let d = self.det();
        if !d.is_finite() || d.abs() < 1e-12 {
            return Err(IpmError::NonInvertible);
        }
        let m = &self.0;
        let adj = [
            [
                m[1][1] * m[2][2] - m[1][2] * m[2][1],
                m[0][2] * m[2][1] - m[0][1] * m[2][2],
                m[0][1] * m[1][2] - m[0][2] * m[1][1],
            ],
            [
                m[1][2] * m[2][0] - m[1][0] * m[2][2],
                m[0][0] * m[2][2] - m[0][2] * m[2][0],
                m[0][2] * m[1][0] - m[0][0] * m[1][2],
            ],
            [
                m[1][0] * m[2][1] - m[1][1] * m[2][0],
                m[0][1] * m[2][0] - m[0][0] * m[2][1],
                m[0][0] * m[1][1] - m[0][1] * m[1][0],
            ],
        ];
        Ok(Homography(adj.map(|row| row.map(|v| v / d))).normalized())
    }

    pub fn mul(&self, rhs: &Homography) -> Homography {
        let mut out = [[0.0; 3]; 3];
        for (r, row) in out.iter_mut().enumerate() {
            for (c, cell) in row.iter_mut().enumerate() {
                *cell = (0..3).map(|k| self.0[r][k] * rhs.0[k][c]).sum();
            }
        }
        Homography(out)
    }

    /// Scale so h33 = 1 when h33 is nonzero; otherwise return unchanged.
    pub fn normalized(&self) -> Homography {
        let h33 = self.0[2][2];
        if h33.abs() < W_EPSILON {
            return *self;
        }
        let mut out = self.0;
        for row in &mut out {
            for v in row {
                *v /= h33;
            }
        }
        Homography(out)
    }
}

/// Translate-to-centroid, scale-to-mean-distance-sqrt(2) similarity used for
/// conditioning. Returns the transform; errors if the points are coincident.
fn hartley_normalization(points: &[PlanarPoint]) -> Result<Homography, IpmError> {
    let n = points.len() as f64;
    let cx = points.iter().map(|p| p.x).sum::<f64>() / n;
    let cy = points.iter().map(|p| p.y).sum::<f64>() / n;
    let mean_dist = points
        .iter()
        .map(|p| ((p.x - cx).powi(2) + (p.y - cy).powi(2)).sqrt())
        .sum::<f64>()
        / n;
    if mean_dist < 1e-12 {
        return Err(IpmError::DegenerateConfiguration(
            "all points coincide".into(),
        ));
    }
    let s = std::f64::consts::SQRT_2 / mean_dist;
    Ok(Homography([
        [s, 0.0, -s * cx],
        [0.0, s, -s * cy],
        [0.0, 0.0, 1.0],
    ]))
}

fn triangle_area2(a: PlanarPoint, b: PlanarPoint, c: PlanarPoint) -> f64 {
    ((b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y)).abs()
}

fn has_collinear_triple(points: &[PlanarPoint]) -> bool {
    // Collinearity threshold relative to the point spread.
    let spread = points
        .iter()
        .flat_map(|p| [p.x.abs(), p.y.abs()])
        .fold(1.0f64, f64::max);
    let tol = 1e-9 * spread * spread;
    for i in 0..points.len() {
        for j in (i + 1)..points.len() {
            for k in (j + 1)..points.len() {
                if triangle_area2(points[i], points[j], points[k]) <= tol {
                    return true;
                }
            }
        }
    }
    false
}

/// Fit the homography mapping image points onto floor points.
///
/// Requires at least four correspondences. With exactly four, any collinear
/// triple makes the solution non-unique and is rejected; with more points the
/// least-squares fit is used and rank deficiency is detected from the
/// singular-value spectrum.
pub fn fit_homography(correspondences: &[Correspondence]) -> Result<Homography, IpmError> {
    let n = correspondences.len();
    if n < 4 {
        return Err(IpmError::InsufficientPoints(n));
    }
    let image: Vec<PlanarPoint> = correspondences.iter().map(|c| c.image_point).collect();
    let floor: Vec<PlanarPoint> = correspondences.iter().map(|c| c.floor_point).collect();
    if n == 4 {
        if has_collinear_triple(&image) {
            return Err(IpmError::DegenerateConfiguration(
                "three image points are collinear".into(),
            ));
        }
        if has_collinear_triple(&floor) {
            return Err(IpmError::DegenerateConfiguration(
                "three floor points are collinear".into(),
            ));
        }
    }

    let t_image = hartley_normalization(&image)?;
    let t_floor = hartley_normalization(&floor)?;

    // Rows come in pairs per correspondence; padding to at least 9 rows keeps
    // the full set of right singular vectors available from the thin SVD.
    let rows = (2 * n).max(9);
    let mut a = nalgebra::DMatrix::<f64>::zeros(rows, 9);
    for (i, c) in correspondences.iter().enumerate() {
        let p = t_image.apply(c.image_point).map_err(|_| {
            IpmError::DegenerateConfiguration("image point at infinity after normalization".into())
        })?;
        let q = t_floor.apply(c.floor_point).map_err(|_| {
            IpmError::DegenerateConfiguration("floor point at infinity after normalization".into())
        })?;
        let r0 = 2 * i;
        let row_x = [p.x, p.y, 1.0, 0.0, 0.0, 0.0, -q.x * p.x, -q.x * p.y, -q.x];
        let row_y = [0.0, 0.0, 0.0, p.x, p.y, 1.0, -q.y * p.x, -q.y * p.y, -q.y];
        for c in 0..9 {
            a[(r0, c)] = row_x[c];
            a[(r0 + 1, c)] = row_y[c];
        }
    }

    let svd = nalgebra::SVD::new(a, false, true);
    let v_t = svd
        .v_t
        .as_ref()
        .expect("SVD was requested with right singular vectors");
    let sigma = &svd.singular_values;

    // Smallest and second-smallest singular values without assuming ordering.
    let mut order: Vec<usize> = (0..sigma.len()).collect();
    order.sort_by(|&i, &j| sigma[i].total_cmp(&sigma[j]));
    let smallest = order[0];
    let largest = *order.last().expect("at least one singular value");
    if sigma[largest] <= 0.0 || sigma[order[1]] < 1e-10 * sigma[largest] {
        return Err(IpmError::DegenerateConfiguration(
            "solution is not unique (rank-deficient system)".into(),
        ));
    }

    let h = v_t.row(smallest);
    let h_norm = Homography([[h[0], h[1], h[2]], [h[3], h[4], h[5]], [h[6], h[7], h[8]]]);

    // Denormalize: H = T_floor^-1 * H_norm * T_image.
    let t_floor_inv = t_floor.inverse().expect("similarity transform invertible");
    let fitted = t_floor_inv.mul(&h_norm).mul(&t_image).normalized();
    if fitted.det().abs() < 1e-12 {
        return Err(IpmError::DegenerateConfiguration(
            "fitted homography is singular".into(),
        ));
    }
    Ok(fitted)
}

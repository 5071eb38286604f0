//! Fundamental-matrix verification of putative matches.
//!
//! Correspondences are `(left, right)` pixel pairs obeying
//! `rightᵀ · F · left = 0`. In loop verification `left` is the keypoint in
//! the older candidate frame and `right` the keypoint in the query frame.

mod ransac;

use nalgebra::{DMatrix, Matrix3, Point2, Vector3};
use thiserror::Error;

pub use ransac::{ransac_verify, verify_matches, RansacParams, Rejection, Verified};

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("need at least 8 correspondences, got {0}")]
    TooFewPoints(usize),
    #[error("degenerate point configuration")]
    Degenerate,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence {
    pub left: Point2<f64>,
    pub right: Point2<f64>,
}

impl Correspondence {
    pub fn new(left: Point2<f64>, right: Point2<f64>) -> Self {
        Self { left, right }
    }
}

/// Rank-2, unit Frobenius norm fundamental matrix, sign fixed so the first
/// non-negligible entry (row-major) is positive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FundamentalMatrix {
    pub matrix: Matrix3<f64>,
    /// Correspondences supporting the model: the inlier count after RANSAC,
    /// the number of input points for a direct solve.
    pub inlier_count: usize,
}

/// Translation to the centroid and isotropic scaling to mean distance √2.
fn normalizing_transform<'a>(
    points: impl Iterator<Item = &'a Point2<f64>> + Clone,
) -> Option<Matrix3<f64>> {
    let n = points.clone().count() as f64;
    let (sx, sy) = points
        .clone()
        .fold((0.0, 0.0), |(ax, ay), p| (ax + p.x, ay + p.y));
    let (cx, cy) = (sx / n, sy / n);
    let mean_dist = points
        .map(|p| ((p.x - cx).powi(2) + (p.y - cy).powi(2)).sqrt())
        .sum::<f64>()
        / n;
    let extent = 1.0 + cx.abs().max(cy.abs());
    if !(mean_dist > 1e-12 * extent) || !mean_dist.is_finite() {
        return None;
    }
    let s = std::f64::consts::SQRT_2 / mean_dist;
    Some(Matrix3::new(
        s,
        0.0,
        -s * cx,
        0.0,
        s,
        -s * cy,
        0.0,
        0.0,
        1.0,
    ))
}

fn apply(t: &Matrix3<f64>, p: &Point2<f64>) -> (f64, f64) {
    (t[(0, 0)] * p.x + t[(0, 2)], t[(1, 1)] * p.y + t[(1, 2)])
}

/// Unit Frobenius norm, first entry above `1e-12` in magnitude positive.
fn canonicalize(mut f: Matrix3<f64>) -> Option<Matrix3<f64>> {
    let norm = f.norm();
    if !(norm > 0.0) || !norm.is_finite() {
        return None;
    }
    f /= norm;
    // nalgebra is column-major; scan in row-major order
    for r in 0..3 {
        for c in 0..3 {
            let v = f[(r, c)];
            if v.abs() > 1e-12 {
                if v < 0.0 {
                    f = -f;
                }
                return Some(f);
            }
        }
    }
    Some(f)
}

/// Normalized eight-point solve on eight or more correspondences.
///
/// Planar scenes leave a family of valid solutions; one of them is returned.
/// Configurations whose design matrix has rank below 6 (coincident or
/// collinear points) are reported as degenerate.
pub fn eight_point(points: &[Correspondence]) -> Result<FundamentalMatrix, GeometryError> {
    solve(points, None)
}

/// Eight-point solve with each equation scaled by the inverse Sampson
/// gradient norm of `reference`, so the least-squares objective becomes the
/// summed Sampson error with denominators frozen at `reference`.
pub fn sampson_weighted_eight_point(
    points: &[Correspondence],
    reference: &Matrix3<f64>,
) -> Result<FundamentalMatrix, GeometryError> {
    let weights: Vec<f64> = points
        .iter()
        .map(|c| {
            let g = sampson_gradient_sq(reference, c);
            if g > 0.0 {
                1.0 / g.sqrt()
            } else {
                0.0
            }
        })
        .collect();
    let largest = weights.iter().copied().fold(0.0, f64::max);
    if !(largest > 0.0) {
        return Err(GeometryError::Degenerate);
    }
    let weights: Vec<f64> = weights.iter().map(|w| w / largest).collect();
    solve(points, Some(&weights))
}

fn solve(
    points: &[Correspondence],
    weights: Option<&[f64]>,
) -> Result<FundamentalMatrix, GeometryError> {
    let n = points.len();
    if n < 8 {
        return Err(GeometryError::TooFewPoints(n));
    }
    let t_left =
        normalizing_transform(points.iter().map(|c| &c.left)).ok_or(GeometryError::Degenerate)?;
    let t_right =
        normalizing_transform(points.iter().map(|c| &c.right)).ok_or(GeometryError::Degenerate)?;

    // Pad to at least 9 rows so the SVD yields a full right basis.
    let mut a = DMatrix::<f64>::zeros(n.max(9), 9);
    for (i, c) in points.iter().enumerate() {
        let (x, y) = apply(&t_left, &c.left);
        let (xp, yp) = apply(&t_right, &c.right);
        let w = weights.map_or(1.0, |w| w[i]);
        let row = [xp * x, xp * y, xp, yp * x, yp * y, yp, x, y, 1.0];
        for (j, v) in row.into_iter().enumerate() {
            a[(i, j)] = w * v;
        }
    }
    let svd = a.svd(false, true);
    let v_t = svd.v_t.as_ref().ok_or(GeometryError::Degenerate)?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let largest = svd.singular_values[order[0]];
    let rank = order
        .iter()
        .filter(|&&i| svd.singular_values[i] > 1e-10 * largest)
        .count();
    if !(largest > 0.0) || rank < 6 {
        return Err(GeometryError::Degenerate);
    }
    let null = v_t.row(*order.last().unwrap());
    let f_norm = Matrix3::new(
        null[0], null[1], null[2], null[3], null[4], null[5], null[6], null[7], null[8],
    );

    let svd_f = f_norm.svd(true, true);
    let (u, v_t) = match (svd_f.u, svd_f.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(GeometryError::Degenerate),
    };
    let mut s = svd_f.singular_values;
    let smallest = s.imin();
    s[smallest] = 0.0;
    let rank2 = u * Matrix3::from_diagonal(&s) * v_t;

    let f = t_right.transpose() * rank2 * t_left;
    let matrix = canonicalize(f).ok_or(GeometryError::Degenerate)?;
    Ok(FundamentalMatrix {
        matrix,
        inlier_count: n,
    })
}

fn sampson_gradient_sq(f: &Matrix3<f64>, c: &Correspondence) -> f64 {
    let fx = f * Vector3::new(c.left.x, c.left.y, 1.0);
    let ftxp = f.transpose() * Vector3::new(c.right.x, c.right.y, 1.0);
    fx.x * fx.x + fx.y * fx.y + ftxp.x * ftxp.x + ftxp.y * ftxp.y
}

/// First-order geometric error of a correspondence, in squared pixels:
/// `(x'ᵀFx)² / ((Fx)₁² + (Fx)₂² + (Fᵀx')₁² + (Fᵀx')₂²)`.
pub fn sampson_error(f: &Matrix3<f64>, c: &Correspondence) -> f64 {
    let xp = Vector3::new(c.right.x, c.right.y, 1.0);
    let algebraic = xp.dot(&(f * Vector3::new(c.left.x, c.left.y, 1.0)));
    let denom = sampson_gradient_sq(f, c);
    if algebraic == 0.0 {
        return 0.0;
    }
    algebraic * algebraic / denom.max(f64::MIN_POSITIVE)
}

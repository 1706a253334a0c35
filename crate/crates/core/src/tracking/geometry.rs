use serde::Serialize;

use super::TrackingError;
use crate::detection::BoundingBox;

pub type Point2 = [f64; 2];

/// Total-least-squares line through a track's centroids.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CentroidLine {
    pub point: Point2,
    /// Unit vector, oriented from the first observation towards the last.
    pub direction: Point2,
    /// RMS perpendicular distance of the centroids from the line, in pixels.
    pub fit_residual: f64,
}

impl CentroidLine {
    pub fn at(&self, t: f64) -> Point2 {
        [self.point[0] + t * self.direction[0], self.point[1] + t * self.direction[1]]
    }

    pub fn distance_to(&self, p: Point2) -> f64 {
        let d = [p[0] - self.point[0], p[1] - self.point[1]];
        (d[0] * self.direction[1] - d[1] * self.direction[0]).abs()
    }
}

/// Principal axis of the centroid scatter.
///
/// The direction is the major eigenvector of the 2×2 covariance matrix; the
/// residual is the square root of its minor eigenvalue.
pub fn fit_line(points: &[Point2]) -> Result<CentroidLine, TrackingError> {
    if points.len() < 2 {
        return Err(TrackingError::DegenerateLine);
    }
    let n = points.len() as f64;
    let mean = [
        points.iter().map(|p| p[0]).sum::<f64>() / n,
        points.iter().map(|p| p[1]).sum::<f64>() / n,
    ];
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for p in points {
        let (dx, dy) = (p[0] - mean[0], p[1] - mean[1]);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    let (sxx, sxy, syy) = (sxx / n, sxy / n, syy / n);
    let trace = sxx + syy;
    let scale = points
        .iter()
        .flat_map(|p| [p[0].abs(), p[1].abs()])
        .fold(1.0f64, f64::max);
    if trace <= (1e-12 * scale).powi(2) {
        return Err(TrackingError::DegenerateLine);
    }
    let angle = 0.5 * (2.0 * sxy).atan2(sxx - syy);
    let mut direction = [angle.cos(), angle.sin()];
    let disc = ((sxx - syy) * (sxx - syy) / 4.0 + sxy * sxy).sqrt();
    let minor = (trace / 2.0 - disc).max(0.0);

    let first = points[0];
    let last = points[points.len() - 1];
    if direction[0] * (last[0] - first[0]) + direction[1] * (last[1] - first[1]) < 0.0 {
        direction = [-direction[0], -direction[1]];
    }
    Ok(CentroidLine { point: mean, direction, fit_residual: minor.sqrt() })
}

/// Where the infinite line crosses the box boundary (Liang–Barsky clipping),
/// ordered along the line direction.
pub fn box_line_intersections(
    bbox: &BoundingBox,
    line: &CentroidLine,
) -> Result<(Point2, Point2), TrackingError> {
    let [px, py] = line.point;
    let [dx, dy] = line.direction;
    let mut t_enter = f64::NEG_INFINITY;
    let mut t_exit = f64::INFINITY;
    for (p, d, lo, hi) in [(px, dx, bbox.x_min, bbox.x_max), (py, dy, bbox.y_min, bbox.y_max)] {
        if d == 0.0 {
            if p < lo || p > hi {
                return Err(TrackingError::NoIntersection);
            }
            continue;
        }
        let (a, b) = ((lo - p) / d, (hi - p) / d);
        t_enter = t_enter.max(a.min(b));
        t_exit = t_exit.min(a.max(b));
    }
    if !(t_enter < t_exit) {
        return Err(TrackingError::NoIntersection);
    }
    let snap = |q: Point2| {
        [
            snap_to_edge(q[0], bbox.x_min, bbox.x_max),
            snap_to_edge(q[1], bbox.y_min, bbox.y_max),
        ]
    };
    Ok((snap(line.at(t_enter)), snap(line.at(t_exit))))
}

/// Clean up round-off so exit points land exactly on the edge they crossed.
fn snap_to_edge(v: f64, lo: f64, hi: f64) -> f64 {
    let tol = 1e-12 * (1.0 + lo.abs().max(hi.abs()));
    if (v - lo).abs() <= tol {
        lo
    } else if (v - hi).abs() <= tol {
        hi
    } else {
        v.clamp(lo, hi)
    }
}

#[cfg(test)]
mod tests {
    use nalgebra::{Matrix2, SymmetricEigen};
    use proptest::prelude::*;

    use super::*;

    fn line(point: Point2, dir: Point2) -> CentroidLine {
        let n = (dir[0] * dir[0] + dir[1] * dir[1]).sqrt();
        CentroidLine { point, direction: [dir[0] / n, dir[1] / n], fit_residual: 0.0 }
    }

    fn close(a: Point2, b: Point2) -> bool {
        (a[0] - b[0]).abs() < 1e-9 && (a[1] - b[1]).abs() < 1e-9
    }

    #[test]
    fn collinear_points_fit_exactly() {
        let l = fit_line(&[[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]]).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert!(close(l.direction, [s, s]));
        assert!(l.fit_residual < 1e-12);
        assert!(l.distance_to([0.0, 0.0]) < 1e-12);
    }

    #[test]
    fn scattered_points_match_eigen_decomposition() {
        let pts = [[0.0, 0.0], [1.0, 0.0], [2.0, 0.0], [1.0, 1.0]];
        let l = fit_line(&pts).unwrap();

        // oracle: nalgebra's symmetric eigen solver on the population covariance
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p[0]).sum::<f64>() / n;
        let my = pts.iter().map(|p| p[1]).sum::<f64>() / n;
        let mut cov = Matrix2::zeros();
        for p in &pts {
            let d = nalgebra::Vector2::new(p[0] - mx, p[1] - my);
            cov += d * d.transpose() / n;
        }
        let eig = SymmetricEigen::new(cov);
        let (major, minor) = if eig.eigenvalues[0] > eig.eigenvalues[1] { (0, 1) } else { (1, 0) };
        let axis = eig.eigenvectors.column(major);
        assert!((l.direction[0] * axis[1] - l.direction[1] * axis[0]).abs() < 1e-12);
        assert!(l.direction[0] > 0.99, "horizontal axis expected: {:?}", l.direction);
        assert!((l.fit_residual - eig.eigenvalues[minor].sqrt()).abs() < 1e-12);
        assert!(l.fit_residual > 0.0);
    }

    #[test]
    fn coincident_points_are_degenerate() {
        assert!(matches!(fit_line(&[[3.0, 4.0]; 5]), Err(TrackingError::DegenerateLine)));
        assert!(matches!(fit_line(&[[3.0, 4.0]]), Err(TrackingError::DegenerateLine)));
    }

    #[test]
    fn direction_follows_travel() {
        let l = fit_line(&[[5.0, 100.0], [5.5, 80.0], [6.0, 60.0]]).unwrap();
        assert!(l.direction[1] < 0.0);
    }

    #[test]
    fn horizontal_line_through_box() {
        let b = BoundingBox::new(0.0, 0.0, 10.0, 10.0);
        let (a, c) = box_line_intersections(&b, &line([-3.0, 5.0], [1.0, 0.0])).unwrap();
        assert_eq!((a, c), ([0.0, 5.0], [10.0, 5.0]));
    }

    #[test]
    fn diagonal_through_corners() {
        let b = BoundingBox::new(0.0, 0.0, 10.0, 10.0);
        let (a, c) = box_line_intersections(&b, &line([0.0, 0.0], [1.0, 1.0])).unwrap();
        assert!(close(a, [0.0, 0.0]) && close(c, [10.0, 10.0]));
    }

    #[test]
    fn slanted_line_matches_sampling_oracle() {
        let b = BoundingBox::new(2.0, 3.0, 8.0, 9.0);
        let l = line([0.0, 6.0], [1.0, 0.2]);
        let (a, c) = box_line_intersections(&b, &l).unwrap();
        // y = 6 + 0.2 x stays within [3, 9] for x in [2, 8], so the line
        // enters through the left edge and leaves through the right edge
        assert!(close(a, [2.0, 6.4]));
        assert!(close(c, [8.0, 7.6]));

        // sampling oracle: first and last inside samples bracket the answers
        let inside = |p: Point2| p[0] >= 2.0 && p[0] <= 8.0 && p[1] >= 3.0 && p[1] <= 9.0;
        let samples: Vec<Point2> = (0..=200_000)
            .map(|i| l.at(-5.0 + 20.0 * i as f64 / 200_000.0))
            .filter(|&p| inside(p))
            .collect();
        let (first, last) = (samples[0], samples[samples.len() - 1]);
        assert!((first[0] - a[0]).abs() < 1e-3 && (last[0] - c[0]).abs() < 1e-3);
    }

    #[test]
    fn missing_line_is_reported() {
        let b = BoundingBox::new(0.0, 0.0, 10.0, 10.0);
        assert!(matches!(
            box_line_intersections(&b, &line([0.0, 20.0], [1.0, 0.0])),
            Err(TrackingError::NoIntersection)
        ));
        assert!(matches!(
            box_line_intersections(&b, &line([0.0, 20.0], [1.0, 1.0])),
            Err(TrackingError::NoIntersection)
        ));
        // grazing a corner has no interior crossing
        assert!(matches!(
            box_line_intersections(&b, &line([0.0, 20.0], [1.0, -1.0])),
            Err(TrackingError::NoIntersection)
        ));
    }

    proptest! {
        #[test]
        fn intersections_lie_on_box_and_line(
            x0 in -100.0f64..100.0, y0 in -100.0f64..100.0, w in 1.0f64..80.0, h in 1.0f64..80.0,
            fx in 0.05f64..0.95, fy in 0.05f64..0.95, angle in 0.0f64..std::f64::consts::TAU,
        ) {
            let b = BoundingBox::new(x0, y0, x0 + w, y0 + h);
            let through = [x0 + fx * w, y0 + fy * h];
            let l = line(through, [angle.cos(), angle.sin()]);
            let (a, c) = box_line_intersections(&b, &l).unwrap();
            for p in [a, c] {
                let on_x = (p[0] - b.x_min).abs() < 1e-9 || (p[0] - b.x_max).abs() < 1e-9;
                let on_y = (p[1] - b.y_min).abs() < 1e-9 || (p[1] - b.y_max).abs() < 1e-9;
                prop_assert!(on_x || on_y, "{p:?} not on boundary of {b:?}");
                prop_assert!(p[0] >= b.x_min && p[0] <= b.x_max && p[1] >= b.y_min && p[1] <= b.y_max);
                prop_assert!(l.distance_to(p) < 1e-9);
            }
            let along = (c[0] - a[0]) * l.direction[0] + (c[1] - a[1]) * l.direction[1];
            prop_assert!(along > 0.0);
        }
    }
}

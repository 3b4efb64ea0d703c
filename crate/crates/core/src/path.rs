//! Cartesian path utilities.

use alloc::vec::Vec;

use nalgebra::Point3;

/// Resamples a polyline to `count` points: linear interpolation over the
/// point index, then evenly spaced picks. Endpoints are kept exactly.
/// `count == 1` returns the first point.
pub fn resample(path: &[Point3<f64>], count: usize) -> Vec<Point3<f64>> {
    if path.is_empty() || count == 0 {
        return Vec::new();
    }
    if count == 1 || path.len() == 1 {
        return alloc::vec![path[0]; count];
    }
    let last = (path.len() - 1) as f64;
    (0..count)
        .map(|i| {
            if i + 1 == count {
                return path[path.len() - 1];
            }
            let s = i as f64 * last / (count - 1) as f64;
            let k = (s as usize).min(path.len() - 2);
            let frac = s - k as f64;
            path[k] + (path[k + 1] - path[k]) * frac
        })
        .collect()
}

/// Splits the move from `from` to `to` into equal legs no longer than `step_max`.
pub fn subdivide(from: &Point3<f64>, to: &Point3<f64>, step_max: f64) -> Vec<Point3<f64>> {
    let dist = (to - from).norm();
    let legs = if dist > step_max {
        libm::ceil(dist / step_max) as usize
    } else {
        1
    };
    (1..=legs)
        .map(|k| {
            if k == legs {
                *to
            } else {
                from + (to - from) * (k as f64 / legs as f64)
            }
        })
        .collect()
}

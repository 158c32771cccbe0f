//! Procedural piecewise-smooth test images, for examples and tests that
//! should not depend on external datasets.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::Image;

/// A smooth background ramp with a handful of flat ellipses and rectangles,
/// intensities kept inside `[20, 235]`.
pub fn phantom(width: usize, height: usize, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (width as f64, height as f64);
    let gx: f64 = rng.random_range(-60.0..60.0);
    let gy: f64 = rng.random_range(-60.0..60.0);
    let base: f64 = rng.random_range(90.0..160.0);
    let shapes: Vec<(bool, f64, f64, f64, f64, f64)> = (0..rng.random_range(3..7))
        .map(|_| {
            (
                rng.random_bool(0.5),
                rng.random_range(0.0..w),
                rng.random_range(0.0..h),
                rng.random_range(0.08..0.35) * w,
                rng.random_range(0.08..0.35) * h,
                rng.random_range(-90.0..90.0),
            )
        })
        .collect();
    Image::from_fn(width, height, |x, y| {
        let (fx, fy) = (x as f64, y as f64);
        let mut v = base + gx * (fx / w - 0.5) + gy * (fy / h - 0.5);
        for &(ellipse, cx, cy, rx, ry, delta) in &shapes {
            let (dx, dy) = ((fx - cx) / rx, (fy - cy) / ry);
            let inside = if ellipse {
                dx * dx + dy * dy <= 1.0
            } else {
                dx.abs() <= 1.0 && dy.abs() <= 1.0
            };
            if inside {
                v += delta;
            }
        }
        v.clamp(20.0, 235.0)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_in_range() {
        let a = phantom(40, 30, 5);
        assert_eq!(a, phantom(40, 30, 5));
        assert_ne!(a, phantom(40, 30, 6));
        assert!(a.as_slice().iter().all(|v| (20.0..=235.0).contains(v)));
    }
}

//! Synthetic oriented test patterns.

use std::f64::consts::PI;

use adstv_core::Image;

/// Sinusoidal stripes running along `angle` (radians, image axes with y
/// pointing down), intensities in `[0.1, 0.9]`.
pub fn stripes(width: usize, height: usize, period: f64, angle: f64) -> Image {
    let (s, c) = angle.sin_cos();
    Image::from_fn(width, height, |x, y| {
        let t = -(x as f64) * s + y as f64 * c;
        0.5 + 0.4 * (2.0 * PI * t / period).sin()
    })
    .expect("nonzero size")
}

/// Concentric sinusoidal rings around the image center.
pub fn rings(width: usize, height: usize, period: f64) -> Image {
    let (cx, cy) = (width as f64 / 2.0, height as f64 / 2.0);
    Image::from_fn(width, height, |x, y| {
        let r = (x as f64 - cx).hypot(y as f64 - cy);
        0.5 + 0.4 * (2.0 * PI * r / period).sin()
    })
    .expect("nonzero size")
}

/// Square tiles of stripes, each with its own orientation.
pub fn patchwork(width: usize, height: usize, tile: usize, period: f64) -> Image {
    const ANGLES: [f64; 6] = [0.0, PI / 6.0, PI / 3.0, PI / 2.0, 2.0 * PI / 3.0, 5.0 * PI / 6.0];
    Image::from_fn(width, height, |x, y| {
        let k = (x / tile + 2 * (y / tile)) % ANGLES.len();
        let (s, c) = ANGLES[k].sin_cos();
        let t = -(x as f64) * s + y as f64 * c;
        0.5 + 0.4 * (2.0 * PI * t / period).sin()
    })
    .expect("nonzero size")
}

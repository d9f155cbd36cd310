//! Seeded procedural test images: smooth gradients, flat shapes and
//! oriented textures, enough structure to exercise codec and saliency code
//! without shipping an image corpus.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::imaging::ImageTensor;

/// A natural-ish scene: colour gradient background, a few flat ellipses and
/// rectangles, one sinusoidal texture patch and faint noise.
pub fn scene(seed: u64, height: usize, width: usize) -> ImageTensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut base = [[0.0f64; 3]; 3];
    for row in &mut base {
        for v in row.iter_mut() {
            *v = rng.random_range(0.15..0.85);
        }
    }
    let mut shapes = Vec::new();
    for _ in 0..rng.random_range(3..6) {
        let cy = rng.random_range(0.0..1.0);
        let cx = rng.random_range(0.0..1.0);
        let ry = rng.random_range(0.08..0.3);
        let rx = rng.random_range(0.08..0.3);
        let ellipse = rng.random_bool(0.5);
        let colour = [rng.random_range(0.0..1.0), rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)];
        shapes.push((cy, cx, ry, rx, ellipse, colour));
    }
    let freq = rng.random_range(0.15..0.5);
    let angle: f64 = rng.random_range(0.0..std::f64::consts::PI);
    let patch = (rng.random_range(0.0..0.6), rng.random_range(0.0..0.6));
    let noise_seed: u64 = rng.random();
    let mut noise = ChaCha8Rng::seed_from_u64(noise_seed);
    let noise: Vec<f64> = (0..height * width).map(|_| noise.random_range(-0.01..0.01)).collect();

    ImageTensor::from_fn(3, height, width, |c, y, x| {
        let v = y as f64 / height as f64;
        let u = x as f64 / width as f64;
        let mut p = base[0][c] * (1.0 - u) * (1.0 - v) + base[1][c] * u + base[2][c] * v * (1.0 - u);
        for &(cy, cx, ry, rx, ellipse, colour) in &shapes {
            let dy = (v - cy) / ry;
            let dx = (u - cx) / rx;
            let inside = if ellipse { dy * dy + dx * dx <= 1.0 } else { dy.abs() <= 1.0 && dx.abs() <= 1.0 };
            if inside {
                p = colour[c];
            }
        }
        if (patch.0..patch.0 + 0.4).contains(&v) && (patch.1..patch.1 + 0.4).contains(&u) {
            let t = (y as f64 * angle.sin() + x as f64 * angle.cos()) * freq;
            p = 0.5 + 0.35 * t.sin();
        }
        p + noise[y * width + x]
    })
}

/// Fine high-contrast texture (checker modulated by a seeded pattern).
fn texture(seed: u64, y: usize, x: usize) -> f64 {
    let h = crate::pipeline::dataset::derive_seed(seed, &[y as u64, x as u64]);
    let jitter = (h >> 40) as f64 / (1u64 << 24) as f64;
    let checker = ((y / 2 + x / 2) % 2) as f64;
    0.15 + 0.5 * checker + 0.2 * jitter
}

/// Three flat quadrants and one textured quadrant (top-left).
pub fn quadrant_composite(seed: u64, side: usize) -> ImageTensor {
    let half = side / 2;
    let flats = [0.3, 0.55, 0.75];
    ImageTensor::from_fn(3, side, side, |c, y, x| match (y < half, x < half) {
        (true, true) => texture(seed.wrapping_add(c as u64), y, x),
        (true, false) => flats[0],
        (false, true) => flats[1],
        (false, false) => flats[2],
    })
}

/// Left half flat, right half textured.
pub fn half_flat_half_texture(seed: u64, height: usize, width: usize) -> ImageTensor {
    ImageTensor::from_fn(3, height, width, |c, y, x| {
        if x < width / 2 {
            0.5
        } else {
            texture(seed.wrapping_add(c as u64), y, x)
        }
    })
}

/// `n` scenes with distinct derived seeds.
pub fn scenes(seed: u64, n: usize, height: usize, width: usize) -> Vec<ImageTensor> {
    (0..n)
        .map(|i| scene(crate::pipeline::dataset::derive_seed(seed, &[i as u64]), height, width))
        .collect()
}

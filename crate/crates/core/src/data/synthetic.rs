//! Synthetic two-class detection images: class 1 carries a bright vertical
//! bar over textured noise, class 0 is texture only. Stands in for
//! non-public detection data in end-to-end runs and tests.

use super::LabeledImageSet;
use crate::math::{derive_seed, SeedDomain};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const SIDE: usize = 28;

/// Generates `count` 28x28 images with balanced, alternating classes.
/// Deterministic in `seed`.
pub fn gen_detection(count: usize, seed: u64) -> LabeledImageSet {
    assert!(count >= 2, "need at least one sample per class");
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, SeedDomain::Synthetic, 0, 0));
    let mut pixels = Vec::with_capacity(count * SIDE * SIDE);
    let mut labels = Vec::with_capacity(count);
    for i in 0..count {
        let label = (i % 2) as u8;
        let mut img = [0u8; SIDE * SIDE];
        // low-frequency texture plus speckle
        let base: f64 = rng.gen_range(60.0..110.0);
        let fx: f64 = rng.gen_range(0.2..0.9);
        let fy: f64 = rng.gen_range(0.2..0.9);
        let phase: f64 = rng.gen_range(0.0..6.28);
        for y in 0..SIDE {
            for x in 0..SIDE {
                let wave = 25.0 * ((fx * x as f64 + fy * y as f64 + phase).sin());
                let speckle: f64 = rng.gen_range(-30.0..30.0);
                img[y * SIDE + x] = (base + wave + speckle).clamp(0.0, 200.0) as u8;
            }
        }
        if label == 1 {
            // bright vertical bar at a random column band
            let bar_w = rng.gen_range(3..6);
            let x0 = rng.gen_range(2..SIDE - bar_w - 2);
            let y0 = rng.gen_range(0..6);
            let y1 = rng.gen_range(SIDE - 6..SIDE);
            for y in y0..y1 {
                for x in x0..x0 + bar_w {
                    let bright: f64 = rng.gen_range(230.0..256.0);
                    img[y * SIDE + x] = bright.min(255.0) as u8;
                }
            }
        }
        pixels.extend_from_slice(&img);
        labels.push(label);
    }
    LabeledImageSet {
        pixels,
        labels,
        rows: SIDE,
        cols: SIDE,
    }
}

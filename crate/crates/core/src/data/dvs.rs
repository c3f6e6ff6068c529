//! Event-camera simulation: converts static grayscale images into 34x34
//! two-polarity address-event streams by sweeping the image along a
//! triangular saccade path and emitting an event whenever a pixel's
//! brightness drifts one contrast step from its last-event level.
//!
//! Used to produce recordings in the real sensor format when the original
//! camera data is not available: the output exercises the same loaders,
//! binning, and training pipeline.

use super::{LabeledEventSet, LabeledImageSet};
use crate::encode::{Event, EventStream, Polarity};
use crate::math::{derive_seed, SeedDomain};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const CANVAS: usize = 34;

#[derive(Debug, Clone, Copy)]
pub struct DvsOptions {
    /// Total simulated duration in milliseconds.
    pub duration_ms: usize,
    /// Brightness change (0..255 scale) per emitted event.
    pub contrast: f64,
    /// Peak offset of the saccade path in pixels (<= 6 for 28px digits).
    pub sweep_px: f64,
}

impl Default for DvsOptions {
    fn default() -> Self {
        DvsOptions {
            duration_ms: 36,
            contrast: 40.0,
            sweep_px: 5.0,
        }
    }
}

/// Simulates one recording. Deterministic in `seed`.
pub fn simulate(image: &[u8], rows: usize, cols: usize, opts: &DvsOptions, seed: u64) -> EventStream {
    assert!(rows <= CANVAS && cols <= CANVAS);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // reference level per canvas pixel: brightness at the last event
    let mut level = vec![0.0f64; CANVAS * CANVAS];
    let mut events: Vec<Event> = Vec::new();
    let legs = 3;
    let leg_ms = (opts.duration_ms / legs).max(1);
    // triangle vertices the digit origin visits, starting and ending at rest
    let verts = [
        (0.0, 0.0),
        (opts.sweep_px, opts.sweep_px * 0.45),
        (opts.sweep_px * 0.2, opts.sweep_px),
        (0.0, 0.0),
    ];
    for step in 0..opts.duration_ms {
        let leg = (step / leg_ms).min(legs - 1);
        let frac = (step % leg_ms) as f64 / leg_ms as f64;
        let (x0, y0) = verts[leg];
        let (x1, y1) = verts[leg + 1];
        let ox = x0 + (x1 - x0) * frac;
        let oy = y0 + (y1 - y0) * frac;
        for cy in 0..CANVAS {
            for cx in 0..CANVAS {
                let b = sample_bilinear(image, rows, cols, cx as f64 - ox, cy as f64 - oy);
                let idx = cy * CANVAS + cx;
                let diff = b - level[idx];
                if diff.abs() >= opts.contrast {
                    let polarity = if diff > 0.0 { Polarity::On } else { Polarity::Off };
                    // one event per contrast step crossed, all inside this step's bin
                    let n = (diff.abs() / opts.contrast).floor() as usize;
                    for _ in 0..n.min(4) {
                        events.push(Event {
                            x: cx as u16,
                            y: cy as u16,
                            polarity,
                            t_us: (step * 1000 + rng.gen_range(0..1000)) as u32,
                        });
                    }
                    level[idx] = b;
                }
            }
        }
    }
    events.sort_by_key(|e| e.t_us);
    EventStream {
        events,
        width: CANVAS,
        height: CANVAS,
    }
}

/// Bilinear sample of the image placed at the canvas origin; outside is dark.
fn sample_bilinear(image: &[u8], rows: usize, cols: usize, x: f64, y: f64) -> f64 {
    let x0 = x.floor();
    let y0 = y.floor();
    let fx = x - x0;
    let fy = y - y0;
    let mut acc = 0.0;
    for (dy, wy) in [(0isize, 1.0 - fy), (1, fy)] {
        for (dx, wx) in [(0isize, 1.0 - fx), (1, fx)] {
            let ix = x0 as isize + dx;
            let iy = y0 as isize + dy;
            if ix >= 0 && (ix as usize) < cols && iy >= 0 && (iy as usize) < rows {
                acc += wx * wy * image[iy as usize * cols + ix as usize] as f64;
            }
        }
    }
    acc
}

/// Simulates a whole labeled image set; per-sample seeds derive from `seed`.
pub fn simulate_set(images: &LabeledImageSet, opts: &DvsOptions, seed: u64) -> LabeledEventSet {
    let streams = (0..images.len())
        .map(|i| {
            simulate(
                images.image(i),
                images.rows,
                images.cols,
                opts,
                derive_seed(seed, SeedDomain::Synthetic, 1, i as u64),
            )
        })
        .collect();
    LabeledEventSet {
        streams,
        labels: images.labels.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bar_image() -> Vec<u8> {
        let mut img = vec![0u8; 28 * 28];
        for y in 4..24 {
            for x in 12..16 {
                img[y * 28 + x] = 255;
            }
        }
        img
    }

    #[test]
    fn moving_edges_emit_both_polarities() {
        let img = bar_image();
        let stream = simulate(&img, 28, 28, &DvsOptions::default(), 5);
        assert!(!stream.events.is_empty());
        let on = stream.events.iter().filter(|e| e.polarity == Polarity::On).count();
        let off = stream.events.len() - on;
        assert!(on > 0 && off > 0, "on={on} off={off}");
        stream.validate().unwrap();
    }

    #[test]
    fn blank_image_is_silent() {
        let img = vec![0u8; 28 * 28];
        let stream = simulate(&img, 28, 28, &DvsOptions::default(), 1);
        assert!(stream.events.is_empty());
    }

    #[test]
    fn simulation_is_deterministic_and_sorted() {
        let img = bar_image();
        let a = simulate(&img, 28, 28, &DvsOptions::default(), 7);
        let b = simulate(&img, 28, 28, &DvsOptions::default(), 7);
        assert_eq!(a, b);
        assert!(a.events.windows(2).all(|w| w[0].t_us <= w[1].t_us));
    }
}

//! Input encoders: Bernoulli rate coding for static images and time-binning
//! of address-event streams.

use crate::error::{Error, Result};
use crate::math::{derive_seed, SeedDomain};
use crate::spike::SpikeTrain;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Event polarity: brightness increase (`On`) or decrease (`Off`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Polarity {
    On,
    Off,
}

impl Polarity {
    /// Channel index in binned tensors: on = 0, off = 1.
    pub fn channel(&self) -> usize {
        match self {
            Polarity::On => 0,
            Polarity::Off => 1,
        }
    }
}

/// One address-event record.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Event {
    /// Pixel column.
    pub x: u16,
    /// Pixel row.
    pub y: u16,
    pub polarity: Polarity,
    /// Microseconds from recording start.
    pub t_us: u32,
}

/// A sensor recording: events plus the pixel-array dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct EventStream {
    pub events: Vec<Event>,
    pub width: usize,
    pub height: usize,
}

impl EventStream {
    pub fn validate(&self) -> Result<()> {
        for (i, e) in self.events.iter().enumerate() {
            if (e.x as usize) >= self.width || (e.y as usize) >= self.height {
                return Err(Error::Format {
                    path: "<event stream>".into(),
                    offset: i as u64,
                    reason: format!(
                        "event {i} at ({}, {}) outside {}x{} sensor",
                        e.x, e.y, self.width, self.height
                    ),
                });
            }
        }
        Ok(())
    }

    pub fn sort_by_time(&mut self) {
        self.events.sort_by_key(|e| e.t_us);
    }
}

/// How a bin cell combines multiple events.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinMode {
    /// Cell is 1 iff at least one matching event fell in the bin.
    Or,
    /// Cell counts matching events (experimentation only; not spike-valued).
    Count,
}

impl BinMode {
    pub fn parse(s: &str) -> Option<BinMode> {
        match s {
            "or" => Some(BinMode::Or),
            "count" => Some(BinMode::Count),
            _ => None,
        }
    }
}

/// Bernoulli rate coding: pixel intensity `p` (0..=255) fires each step
/// independently with probability `p/255`. Deterministic in `seed`.
pub fn bernoulli_encode(pixels: &[u8], t_window: usize, seed: u64) -> SpikeTrain {
    let width = pixels.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = SpikeTrain::zeros(t_window, width);
    for t in 0..t_window {
        let row = train.step_mut(t);
        for (o, &p) in row.iter_mut().zip(pixels) {
            // saturated pixels fire every step, dark pixels never; only the
            // in-between consume RNG draws
            if p == 255 {
                *o = 1.0;
            } else if p > 0 && rng.gen::<f64>() < p as f64 / 255.0 {
                *o = 1.0;
            }
        }
    }
    train
}

/// Derives the per-sample seed for training-time encoding.
pub fn train_encode_seed(seed: u64, epoch: usize, sample: usize) -> u64 {
    derive_seed(seed, SeedDomain::EncodeTrain, epoch as u64, sample as u64)
}

/// Derives the per-sample seed for evaluation-time encoding (independent of
/// epoch so test accuracy varies only with the parameters).
pub fn eval_encode_seed(seed: u64, sample: usize) -> u64 {
    derive_seed(seed, SeedDomain::EncodeEval, 0, sample as u64)
}

/// Bins an event stream into a `[T x height x width x 2]` spike tensor
/// flattened per step as `(y * width + x) * 2 + channel`, channel 0 = on.
///
/// Bin `k` covers `[offset + k*dt, offset + (k+1)*dt)` in milliseconds;
/// events outside the window are dropped.
pub fn bin_events(
    stream: &EventStream,
    t_window: usize,
    dt_ms: f64,
    offset_ms: f64,
    mode: BinMode,
) -> Result<SpikeTrain> {
    if dt_ms <= 0.0 || offset_ms < 0.0 {
        return Err(Error::Config(format!(
            "bin_events needs dt > 0 and offset >= 0, got dt={dt_ms}, offset={offset_ms}"
        )));
    }
    stream.validate()?;
    let width = stream.width;
    let per_step = stream.height * width * 2;
    let mut train = SpikeTrain::zeros(t_window, per_step);
    let dt_us = dt_ms * 1000.0;
    let offset_us = offset_ms * 1000.0;
    for e in &stream.events {
        let rel = e.t_us as f64 - offset_us;
        if rel < 0.0 {
            continue;
        }
        let bin = (rel / dt_us).floor() as usize;
        if bin >= t_window {
            continue;
        }
        let idx = (e.y as usize * width + e.x as usize) * 2 + e.polarity.channel();
        let cell = &mut train.step_mut(bin)[idx];
        match mode {
            BinMode::Or => *cell = 1.0,
            BinMode::Count => *cell += 1.0,
        }
    }
    Ok(train)
}

/// Index helper matching the documented `[t][y][x][channel]` layout.
pub fn binned_index(width: usize, y: usize, x: usize, channel: usize) -> usize {
    (y * width + x) * 2 + channel
}

//! The epoch loop: deterministic shuffling, per-batch gradient averaging
//! with the chunked parallel reduction, optimizer updates, metrics, and
//! checkpointing.

use crate::batch;
use crate::config::EvalCadence;
use crate::data::{LabeledEventSet, LabeledImageSet};
use crate::encode::{bernoulli_encode, bin_events, eval_encode_seed, train_encode_seed, BinMode};
use crate::engine::{backward_sample, loss_single, GradientSet, Mode};
use crate::error::{Error, Result};
use crate::forward::{argmax_rate, forward_unroll};
use crate::math::{derive_seed, SeedDomain};
use crate::optim::Optimizer;
use crate::spike::SpikeTrain;
use crate::surrogate::SurrogateSpec;
use crate::topology::{save_checkpoint, Network};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

/// A dataset the trainer can draw encoded samples from.
pub enum TrainData<'a> {
    Images(&'a LabeledImageSet),
    Events {
        set: &'a LabeledEventSet,
        dt_ms: f64,
        offset_ms: f64,
        bin_mode: BinMode,
    },
}

impl<'a> TrainData<'a> {
    pub fn len(&self) -> usize {
        match self {
            TrainData::Images(s) => s.len(),
            TrainData::Events { set, .. } => set.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn label(&self, idx: usize) -> usize {
        match self {
            TrainData::Images(s) => s.labels[idx] as usize,
            TrainData::Events { set, .. } => set.labels[idx] as usize,
        }
    }

    /// Encodes sample `idx` into a spike train. Bernoulli coding consumes the
    /// seed; event binning is deterministic and ignores it.
    pub fn encode(&self, idx: usize, t_window: usize, seed: u64) -> Result<SpikeTrain> {
        match self {
            TrainData::Images(s) => Ok(bernoulli_encode(s.image(idx), t_window, seed)),
            TrainData::Events {
                set,
                dt_ms,
                offset_ms,
                bin_mode,
            } => bin_events(&set.streams[idx], t_window, *dt_ms, *offset_ms, *bin_mode),
        }
    }
}

/// One epoch's summary. Wall-clock time is reported on the console and kept
/// here for callers, but never written to the metrics file, which must be
/// byte-identical across reruns and worker counts.
#[derive(Debug, Clone)]
pub struct MetricsRow {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub test_accuracy: Option<f64>,
    pub wall_clock_s: f64,
}

#[derive(Debug, Clone)]
pub struct TrainerOptions {
    pub epochs: usize,
    pub batch: usize,
    pub seed: u64,
    pub mode: Mode,
    pub surrogate: SurrogateSpec,
    pub workers: usize,
    pub eval: EvalCadence,
    /// When set, metrics.csv plus final/best checkpoints land here.
    pub out_dir: Option<PathBuf>,
    /// Resolved-config hash embedded in every output file.
    pub config_hash: String,
    /// Per-epoch progress lines on stdout.
    pub log: bool,
}

impl TrainerOptions {
    pub fn new(epochs: usize, batch: usize, seed: u64, mode: Mode, surrogate: SurrogateSpec) -> Self {
        TrainerOptions {
            epochs,
            batch,
            seed,
            mode,
            surrogate,
            workers: 0,
            eval: EvalCadence::EveryEpoch,
            out_dir: None,
            config_hash: String::new(),
            log: false,
        }
    }
}

/// Trains `net` in place; returns per-epoch metrics.
pub fn train(
    net: &mut Network,
    train_data: &TrainData,
    test_data: Option<&TrainData>,
    optim: &mut Optimizer,
    opts: &TrainerOptions,
) -> Result<Vec<MetricsRow>> {
    if train_data.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    let n = train_data.len();
    let mut metrics = Vec::with_capacity(opts.epochs);
    let mut best_score = f64::NEG_INFINITY;

    let mut csv = match &opts.out_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            let path = dir.join("metrics.csv");
            let mut f = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
            writeln!(f, "# config {}", opts.config_hash).map_err(|e| Error::io(&path, e))?;
            writeln!(f, "epoch,train_loss,train_accuracy,test_accuracy")
                .map_err(|e| Error::io(&path, e))?;
            Some((f, path))
        }
        None => None,
    };

    batch::with_pool(opts.workers, || -> Result<()> {
        for epoch in 0..opts.epochs {
            let start = Instant::now();
            let mut order: Vec<usize> = (0..n).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
                opts.seed,
                SeedDomain::Shuffle,
                epoch as u64,
                0,
            ));
            order.shuffle(&mut rng);

            let mut loss_sum = 0.0;
            let mut correct = 0usize;
            for (batch_idx, batch_samples) in order.chunks(opts.batch).enumerate() {
                let (l, c) = run_batch(net, train_data, batch_samples, optim, opts, epoch)
                    .map_err(|e| annotate_batch(e, epoch, batch_idx))?;
                loss_sum += l;
                correct += c;
            }
            let train_loss = loss_sum / n as f64;
            let train_accuracy = correct as f64 / n as f64;

            let run_eval = match opts.eval {
                EvalCadence::EveryEpoch => true,
                EvalCadence::Final => epoch + 1 == opts.epochs,
                EvalCadence::Never => false,
            };
            let test_accuracy = match (run_eval, test_data) {
                (true, Some(td)) => Some(evaluate_inner(net, td, opts)?),
                _ => None,
            };

            let row = MetricsRow {
                epoch,
                train_loss,
                train_accuracy,
                test_accuracy,
                wall_clock_s: start.elapsed().as_secs_f64(),
            };
            if opts.log {
                println!(
                    "epoch {:>3}  loss {:.6}  train {:.4}  test {}  ({:.1}s)",
                    row.epoch,
                    row.train_loss,
                    row.train_accuracy,
                    row.test_accuracy
                        .map(|a| format!("{a:.4}"))
                        .unwrap_or_else(|| "-".into()),
                    row.wall_clock_s
                );
            }
            if let Some((f, path)) = &mut csv {
                writeln!(
                    f,
                    "{},{},{},{}",
                    row.epoch,
                    row.train_loss,
                    row.train_accuracy,
                    row.test_accuracy.map(|a| a.to_string()).unwrap_or_default()
                )
                .map_err(|e| Error::io(&*path, e))?;
                f.flush().map_err(|e| Error::io(&*path, e))?;
            }

            if let Some(dir) = &opts.out_dir {
                let score = row.test_accuracy.unwrap_or(-row.train_loss);
                if score > best_score {
                    best_score = score;
                    save_checkpoint(net, &opts.config_hash, &dir.join("best.ckpt"))?;
                }
            }
            metrics.push(row);
        }
        Ok(())
    })?;

    if let Some(dir) = &opts.out_dir {
        save_checkpoint(net, &opts.config_hash, &dir.join("final.ckpt"))?;
        if opts.epochs == 0 {
            // no epoch ever wrote best.ckpt; the initialization is the best
            save_checkpoint(net, &opts.config_hash, &dir.join("best.ckpt"))?;
        }
    }
    Ok(metrics)
}

/// One batch: encode + forward + backward per sample in fixed-size chunks,
/// fold chunk results in order, apply the optimizer once.
fn run_batch(
    net: &mut Network,
    data: &TrainData,
    samples: &[usize],
    optim: &mut Optimizer,
    opts: &TrainerOptions,
    epoch: usize,
) -> Result<(f64, usize)> {
    let n_classes = net.output_len();
    let scale = 1.0 / samples.len() as f64;
    let gate = opts.mode.gate(&opts.surrogate);
    let t_window = net.time_window;

    struct ChunkOut {
        grads: GradientSet,
        loss_sum: f64,
        correct: usize,
        err: Option<Error>,
    }

    let net_ref: &Network = net;
    let chunks = batch::map_chunks(opts.workers, samples, batch::GRAD_CHUNK, |_ci, part| {
        let mut out = ChunkOut {
            grads: GradientSet::zeros_like(net_ref),
            loss_sum: 0.0,
            correct: 0,
            err: None,
        };
        for &s in part {
            let label = data.label(s);
            let mut target = vec![0.0; n_classes];
            target[label] = 1.0;
            let encoded = match data.encode(s, t_window, train_encode_seed(opts.seed, epoch, s)) {
                Ok(e) => e,
                Err(e) => {
                    out.err = Some(e);
                    return out;
                }
            };
            let trace = match forward_unroll(net_ref, &encoded, gate) {
                Ok(t) => t,
                Err(e) => {
                    out.err = Some(e);
                    return out;
                }
            };
            let rates = trace.output_rates();
            out.loss_sum += loss_single(&rates, &target);
            if argmax_rate(&rates) == label {
                out.correct += 1;
            }
            if let Err(e) = backward_sample(
                net_ref,
                &trace,
                &target,
                &opts.surrogate,
                opts.mode,
                scale,
                &mut out.grads,
            ) {
                out.err = Some(e);
                return out;
            }
        }
        out
    });

    let mut grads: Option<GradientSet> = None;
    let mut loss_sum = 0.0;
    let mut correct = 0;
    for c in chunks {
        if let Some(e) = c.err {
            return Err(e);
        }
        loss_sum += c.loss_sum;
        correct += c.correct;
        match &mut grads {
            None => grads = Some(c.grads),
            Some(g) => g.add_assign(&c.grads),
        }
    }
    optim.apply(net, &grads.unwrap());
    Ok((loss_sum, correct))
}

/// Test-set accuracy with evaluation-time encoding seeds (fixed across
/// epochs, so scores move only with the parameters).
pub fn evaluate(net: &Network, data: &TrainData, seed: u64, workers: usize) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Config("evaluation set is empty".into()));
    }
    let opts = TrainerOptions {
        epochs: 0,
        batch: 0,
        seed,
        mode: Mode::Stbp,
        surrogate: SurrogateSpec::new(crate::surrogate::SurrogateKind::Rectangular, 1.0, 1.0),
        workers,
        eval: EvalCadence::Never,
        out_dir: None,
        config_hash: String::new(),
        log: false,
    };
    batch::with_pool(workers, || evaluate_inner(net, data, &opts))
}

fn evaluate_inner(net: &Network, data: &TrainData, opts: &TrainerOptions) -> Result<f64> {
    let n = data.len();
    let idx: Vec<usize> = (0..n).collect();
    let t_window = net.time_window;
    let results = batch::map_chunks(opts.workers, &idx, 64, |_ci, part| -> Result<usize> {
        let mut correct = 0;
        for &s in part {
            let encoded = data.encode(s, t_window, eval_encode_seed(opts.seed, s))?;
            let trace = forward_unroll(net, &encoded, crate::forward::GateMode::Hard)?;
            if argmax_rate(&trace.output_rates()) == data.label(s) {
                correct += 1;
            }
        }
        Ok(correct)
    });
    let mut correct = 0;
    for r in results {
        correct += r?;
    }
    Ok(correct as f64 / n as f64)
}

fn annotate_batch(e: Error, epoch: usize, batch_idx: usize) -> Error {
    match e {
        Error::Numerical {
            layer,
            step,
            reason,
        } => Error::Numerical {
            layer,
            step,
            reason: format!("{reason} (epoch {epoch}, batch {batch_idx}; replay with the run config and seed)"),
        },
        other => other,
    }
}

//! Unrolled forward pass over the time window, retaining the full
//! per-layer, per-step trace the backward pass differentiates.

use crate::conv;
use crate::error::{Error, Result};
use crate::lif::{forget_gate, spike_gate};
use crate::spike::SpikeTrain;
use crate::surrogate::SurrogateSpec;
use crate::topology::{LayerKind, Network};

/// Which output gate the forward pass applies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GateMode {
    /// The hard threshold gate; spikes are exactly 0 or 1.
    Hard,
    /// The surrogate's antiderivative as a differentiable gate. Used by the
    /// gradient-check oracle; outputs are fractional.
    Smooth(SurrogateSpec),
}

/// Per-layer recorded quantities, `[T * width]` row-major by step.
/// Pool layers record outputs only; `x` and `u` stay empty.
#[derive(Debug, Clone)]
pub struct LayerTrace {
    pub width: usize,
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub o: Vec<f64>,
}

impl LayerTrace {
    pub fn x_at(&self, t: usize) -> &[f64] {
        &self.x[t * self.width..(t + 1) * self.width]
    }

    pub fn u_at(&self, t: usize) -> &[f64] {
        &self.u[t * self.width..(t + 1) * self.width]
    }

    pub fn o_at(&self, t: usize) -> &[f64] {
        &self.o[t * self.width..(t + 1) * self.width]
    }
}

/// Forward history for one sample: the input train plus every layer's trace.
#[derive(Debug, Clone)]
pub struct Trace {
    pub input: SpikeTrain,
    pub layers: Vec<LayerTrace>,
    pub steps: usize,
}

impl Trace {
    /// Spikes feeding layer `n` at step `t` (the previous layer's output, or
    /// the network input for the first layer).
    pub fn input_of(&self, n: usize, t: usize) -> &[f64] {
        if n == 0 {
            self.input.step(t)
        } else {
            self.layers[n - 1].o_at(t)
        }
    }

    /// Output-layer firing rates over the window.
    pub fn output_rates(&self) -> Vec<f64> {
        let last = self.layers.last().expect("network has layers");
        let mut r = vec![0.0; last.width];
        for t in 0..self.steps {
            for (acc, v) in r.iter_mut().zip(last.o_at(t)) {
                *acc += v;
            }
        }
        let inv = 1.0 / self.steps as f64;
        for v in &mut r {
            *v *= inv;
        }
        r
    }

    /// Output spikes as a train (copies).
    pub fn output_train(&self) -> SpikeTrain {
        let last = self.layers.last().expect("network has layers");
        SpikeTrain::from_rows(self.steps, last.width, last.o.clone())
    }
}

/// Runs the layer/time recursion for every step, threading each LIF layer's
/// potential through time and applying pooling statelessly.
pub fn forward_unroll(net: &Network, input: &SpikeTrain, gate: GateMode) -> Result<Trace> {
    if input.width() != net.input_len() {
        return Err(Error::shape(
            "forward_unroll input width",
            net.input_len(),
            input.width(),
        ));
    }
    if input.steps() != net.time_window {
        return Err(Error::shape(
            "forward_unroll time window",
            net.time_window,
            input.steps(),
        ));
    }
    let t_win = net.time_window;
    let mut layers: Vec<LayerTrace> = net
        .layers
        .iter()
        .map(|l| {
            let width = l.kind.out_len();
            let state_len = if l.kind.is_lif() { t_win * width } else { 0 };
            LayerTrace {
                width,
                x: vec![0.0; state_len],
                u: vec![0.0; state_len],
                o: vec![0.0; t_win * width],
            }
        })
        .collect();

    for t in 0..t_win {
        for (n, layer) in net.layers.iter().enumerate() {
            // borrow the previous layer's output for this step without
            // holding `layers` mutably twice
            let (before, rest) = layers.split_at_mut(n);
            let lt = &mut rest[0];
            let prev_o: &[f64] = if n == 0 {
                input.step(t)
            } else {
                let p = &before[n - 1];
                &p.o[t * p.width..(t + 1) * p.width]
            };
            let width = lt.width;
            let row = t * width..(t + 1) * width;
            match layer.kind {
                LayerKind::Dense { in_dim, out_dim } => {
                    let x = &mut lt.x[row.clone()];
                    dense_drive(x, &layer.w, prev_o, in_dim, out_dim);
                    lif_update(lt, t, layer, gate);
                }
                LayerKind::Conv {
                    in_ch,
                    out_ch,
                    kernel,
                    stride,
                    in_h,
                    in_w,
                } => {
                    let x = &mut lt.x[row.clone()];
                    conv::conv_forward(x, prev_o, &layer.w, in_ch, in_h, in_w, out_ch, kernel, stride);
                    lif_update(lt, t, layer, gate);
                }
                LayerKind::AvgPool {
                    window,
                    ch,
                    in_h,
                    in_w,
                } => {
                    conv::avgpool_forward(&mut lt.o[row], prev_o, ch, in_h, in_w, window);
                }
            }
        }
    }
    Ok(Trace {
        input: input.clone(),
        layers,
        steps: t_win,
    })
}

/// `x[i] = sum_j w[i][j] * o[j]`, skipping exact-zero inputs (spike vectors
/// are sparse; the skip is exact, not an approximation).
fn dense_drive(x: &mut [f64], w: &[f64], o: &[f64], in_dim: usize, out_dim: usize) {
    debug_assert_eq!(o.len(), in_dim);
    let mut active: Vec<(usize, f64)> = Vec::with_capacity(in_dim / 4);
    let mut binary = true;
    for (j, &v) in o.iter().enumerate() {
        if v != 0.0 {
            active.push((j, v));
            binary &= v == 1.0;
        }
    }
    if binary {
        for i in 0..out_dim {
            let row = &w[i * in_dim..(i + 1) * in_dim];
            let mut acc = 0.0;
            for &(j, _) in &active {
                acc += row[j];
            }
            x[i] = acc;
        }
    } else {
        for i in 0..out_dim {
            let row = &w[i * in_dim..(i + 1) * in_dim];
            let mut acc = 0.0;
            for &(j, v) in &active {
                acc += row[j] * v;
            }
            x[i] = acc;
        }
    }
}

/// Applies the potential recursion and gate for step `t` of one LIF layer,
/// reading step `t-1`'s stored potential and spikes.
fn lif_update(lt: &mut LayerTrace, t: usize, layer: &crate::topology::Layer, gate: GateMode) {
    let width = lt.width;
    let tau = layer.lif.tau;
    let v_th = layer.lif.v_th;
    // the smooth gate is always centered on this layer's threshold
    let gate = match gate {
        GateMode::Hard => GateMode::Hard,
        GateMode::Smooth(spec) => GateMode::Smooth(SurrogateSpec { v_th, ..spec }),
    };
    let row = t * width..(t + 1) * width;
    if t == 0 {
        // u starts at zero with no previous spike: u = x + b
        for i in 0..width {
            let u = lt.x[t * width + i] + layer.b[i];
            lt.u[t * width + i] = u;
            lt.o[t * width + i] = apply_gate(u, v_th, gate);
        }
    } else {
        let prev = (t - 1) * width..t * width;
        for i in 0..width {
            let u_prev = lt.u[prev.start + i];
            let o_prev = lt.o[prev.start + i];
            let u = u_prev * forget_gate(o_prev, tau) + lt.x[row.start + i] + layer.b[i];
            lt.u[row.start + i] = u;
            lt.o[row.start + i] = apply_gate(u, v_th, gate);
        }
    }
}

#[inline]
fn apply_gate(u: f64, v_th: f64, gate: GateMode) -> f64 {
    match gate {
        GateMode::Hard => spike_gate(u, v_th),
        GateMode::Smooth(spec) => spec.smooth_gate(u),
    }
}

/// Predicted class: argmax of output firing rates, ties to the lowest index.
pub fn predict(trace: &Trace) -> usize {
    argmax_rate(&trace.output_rates())
}

pub fn argmax_rate(rates: &[f64]) -> usize {
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    for (i, &v) in rates.iter().enumerate() {
        if v > best_v {
            best_v = v;
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lif::{lif_step, LifParams, PotentialState};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn lif(tau: f64, v_th: f64) -> LifParams {
        LifParams::new(tau, v_th, 1.0).unwrap()
    }

    #[test]
    fn zero_input_zero_bias_stays_silent() {
        let mut net = Network::from_arch("2-3-2", lif(0.1, 1.5), 5).unwrap();
        net.init_params(1);
        let input = SpikeTrain::zeros(5, 2);
        let trace = forward_unroll(&net, &input, GateMode::Hard).unwrap();
        for layer in &trace.layers {
            assert!(layer.o.iter().all(|&v| v == 0.0));
            assert!(layer.u.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn identity_net_fires_every_step() {
        // 1-1 net, w=1, b=0, v_th=0.5: constant input 1 crosses threshold at
        // every step because the post-spike carryover is ~0
        let mut net = Network::from_arch("1-1", lif(0.1, 0.5), 6).unwrap();
        net.layers[0].w[0] = 1.0;
        let input = SpikeTrain::from_rows(6, 1, vec![1.0; 6]);
        let trace = forward_unroll(&net, &input, GateMode::Hard).unwrap();
        assert!(trace.layers[0].o.iter().all(|&v| v == 1.0));
        assert_eq!(trace.output_rates(), vec![1.0]);
    }

    #[test]
    fn trace_shapes_match_architecture() {
        let mut net = Network::from_arch("784-400-10", lif(0.1, 1.5), 30).unwrap();
        net.init_params(3);
        let input = SpikeTrain::zeros(30, 784);
        let trace = forward_unroll(&net, &input, GateMode::Hard).unwrap();
        assert_eq!(trace.input.width(), 784);
        assert_eq!(trace.layers[0].width, 400);
        assert_eq!(trace.layers[1].width, 10);
        assert_eq!(trace.layers[0].o.len(), 30 * 400);
        assert_eq!(trace.layers[1].o.len(), 30 * 10);
    }

    #[test]
    fn unroll_matches_sequential_lif_steps() {
        // reference: T applications of the single-step update per layer
        let mut net = Network::from_arch("5-4-3", lif(0.2, 0.4), 7).unwrap();
        net.init_params(11);
        for layer in &mut net.layers {
            for b in layer.b.iter_mut() {
                *b = 0.05;
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let data: Vec<f64> = (0..7 * 5)
            .map(|_| if rng.gen_bool(0.5) { 1.0 } else { 0.0 })
            .collect();
        let input = SpikeTrain::from_rows(7, 5, data);
        let trace = forward_unroll(&net, &input, GateMode::Hard).unwrap();

        let mut states: Vec<PotentialState> =
            vec![PotentialState::zeros(4), PotentialState::zeros(3)];
        for t in 0..7 {
            let mut prev: Vec<f64> = input.step(t).to_vec();
            for (n, layer) in net.layers.iter().enumerate() {
                let crate::topology::LayerKind::Dense { in_dim, out_dim } = layer.kind else {
                    unreachable!()
                };
                let mut x = vec![0.0; out_dim];
                for i in 0..out_dim {
                    for j in 0..in_dim {
                        x[i] += layer.w[i * in_dim + j] * prev[j];
                    }
                }
                states[n] = lif_step(&states[n], &x, &layer.b, &layer.lif).unwrap();
                assert_eq!(trace.layers[n].u_at(t), &states[n].u[..]);
                assert_eq!(trace.layers[n].o_at(t), &states[n].o_prev[..]);
                prev = states[n].o_prev.clone();
            }
        }
    }

    #[test]
    fn pool_outputs_bounded_for_binary_spikes() {
        let mut net = Network::from_arch("6x6x1-2C3-P2-3", lif(0.1, 0.3), 4).unwrap();
        net.init_params(2);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let data: Vec<f64> = (0..4 * 36)
            .map(|_| if rng.gen_bool(0.6) { 1.0 } else { 0.0 })
            .collect();
        let input = SpikeTrain::from_rows(4, 36, data);
        let trace = forward_unroll(&net, &input, GateMode::Hard).unwrap();
        // layer 1 is the pool
        assert!(trace.layers[1]
            .o
            .iter()
            .all(|&v| (0.0..=1.0).contains(&v)));
        assert!(trace.layers[1].u.is_empty());
    }

    #[test]
    fn input_permutation_with_matching_weight_columns_is_invariant() {
        let mut net = Network::from_arch("6-5-3", lif(0.15, 0.4), 5).unwrap();
        net.init_params(21);
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let data: Vec<f64> = (0..5 * 6)
            .map(|_| if rng.gen_bool(0.5) { 1.0 } else { 0.0 })
            .collect();
        let input = SpikeTrain::from_rows(5, 6, data.clone());
        let base = forward_unroll(&net, &input, GateMode::Hard).unwrap();

        // permute input neurons together with first-layer weight columns
        let perm = [3usize, 0, 4, 1, 5, 2];
        let mut permuted_net = net.clone();
        {
            let layer = &mut permuted_net.layers[0];
            let crate::topology::LayerKind::Dense { in_dim, out_dim } = layer.kind else {
                unreachable!()
            };
            let orig = layer.w.clone();
            for i in 0..out_dim {
                for (new_j, &old_j) in perm.iter().enumerate() {
                    layer.w[i * in_dim + new_j] = orig[i * in_dim + old_j];
                }
            }
        }
        let mut pdata = vec![0.0; data.len()];
        for t in 0..5 {
            for (new_j, &old_j) in perm.iter().enumerate() {
                pdata[t * 6 + new_j] = data[t * 6 + old_j];
            }
        }
        let pinput = SpikeTrain::from_rows(5, 6, pdata);
        let permuted = forward_unroll(&permuted_net, &pinput, GateMode::Hard).unwrap();
        for (a, b) in base.layers.iter().zip(&permuted.layers) {
            assert_eq!(a.o, b.o);
            assert_eq!(a.u, b.u);
        }
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let net = Network::from_arch("4-2", lif(0.1, 1.0), 3).unwrap();
        assert!(forward_unroll(&net, &SpikeTrain::zeros(3, 5), GateMode::Hard).is_err());
        assert!(forward_unroll(&net, &SpikeTrain::zeros(2, 4), GateMode::Hard).is_err());
    }

    #[test]
    fn predict_breaks_ties_low() {
        assert_eq!(argmax_rate(&[0.1, 0.9]), 1);
        assert_eq!(argmax_rate(&[0.5, 0.5]), 0);
        assert_eq!(argmax_rate(&[0.0, 0.0, 0.0]), 0);
    }
}

//! Loss and the spatio-temporal backward pass.
//!
//! The backward mechanically reverse-differentiates the unrolled forward
//! recursion, walking steps from the last to the first and layers from the
//! output down. Per layer and step it combines:
//!
//! * the direct loss derivative at the output layer — the rate average puts
//!   every step's output spikes in the loss, so this term lands at every `t`;
//! * the spatial term from the layer above at the same step (transposed
//!   weights, transposed convolution, or pool spreading);
//! * the temporal terms from step `t+1` of the same layer, through both uses
//!   of step `t`'s state: the potential carry `u * f(o)` contributes
//!   `du^{t+1} * f(o^t)` to `du^t` and `du^{t+1} * u^t * f'(o^t)` to `do^t`.
//!
//! The spike gate's derivative is the configured surrogate curve (or, in
//! smooth-oracle mode, the exact derivative of the smooth forward gate — the
//! same curve by construction). `Sdbp` zeroes both temporal pathways and
//! keeps only within-step spatial propagation plus the direct term, which is
//! the spatial-only baseline the temporal ablation compares against.

use crate::batch;
use crate::conv;
use crate::error::{Error, Result};
use crate::forward::{argmax_rate, forward_unroll, GateMode, Trace};
use crate::optim::Optimizer;
use crate::spike::SpikeTrain;
use crate::surrogate::SurrogateSpec;
use crate::topology::{LayerKind, Network};

/// Gradient propagation mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Full propagation through layers and time.
    Stbp,
    /// Spatial-only ablation: temporal pathways zeroed.
    Sdbp,
    /// Full propagation against the smooth forward gate, making the loss
    /// differentiable so finite differences are valid.
    SmoothOracle,
}

impl Mode {
    pub fn gate(&self, surrogate: &SurrogateSpec) -> GateMode {
        match self {
            Mode::SmoothOracle => GateMode::Smooth(*surrogate),
            _ => GateMode::Hard,
        }
    }

    pub fn parse(s: &str) -> Option<Mode> {
        match s {
            "stbp" => Some(Mode::Stbp),
            "sdbp" => Some(Mode::Sdbp),
            "smooth-oracle" => Some(Mode::SmoothOracle),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Mode::Stbp => "stbp",
            Mode::Sdbp => "sdbp",
            Mode::SmoothOracle => "smooth-oracle",
        }
    }
}

/// Parameter gradients, shaped exactly like the network's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub dw: Vec<Vec<f64>>,
    pub db: Vec<Vec<f64>>,
}

impl GradientSet {
    pub fn zeros_like(net: &Network) -> Self {
        GradientSet {
            dw: net.layers.iter().map(|l| vec![0.0; l.w.len()]).collect(),
            db: net.layers.iter().map(|l| vec![0.0; l.b.len()]).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &GradientSet) {
        for (a, b) in self.dw.iter_mut().zip(&other.dw) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        for (a, b) in self.db.iter_mut().zip(&other.db) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }
}

/// Loss and loss-gradient adjoints per layer and step, `[T * width]` as in
/// the trace. Pool layers carry `delta_o` only.
#[derive(Debug, Clone)]
pub struct BackwardState {
    pub delta_o: Vec<Vec<f64>>,
    pub delta_u: Vec<Vec<f64>>,
}

/// Mean-square rate loss over a batch: `1/(2S) sum_s ||y_s - mean_t o_s||^2`.
pub fn loss(outputs: &[SpikeTrain], targets: &[Vec<f64>]) -> Result<f64> {
    if outputs.is_empty() || outputs.len() != targets.len() {
        return Err(Error::shape("loss batch", targets.len(), outputs.len()));
    }
    let mut total = 0.0;
    for (out, y) in outputs.iter().zip(targets) {
        if out.width() != y.len() {
            return Err(Error::shape("loss classes", y.len(), out.width()));
        }
        total += loss_single(&out.rates(), y);
    }
    Ok(total / outputs.len() as f64)
}

/// One sample's contribution before the 1/S average: `1/2 ||y - r||^2`.
pub fn loss_single(rates: &[f64], target: &[f64]) -> f64 {
    rates
        .iter()
        .zip(target)
        .map(|(r, y)| {
            let d = y - r;
            0.5 * d * d
        })
        .sum()
}

/// Direct loss derivative at the output layer, applied at every step's
/// output spikes: `-(1/(T*S)) (y - r)`.
pub fn output_direct_grad(rates: &[f64], target: &[f64], t_window: usize, samples: usize) -> Vec<f64> {
    let scale = 1.0 / (t_window as f64 * samples as f64);
    rates
        .iter()
        .zip(target)
        .map(|(r, y)| -scale * (y - r))
        .collect()
}

/// Reverse pass for one sample. `sample_scale` is the loss's batch factor
/// (1/S); gradients accumulate into `grads`.
pub fn backward_sample(
    net: &Network,
    trace: &Trace,
    target: &[f64],
    surrogate: &SurrogateSpec,
    mode: Mode,
    sample_scale: f64,
    grads: &mut GradientSet,
) -> Result<BackwardState> {
    let t_win = trace.steps;
    let n_layers = net.layers.len();
    let out_len = net.output_len();
    if target.len() != out_len {
        return Err(Error::shape("backward target", out_len, target.len()));
    }
    let temporal = mode != Mode::Sdbp;

    // -(1/T)(y - r) * sample_scale, shared by every step's output spikes
    let rates = trace.output_rates();
    let direct: Vec<f64> = rates
        .iter()
        .zip(target)
        .map(|(r, y)| -(y - r) * sample_scale / t_win as f64)
        .collect();

    let mut delta_o: Vec<Vec<f64>> = net
        .layers
        .iter()
        .map(|l| vec![0.0; t_win * l.kind.out_len()])
        .collect();
    let mut delta_u: Vec<Vec<f64>> = net
        .layers
        .iter()
        .map(|l| {
            if l.kind.is_lif() {
                vec![0.0; t_win * l.kind.out_len()]
            } else {
                Vec::new()
            }
        })
        .collect();

    for t in (0..t_win).rev() {
        for n in (0..n_layers).rev() {
            let layer = &net.layers[n];
            let width = layer.kind.out_len();
            let row = t * width..(t + 1) * width;

            // spatial / direct contributions into delta_o[n] at step t
            if n == n_layers - 1 {
                delta_o[n][row.clone()].copy_from_slice(&direct);
            } else {
                let above = &net.layers[n + 1];
                let a_width = above.kind.out_len();
                let a_row = t * a_width..(t + 1) * a_width;
                // split so we can write layer n while reading layer n+1
                let (lo, hi) = delta_o.split_at_mut(n + 1);
                let dst = &mut lo[n][row.clone()];
                match above.kind {
                    LayerKind::Dense { in_dim, out_dim } => {
                        let src = &delta_u[n + 1][a_row];
                        dense_input_grad(dst, src, &above.w, in_dim, out_dim);
                    }
                    LayerKind::Conv {
                        in_ch,
                        out_ch,
                        kernel,
                        in_h,
                        in_w,
                        ..
                    } => {
                        let src = &delta_u[n + 1][a_row];
                        conv::conv_input_grad(dst, src, &above.w, in_ch, in_h, in_w, out_ch, kernel);
                    }
                    LayerKind::AvgPool {
                        window,
                        ch,
                        in_h,
                        in_w,
                    } => {
                        // the pool is stateless: its incoming gradient is its
                        // own delta_o, spread uniformly over each window
                        let src = &hi[0][a_row];
                        conv::avgpool_backward(dst, src, ch, in_h, in_w, window);
                    }
                }
            }

            if !layer.kind.is_lif() {
                continue;
            }

            let lt = &trace.layers[n];
            let u_row = lt.u_at(t);
            let o_row = lt.o_at(t);
            let gate = SurrogateSpec {
                v_th: layer.lif.v_th,
                ..*surrogate
            };
            let tau = layer.lif.tau;

            if temporal && t + 1 < t_win {
                // do^t += du^{t+1} * u^t * f'(o^t)
                let next = (t + 1) * width..(t + 2) * width;
                let du_next = &delta_u[n][next];
                let dst = &mut delta_o[n][row.clone()];
                for i in 0..width {
                    dst[i] += du_next[i] * u_row[i] * crate::lif::forget_gate_deriv(o_row[i], tau);
                }
            }

            // du^t = do^t * g'(u^t) [+ du^{t+1} * f(o^t)]
            let mut numerical_bad = false;
            {
                let do_row = &delta_o[n][row.clone()];
                // compute into a scratch row, then store (delta_u[n] also
                // holds the t+1 row we read from)
                let mut du_row = vec![0.0; width];
                for i in 0..width {
                    du_row[i] = do_row[i] * gate.value(u_row[i]);
                }
                if temporal && t + 1 < t_win {
                    let next = (t + 1) * width..(t + 2) * width;
                    let du_next = &delta_u[n][next];
                    for i in 0..width {
                        du_row[i] += du_next[i] * crate::lif::forget_gate(o_row[i], tau);
                    }
                }
                for &g in &du_row {
                    if !g.is_finite() {
                        numerical_bad = true;
                    }
                }
                delta_u[n][row.clone()].copy_from_slice(&du_row);
            }
            if numerical_bad {
                return Err(Error::Numerical {
                    layer: n,
                    step: t,
                    reason: "non-finite potential gradient".into(),
                });
            }

            // parameter gradients: dW += du^t (x) input^t, db += du^t
            let du_row = &delta_u[n][row];
            let input = trace.input_of(n, t);
            match layer.kind {
                LayerKind::Dense { in_dim, .. } => {
                    dense_weight_grad(&mut grads.dw[n], du_row, input, in_dim);
                }
                LayerKind::Conv {
                    in_ch,
                    out_ch,
                    kernel,
                    in_h,
                    in_w,
                    ..
                } => {
                    conv::conv_kernel_grad(
                        &mut grads.dw[n],
                        du_row,
                        input,
                        in_ch,
                        in_h,
                        in_w,
                        out_ch,
                        kernel,
                    );
                }
                LayerKind::AvgPool { .. } => unreachable!(),
            }
            for (b, &g) in grads.db[n].iter_mut().zip(du_row) {
                *b += g;
            }
        }
    }
    Ok(BackwardState { delta_o, delta_u })
}

/// `dst[j] += sum_i du[i] * w[i][j]` — the transposed-weight spatial term.
fn dense_input_grad(dst: &mut [f64], du: &[f64], w: &[f64], in_dim: usize, out_dim: usize) {
    debug_assert_eq!(du.len(), out_dim);
    debug_assert_eq!(dst.len(), in_dim);
    for (i, &g) in du.iter().enumerate() {
        if g == 0.0 {
            continue;
        }
        let row = &w[i * in_dim..(i + 1) * in_dim];
        for (d, &wv) in dst.iter_mut().zip(row) {
            *d += g * wv;
        }
    }
}

/// `dw[i][j] += du[i] * input[j]`, skipping exact zeros on both sides.
fn dense_weight_grad(dw: &mut [f64], du: &[f64], input: &[f64], in_dim: usize) {
    let mut active: Vec<(usize, f64)> = Vec::with_capacity(input.len() / 4);
    let mut binary = true;
    for (j, &v) in input.iter().enumerate() {
        if v != 0.0 {
            active.push((j, v));
            binary &= v == 1.0;
        }
    }
    for (i, &g) in du.iter().enumerate() {
        if g == 0.0 {
            continue;
        }
        let row = &mut dw[i * in_dim..(i + 1) * in_dim];
        if binary {
            for &(j, _) in &active {
                row[j] += g;
            }
        } else {
            for &(j, v) in &active {
                row[j] += g * v;
            }
        }
    }
}

/// Forward + backward for a batch; returns averaged gradients, the batch
/// loss, and the number of correct rate-argmax predictions.
pub fn batch_gradients(
    net: &Network,
    inputs: &[SpikeTrain],
    labels: &[usize],
    surrogate: &SurrogateSpec,
    mode: Mode,
    workers: usize,
) -> Result<(GradientSet, f64, usize)> {
    if inputs.is_empty() || inputs.len() != labels.len() {
        return Err(Error::shape("batch", labels.len(), inputs.len()));
    }
    let n_classes = net.output_len();
    let scale = 1.0 / inputs.len() as f64;
    let gate = mode.gate(surrogate);

    struct ChunkOut {
        grads: GradientSet,
        loss_sum: f64,
        correct: usize,
        err: Option<Error>,
    }

    let idx: Vec<usize> = (0..inputs.len()).collect();
    let chunks = batch::map_chunks(workers, &idx, batch::GRAD_CHUNK, |_ci, samples| {
        let mut out = ChunkOut {
            grads: GradientSet::zeros_like(net),
            loss_sum: 0.0,
            correct: 0,
            err: None,
        };
        for &s in samples {
            let mut target = vec![0.0; n_classes];
            target[labels[s]] = 1.0;
            let trace = match forward_unroll(net, &inputs[s], gate) {
                Ok(t) => t,
                Err(e) => {
                    out.err = Some(e);
                    return out;
                }
            };
            let rates = trace.output_rates();
            out.loss_sum += loss_single(&rates, &target);
            if argmax_rate(&rates) == labels[s] {
                out.correct += 1;
            }
            if let Err(e) =
                backward_sample(net, &trace, &target, surrogate, mode, scale, &mut out.grads)
            {
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
    Ok((grads.unwrap(), loss_sum * scale, correct))
}

/// One optimizer update over a batch: returns `(loss, accuracy)`.
pub fn train_step(
    net: &mut Network,
    inputs: &[SpikeTrain],
    labels: &[usize],
    surrogate: &SurrogateSpec,
    optim: &mut Optimizer,
    mode: Mode,
    workers: usize,
) -> Result<(f64, f64)> {
    let (grads, loss, correct) = batch_gradients(net, inputs, labels, surrogate, mode, workers)?;
    optim.apply(net, &grads);
    Ok((loss, correct as f64 / inputs.len() as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lif::LifParams;
    use crate::surrogate::SurrogateKind;

    fn train(rows: &[&[f64]]) -> SpikeTrain {
        let width = rows[0].len();
        let mut data = Vec::new();
        for r in rows {
            data.extend_from_slice(r);
        }
        SpikeTrain::from_rows(rows.len(), width, data)
    }

    #[test]
    fn loss_matches_hand_values() {
        // rates equal target -> zero
        let o = train(&[&[1.0, 0.0], &[1.0, 0.0]]);
        assert_eq!(loss(&[o], &[vec![1.0, 0.0]]).unwrap(), 0.0);
        // rates (0.5, 0) vs (1, 0): 1/2 * 0.25 = 0.125
        let o = train(&[&[1.0, 0.0], &[0.0, 0.0]]);
        let l = loss(&[o.clone()], &[vec![1.0, 0.0]]).unwrap();
        assert!((l - 0.125).abs() < 1e-15);
        // two identical samples average to the same value
        let l2 = loss(&[o.clone(), o], &[vec![1.0, 0.0], vec![1.0, 0.0]]).unwrap();
        assert!((l2 - 0.125).abs() < 1e-15);
    }

    #[test]
    fn loss_is_sample_permutation_invariant() {
        let a = train(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let b = train(&[&[0.0, 0.0], &[1.0, 1.0]]);
        let c = train(&[&[1.0, 1.0], &[0.0, 0.0]]);
        let ys = [vec![1.0, 0.0], vec![0.0, 1.0], vec![0.5, 0.5]];
        let l1 = loss(
            &[a.clone(), b.clone(), c.clone()],
            &[ys[0].clone(), ys[1].clone(), ys[2].clone()],
        )
        .unwrap();
        let l2 = loss(&[c, a, b], &[ys[2].clone(), ys[0].clone(), ys[1].clone()]).unwrap();
        assert!((l1 - l2).abs() < 1e-15);
    }

    #[test]
    fn direct_grad_hand_values() {
        // T=2, S=1, y=1, r=0.5 -> -(1/2)(0.5) = -0.25
        let g = output_direct_grad(&[0.5], &[1.0], 2, 1);
        assert!((g[0] + 0.25).abs() < 1e-15);
        // at the optimum the direct term vanishes
        let g = output_direct_grad(&[0.7], &[0.7], 4, 3);
        assert_eq!(g[0], 0.0);
        // T=1, S=1, y=0, r=1 -> +1
        let g = output_direct_grad(&[1.0], &[0.0], 1, 1);
        assert!((g[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn single_step_stbp_equals_sdbp() {
        // T=1 leaves no temporal path, so the modes agree exactly
        let lif = LifParams::new(0.2, 0.4, 1.0).unwrap();
        let mut net = Network::from_arch("6-5-3", lif, 1).unwrap();
        net.init_params(3);
        let surrogate = SurrogateSpec::new(SurrogateKind::Rectangular, 1.0, 0.4);
        let input = train(&[&[1.0, 0.0, 1.0, 1.0, 0.0, 1.0]]);
        let trace = forward_unroll(&net, &input, GateMode::Hard).unwrap();
        let target = vec![1.0, 0.0, 0.0];
        let mut ga = GradientSet::zeros_like(&net);
        let mut gb = GradientSet::zeros_like(&net);
        backward_sample(&net, &trace, &target, &surrogate, Mode::Stbp, 1.0, &mut ga).unwrap();
        backward_sample(&net, &trace, &target, &surrogate, Mode::Sdbp, 1.0, &mut gb).unwrap();
        assert_eq!(ga, gb);
    }

    #[test]
    fn narrow_surrogate_blocks_deep_gradients() {
        // all potentials far from threshold: g' = 0 everywhere, so the
        // direct term cannot reach any parameter
        let lif = LifParams::new(0.1, 50.0, 1.0).unwrap();
        let mut net = Network::from_arch("4-3-2", lif, 3).unwrap();
        net.init_params(9);
        let surrogate = SurrogateSpec::new(SurrogateKind::Rectangular, 0.1, 50.0);
        let input = train(&[&[1.0, 1.0, 0.0, 1.0]; 3]);
        let trace = forward_unroll(&net, &input, GateMode::Hard).unwrap();
        let mut g = GradientSet::zeros_like(&net);
        backward_sample(&net, &trace, &[1.0, 0.0], &surrogate, Mode::Stbp, 1.0, &mut g).unwrap();
        for dw in &g.dw {
            assert!(dw.iter().all(|&v| v == 0.0));
        }
        for db in &g.db {
            assert!(db.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn bias_grad_equals_weight_grad_on_all_ones_input() {
        // with input spikes all 1, Eq. dW = du (x) 1 makes each dW row equal
        // db for that neuron
        let lif = LifParams::new(0.3, 0.5, 1.0).unwrap();
        let mut net = Network::from_arch("3-4", lif, 4).unwrap();
        net.init_params(17);
        let surrogate = SurrogateSpec::new(SurrogateKind::SigmoidDerivative, 1.0, 0.5);
        let input = train(&[&[1.0, 1.0, 1.0]; 4]);
        let trace = forward_unroll(&net, &input, GateMode::Hard).unwrap();
        let mut g = GradientSet::zeros_like(&net);
        backward_sample(&net, &trace, &[0.0, 1.0, 0.0, 0.0], &surrogate, Mode::Stbp, 1.0, &mut g)
            .unwrap();
        for i in 0..4 {
            for j in 0..3 {
                assert!((g.dw[0][i * 3 + j] - g.db[0][i]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn gradient_shapes_mirror_parameters() {
        let lif = LifParams::new(0.1, 0.4, 1.0).unwrap();
        let mut net = Network::from_arch("6x6x1-3C3-P2-5-2", lif, 2).unwrap();
        net.init_params(23);
        let g = GradientSet::zeros_like(&net);
        for (layer, (dw, db)) in net.layers.iter().zip(g.dw.iter().zip(&g.db)) {
            assert_eq!(layer.w.len(), dw.len());
            assert_eq!(layer.b.len(), db.len());
        }
    }

    #[test]
    fn batch_gradients_average_over_samples() {
        let lif = LifParams::new(0.2, 0.4, 1.0).unwrap();
        let mut net = Network::from_arch("4-3-2", lif, 3).unwrap();
        net.init_params(31);
        let surrogate = SurrogateSpec::new(SurrogateKind::Triangular, 1.0, 0.4);
        let a = train(&[&[1.0, 0.0, 1.0, 0.0]; 3]);
        let b = train(&[&[0.0, 1.0, 1.0, 1.0]; 3]);
        let (g1, l1, _) =
            batch_gradients(&net, &[a.clone()], &[0], &surrogate, Mode::Stbp, 1).unwrap();
        let (g2, l2, _) =
            batch_gradients(&net, &[b.clone()], &[1], &surrogate, Mode::Stbp, 1).unwrap();
        let (gboth, lboth, _) =
            batch_gradients(&net, &[a, b], &[0, 1], &surrogate, Mode::Stbp, 1).unwrap();
        assert!((lboth - 0.5 * (l1 + l2)).abs() < 1e-12);
        for n in 0..gboth.dw.len() {
            for j in 0..gboth.dw[n].len() {
                let want = 0.5 * (g1.dw[n][j] + g2.dw[n][j]);
                assert!((gboth.dw[n][j] - want).abs() < 1e-12);
            }
        }
    }
}

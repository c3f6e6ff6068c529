//! Finite-difference certification of the backward pass.
//!
//! The hard-threshold network is discontinuous, so finite differences are
//! run against the smooth forward gate (the surrogate's antiderivative),
//! whose exact derivative is the same curve the backward substitutes for the
//! gate derivative. Agreement therefore certifies the propagation structure
//! — the spatial terms, both temporal pathways, and the parameter sums —
//! independent of the surrogate approximation itself.

use crate::engine::{batch_gradients, loss, GradientSet, Mode};
use crate::error::Result;
use crate::forward::forward_unroll;
use crate::lif::LifParams;
use crate::math::{derive_seed, SeedDomain};
use crate::spike::SpikeTrain;
use crate::surrogate::{SurrogateKind, SurrogateSpec};
use crate::topology::Network;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Central-difference step, per the pinned checking protocol.
pub const FD_STEP: f64 = 1e-4;
/// Maximum allowed relative error.
pub const REL_TOL: f64 = 1e-4;

/// `|a - f| / max(|a|, |f|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Central difference of a scalar function.
pub fn central_diff(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

/// One randomly sampled check configuration; fully replayable.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialConfig {
    pub arch: String,
    pub t_window: usize,
    pub kind: SurrogateKind,
    pub a: f64,
    pub v_th: f64,
    pub tau: f64,
    pub batch: usize,
    /// Seeds both the parameter draw and the input spikes.
    pub data_seed: u64,
}

/// Outcome of one trial: analytic-vs-numeric agreement over every parameter.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub config: TrialConfig,
    pub n_params: usize,
    pub max_rel_err: f64,
    pub worst_param: String,
    pub pass: bool,
}

impl GradCheckReport {
    pub fn summary_line(&self) -> String {
        format!(
            "{} arch={} T={} kind={} a={} vth={:.3} tau={:.3} params={} max_rel_err={:.3e} worst={}",
            if self.pass { "pass" } else { "FAIL" },
            self.config.arch,
            self.config.t_window,
            self.config.kind.name(),
            self.config.a,
            self.config.v_th,
            self.config.tau,
            self.n_params,
            self.max_rel_err,
            self.worst_param,
        )
    }
}

/// Numeric gradient of the batch loss by central differences over every
/// scalar parameter, re-running the smooth forward per probe.
pub fn finite_diff_grad(
    net: &Network,
    inputs: &[SpikeTrain],
    targets: &[Vec<f64>],
    surrogate: &SurrogateSpec,
    h: f64,
) -> Result<GradientSet> {
    let mut probe = net.clone();
    let gate = Mode::SmoothOracle.gate(surrogate);
    let mut grads = GradientSet::zeros_like(net);
    let eval = |net: &Network| -> Result<f64> {
        let outs: Result<Vec<SpikeTrain>> = inputs
            .iter()
            .map(|input| Ok(forward_unroll(net, input, gate)?.output_train()))
            .collect();
        loss(&outs?, targets)
    };
    for n in 0..net.layers.len() {
        for w_idx in 0..net.layers[n].w.len() {
            let orig = probe.layers[n].w[w_idx];
            probe.layers[n].w[w_idx] = orig + h;
            let up = eval(&probe)?;
            probe.layers[n].w[w_idx] = orig - h;
            let down = eval(&probe)?;
            probe.layers[n].w[w_idx] = orig;
            grads.dw[n][w_idx] = (up - down) / (2.0 * h);
        }
        for b_idx in 0..net.layers[n].b.len() {
            let orig = probe.layers[n].b[b_idx];
            probe.layers[n].b[b_idx] = orig + h;
            let up = eval(&probe)?;
            probe.layers[n].b[b_idx] = orig - h;
            let down = eval(&probe)?;
            probe.layers[n].b[b_idx] = orig;
            grads.db[n][b_idx] = (up - down) / (2.0 * h);
        }
    }
    Ok(grads)
}

/// Compares two gradient sets; returns `(max relative error, worst slot)`.
pub fn compare_gradients(analytic: &GradientSet, numeric: &GradientSet) -> (f64, String) {
    let mut worst = 0.0;
    let mut slot = String::from("-");
    for n in 0..analytic.dw.len() {
        for (i, (&a, &f)) in analytic.dw[n].iter().zip(&numeric.dw[n]).enumerate() {
            let e = relative_error(a, f);
            if e > worst {
                worst = e;
                slot = format!("layer {n} w[{i}] ({a:.6e} vs {f:.6e})");
            }
        }
        for (i, (&a, &f)) in analytic.db[n].iter().zip(&numeric.db[n]).enumerate() {
            let e = relative_error(a, f);
            if e > worst {
                worst = e;
                slot = format!("layer {n} b[{i}] ({a:.6e} vs {f:.6e})");
            }
        }
    }
    (worst, slot)
}

/// Builds the network and input batch for a trial.
pub fn build_trial(cfg: &TrialConfig) -> Result<(Network, Vec<SpikeTrain>, Vec<Vec<f64>>)> {
    let lif = LifParams::new(cfg.tau, cfg.v_th, 1.0)?;
    let mut net = Network::from_arch(&cfg.arch, lif, cfg.t_window)?;
    net.init_params(cfg.data_seed);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
        cfg.data_seed,
        SeedDomain::GradCheck,
        1,
        0,
    ));
    let in_len = net.input_len();
    let out_len = net.output_len();
    let mut inputs = Vec::with_capacity(cfg.batch);
    let mut targets = Vec::with_capacity(cfg.batch);
    for _ in 0..cfg.batch {
        let data: Vec<f64> = (0..cfg.t_window * in_len)
            .map(|_| if rng.gen_bool(0.4) { 1.0 } else { 0.0 })
            .collect();
        inputs.push(SpikeTrain::from_rows(cfg.t_window, in_len, data));
        let mut y = vec![0.0; out_len];
        y[rng.gen_range(0..out_len)] = 1.0;
        targets.push(y);
    }
    Ok((net, inputs, targets))
}

/// Runs one trial: analytic smooth-oracle gradients against central
/// differences over every parameter.
pub fn run_trial(cfg: &TrialConfig) -> Result<GradCheckReport> {
    let (net, inputs, targets) = build_trial(cfg)?;
    let surrogate = SurrogateSpec::new(cfg.kind, cfg.a, cfg.v_th);
    let labels: Vec<usize> = targets
        .iter()
        .map(|y| y.iter().position(|&v| v == 1.0).unwrap())
        .collect();
    let (analytic, _, _) =
        batch_gradients(&net, &inputs, &labels, &surrogate, Mode::SmoothOracle, 1)?;
    let numeric = finite_diff_grad(&net, &inputs, &targets, &surrogate, FD_STEP)?;
    let (max_rel_err, worst_param) = compare_gradients(&analytic, &numeric);
    Ok(GradCheckReport {
        config: cfg.clone(),
        n_params: net.param_count(),
        max_rel_err,
        worst_param,
        pass: max_rel_err <= REL_TOL,
    })
}

/// Deterministically samples the `i`th trial configuration: dense stacks and
/// small conv nets, every surrogate kind, time windows from the pinned set.
pub fn sample_trial(i: usize, seed: u64) -> TrialConfig {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, SeedDomain::GradCheck, 0, i as u64));
    let t_window = [1usize, 2, 5, 6][i % 4];
    let kind = SurrogateKind::ALL[(i / 4) % 4];
    let a = [0.5, 1.0, 2.5][rng.gen_range(0..3)];
    let v_th = rng.gen_range(0.3..0.8);
    let tau = rng.gen_range(0.1..0.5);
    let arch = if i % 5 == 4 {
        // conv: small map, one conv layer, optional pool, dense head
        let side = [6usize, 8][rng.gen_range(0..2)];
        let ch = rng.gen_range(1..=2);
        let k = 3;
        let pooled = side - k + 1;
        if pooled % 2 == 0 && rng.gen_bool(0.5) {
            format!("{side}x{side}x1-{ch}C{k}-P2-{}", rng.gen_range(2..=4))
        } else {
            format!("{side}x{side}x1-{ch}C{k}-{}", rng.gen_range(2..=4))
        }
    } else {
        let depth = rng.gen_range(1..=3);
        let mut parts = vec![rng.gen_range(4..=10).to_string()];
        for _ in 0..depth {
            parts.push(rng.gen_range(3..=10).to_string());
        }
        parts.push(rng.gen_range(2..=4).to_string());
        parts.join("-")
    };
    TrialConfig {
        arch,
        t_window,
        kind,
        a,
        v_th,
        tau,
        batch: 2,
        data_seed: rng.gen(),
    }
}

/// Samples and runs `trials` configurations; any failing trial is reported
/// with its full replayable config.
pub fn run_gradcheck(trials: usize, seed: u64) -> Result<Vec<GradCheckReport>> {
    (0..trials).map(|i| run_trial(&sample_trial(i, seed))).collect()
}

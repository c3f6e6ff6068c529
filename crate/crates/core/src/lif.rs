//! Iterative leaky integrate-and-fire dynamics.
//!
//! Each neuron carries a membrane potential `u` updated once per step:
//!
//! ```text
//! u' = u * f(o) + x + b        f(o) = tau * exp(-o / tau)
//! o' = g(u')                   g(u) = 1 if u >= v_th else 0
//! ```
//!
//! The forget gate `f` leaks the potential by a factor `tau` between spikes
//! and collapses it to nearly zero right after one (`f(1) = tau e^{-1/tau}`),
//! which is how the hard reset of the classical model shows up here. There is
//! no separate reset parameter.

use crate::error::{Error, Result};

/// Per-layer neuron constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LifParams {
    /// Per-step decay factor (dimensionless, the value `f` takes at `o = 0`).
    pub tau: f64,
    /// Firing threshold; the boundary `u == v_th` fires.
    pub v_th: f64,
    /// Simulation step in milliseconds. Bookkeeping only; the dynamics above
    /// are already expressed per step.
    pub dt_ms: f64,
}

impl LifParams {
    pub fn new(tau: f64, v_th: f64, dt_ms: f64) -> Result<Self> {
        if !(tau > 0.0) || !(v_th > 0.0) || !(dt_ms > 0.0) {
            return Err(Error::Config(format!(
                "LIF params must be positive: tau={tau}, v_th={v_th}, dt_ms={dt_ms}"
            )));
        }
        Ok(LifParams { tau, v_th, dt_ms })
    }
}

/// Membrane potentials plus the previous step's spikes for one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialState {
    pub u: Vec<f64>,
    pub o_prev: Vec<f64>,
}

impl PotentialState {
    /// Neutral state at t = 0: zero potential, no previous spike.
    pub fn zeros(n: usize) -> Self {
        PotentialState {
            u: vec![0.0; n],
            o_prev: vec![0.0; n],
        }
    }
}

/// Forget gate `f(o) = tau * exp(-o / tau)`; strictly positive, decreasing in `o`.
#[inline]
pub fn forget_gate(o: f64, tau: f64) -> f64 {
    tau * (-o / tau).exp()
}

/// Derivative of the forget gate with respect to its input: `f'(o) = -exp(-o / tau)`.
#[inline]
pub fn forget_gate_deriv(o: f64, tau: f64) -> f64 {
    -(-o / tau).exp()
}

/// Output gate `g(u)`: fires exactly on `u >= v_th`.
#[inline]
pub fn spike_gate(u: f64, v_th: f64) -> f64 {
    if u >= v_th {
        1.0
    } else {
        0.0
    }
}

/// One synchronous update of a whole layer.
///
/// `x` is the pre-synaptic drive for this step (weighted spikes, convolved
/// maps, or fractional pool outputs) and may be any finite real values.
pub fn lif_step(
    state: &PotentialState,
    x: &[f64],
    b: &[f64],
    params: &LifParams,
) -> Result<PotentialState> {
    let n = state.u.len();
    if state.o_prev.len() != n || x.len() != n || b.len() != n {
        return Err(Error::shape(
            "lif_step",
            n,
            format!("o_prev={}, x={}, b={}", state.o_prev.len(), x.len(), b.len()),
        ));
    }
    let mut u = Vec::with_capacity(n);
    let mut o = Vec::with_capacity(n);
    for i in 0..n {
        let u_new = state.u[i] * forget_gate(state.o_prev[i], params.tau) + x[i] + b[i];
        u.push(u_new);
        o.push(spike_gate(u_new, params.v_th));
    }
    Ok(PotentialState { u, o_prev: o })
}

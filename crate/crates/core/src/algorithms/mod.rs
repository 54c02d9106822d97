//! Adapt-then-combine diffusion LMS and its nonlinearity-compensating
//! extension.

mod compensation;
pub mod complexity;
mod dlms;
mod sonec;
mod trace;

pub use compensation::{compensate_intermediate, compensate_measurement, CompensationStats, EPS_B};
pub use dlms::{dlms_atc_step, run_dlms, Measurements};
pub use sonec::{
    adaptation_step, centralized_train_b, combine_step, error_signal, estimate_nonlinearity_step,
    run_sonec_dlms, sonec_step, SonecVariant,
};
pub use trace::{RunTrace, Trajectory};

use crate::error::{DivergenceError, ModelError};
use crate::scalar::{norm_sq, Real};

/// Estimates with a norm above this abort the run.
pub const DIVERGENCE_NORM: f64 = 1e6;

/// Per-node adaptive state.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeState<T> {
    pub omega: Vec<T>,
    /// `b_hat[j]` estimates the coefficient of the `j`-th member of the
    /// node's neighborhood (in sorted order).
    pub b_hat: Vec<T>,
    pub phi: Vec<T>,
    /// Vectors received from each neighbor in the last combination step.
    pub received_phi: Vec<Vec<T>>,
}

impl<T: Real> NodeState<T> {
    pub fn new(l: usize, n_neighbors: usize) -> Self {
        NodeState {
            omega: vec![T::zero(); l],
            b_hat: vec![T::zero(); n_neighbors],
            phi: vec![T::zero(); l],
            received_phi: vec![vec![T::zero(); l]; n_neighbors],
        }
    }

    /// Zero-initialized states for every node of a network.
    pub fn network(topology: &crate::topology::NetworkTopology, l: usize) -> Vec<Self> {
        (0..topology.n_nodes())
            .map(|k| Self::new(l, topology.neighborhood(k).len()))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSizes<T> {
    pub mu: T,
    pub mu_b: T,
}

impl<T: Real> StepSizes<T> {
    pub fn new(mu: T, mu_b: T) -> Result<Self, ModelError> {
        if !(mu > T::zero()) || !mu.is_finite() {
            return Err(ModelError::invalid(
                "mu",
                format!("must be positive, got {mu}"),
            ));
        }
        if !(mu_b > T::zero()) || !mu_b.is_finite() {
            return Err(ModelError::invalid(
                "mu_b",
                format!("must be positive, got {mu_b}"),
            ));
        }
        Ok(StepSizes { mu, mu_b })
    }
}

/// What happens to an intermediate estimate on its way to a neighbor.
#[derive(Debug, Clone, Copy)]
pub enum LinkModel<'a, T> {
    Identity,
    /// Sender `l` distorts with `b[l]` and adds `eta[l*L..(l+1)*L]` if present.
    Nonlinear {
        b: &'a [T],
        eta: Option<&'a [T]>,
    },
}

/// Whether exchanged vectors pass through the sender's nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinkSetting {
    Clean,
    Nonlinear,
}

/// Observations at one time instant: regressors (`N×L`, row-major) and
/// measurements (`N`).
#[derive(Debug, Clone, Copy)]
pub struct StepData<'a, T> {
    pub u: &'a [T],
    pub d_tilde: &'a [T],
}

impl<'a, T> StepData<'a, T> {
    #[inline]
    pub fn regressor(&self, l: usize, dim: usize) -> &'a [T] {
        &self.u[l * dim..(l + 1) * dim]
    }
}

/// Options shared by the run functions.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Keep every node's `ω` and `b̂` at every iteration.
    pub record_trajectory: bool,
}

/// Runs the sender-side channel: fills `out` (N×L) with what each node's
/// neighbors receive.
pub(crate) fn transmit<T: Real>(
    states: &[NodeState<T>],
    link: &LinkModel<'_, T>,
    l: usize,
    out: &mut [T],
) {
    for (s, st) in states.iter().enumerate() {
        let dst = &mut out[s * l..(s + 1) * l];
        match link {
            LinkModel::Identity => dst.copy_from_slice(&st.phi),
            LinkModel::Nonlinear { b, eta } => {
                let eta = eta.map(|e| &e[s * l..(s + 1) * l]);
                crate::signal::corrupt_link_into(&st.phi, b[s], eta, dst);
            }
        }
    }
}

pub(crate) fn guard<T: Real>(
    states: &[NodeState<T>],
    iteration: usize,
) -> Result<(), DivergenceError> {
    for (k, s) in states.iter().enumerate() {
        let n2 = norm_sq(&s.omega);
        if !n2.is_finite() || s.b_hat.iter().any(|b| !b.is_finite()) {
            return Err(DivergenceError::NonFinite { iteration, node: k });
        }
        let norm = n2.sqrt().to_f64_lossy();
        if norm > DIVERGENCE_NORM {
            return Err(DivergenceError::NormExceeded {
                iteration,
                node: k,
                norm,
            });
        }
    }
    Ok(())
}

use super::compensation::{compensate_in_place, compensate_measurement, CompensationStats};
use super::trace::{coefficient_sq_deviation, mean_sq_deviation, Trajectory};
use super::{
    guard, transmit, LinkModel, LinkSetting, NodeState, RunOptions, RunTrace, StepData, StepSizes,
};
use crate::error::{DivergenceError, ModelError, RunError};
use crate::scalar::{dot, Real};
use crate::signal::{PilotWindow, SensorDataset};
use crate::topology::{CombinationMatrices, NetworkTopology};

/// How the nonlinearity coefficients are obtained and where compensation
/// is applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SonecVariant {
    /// Every node learns its neighbors' coefficients online and
    /// compensates both measurements and received estimates.
    FullyDistributed,
    /// Coefficients come from a least-squares fit on the pilot window and
    /// stay frozen.
    SemiDistributed,
    /// Coefficients are learned online but only received estimates are
    /// compensated; adaptation uses raw measurements.
    CombinationOnly,
}

/// Column `k` of `a` and `c` restricted to the neighborhood of `k`.
#[derive(Debug, Clone)]
pub(crate) struct NeighborWeights<T> {
    pub a: Vec<Vec<T>>,
    pub c: Vec<Vec<T>>,
}

impl<T: Real> NeighborWeights<T> {
    pub fn new(topology: &NetworkTopology, w: &CombinationMatrices<T>) -> Self {
        let gather = |m: &crate::linalg::Matrix<T>| -> Vec<Vec<T>> {
            (0..topology.n_nodes())
                .map(|k| {
                    topology
                        .neighborhood(k)
                        .iter()
                        .map(|&l| m[(l, k)])
                        .collect()
                })
                .collect()
        };
        NeighborWeights {
            a: gather(&w.a),
            c: gather(&w.c),
        }
    }
}

/// `d̃ − b̂ d̂² − uᵀω`.
#[inline]
pub fn error_signal<T: Real>(omega_prev: &[T], reg: &[T], d_tilde: T, b_hat: T, d_hat: T) -> T {
    d_tilde - b_hat * d_hat * d_hat - dot(reg, omega_prev)
}

/// `b̂ ← b̂ + μ_b c ⊙ ẽ ⊙ d̂²`, all vectors indexed by the neighborhood.
pub fn estimate_nonlinearity_step<T: Real>(
    b_hat: &mut [T],
    d_hat: &[T],
    e_tilde: &[T],
    c_k: &[T],
    mu_b: T,
) {
    for j in 0..b_hat.len() {
        b_hat[j] += mu_b * c_k[j] * e_tilde[j] * d_hat[j] * d_hat[j];
    }
}

/// `φ = ω + μ Σ_j c_j ẽ_j u_j` with `ẽ_j = d̃_j − b̂_j d̂_j² − u_jᵀω`.
#[allow(clippy::too_many_arguments)]
pub fn adaptation_step<T: Real>(
    omega_prev: &[T],
    regs: &[&[T]],
    d_tilde: &[T],
    b_hat: &[T],
    d_hat: &[T],
    c_k: &[T],
    mu: T,
    phi: &mut [T],
) {
    phi.copy_from_slice(omega_prev);
    for j in 0..regs.len() {
        let e = error_signal(omega_prev, regs[j], d_tilde[j], b_hat[j], d_hat[j]);
        let g = mu * c_k[j] * e;
        for (p, &u) in phi.iter_mut().zip(regs[j]) {
            *p += g * u;
        }
    }
}

/// `ω = Σ_j a_j φ̂_j`.
pub fn combine_step<T: Real>(phis: &[&[T]], a_k: &[T]) -> Vec<T> {
    let mut out = vec![T::zero(); phis.first().map_or(0, |p| p.len())];
    for (j, (p, &a)) in phis.iter().zip(a_k).enumerate() {
        for (o, &x) in out.iter_mut().zip(p.iter()) {
            if j == 0 {
                *o = a * x;
            } else {
                *o += a * x;
            }
        }
    }
    out
}

pub(crate) fn combine_into<T: Real>(phis: &[Vec<T>], a_k: &[T], out: &mut [T]) {
    for (o, &x) in out.iter_mut().zip(&phis[0]) {
        *o = a_k[0] * x;
    }
    for (p, &a) in phis.iter().zip(a_k).skip(1) {
        for (o, &x) in out.iter_mut().zip(p) {
            *o += a * x;
        }
    }
}

/// Least-squares fit `b̂_l = Σ (d̃ − d) d² / Σ d⁴` over the pilot window.
pub fn centralized_train_b<T: Real>(
    pilot: &PilotWindow<T>,
    n_nodes: usize,
) -> Result<Vec<T>, ModelError> {
    let mut num = vec![T::zero(); n_nodes];
    let mut den = vec![T::zero(); n_nodes];
    for t in 0..pilot.len {
        for k in 0..n_nodes {
            let idx = t * n_nodes + k;
            let d = pilot.d[idx];
            let d2 = d * d;
            num[k] += (pilot.d_tilde[idx] - d) * d2;
            den[k] += d2 * d2;
        }
    }
    (0..n_nodes)
        .map(|k| {
            if den[k] == T::zero() {
                Err(ModelError::DegeneratePilot { node: k })
            } else {
                Ok(num[k] / den[k])
            }
        })
        .collect()
}

/// Per-node scratch reused across iterations.
#[derive(Debug, Clone)]
pub(crate) struct Scratch<T> {
    d_hat: Vec<T>,
    e: Vec<T>,
    d_tilde: Vec<T>,
    zeros: Vec<T>,
    buf: Vec<T>,
}

impl<T: Real> Scratch<T> {
    pub fn new(n_nodes: usize, l: usize) -> Self {
        Scratch {
            d_hat: vec![T::zero(); n_nodes],
            e: vec![T::zero(); n_nodes],
            d_tilde: vec![T::zero(); n_nodes],
            zeros: vec![T::zero(); n_nodes],
            buf: vec![T::zero(); n_nodes * l],
        }
    }
}

/// One network iteration: compensate measurements (step 2), update
/// coefficient estimates (step 1), adapt (step 3), exchange, compensate
/// received estimates (step 4) when links are nonlinear, combine (step 5).
#[allow(clippy::too_many_arguments)]
pub fn sonec_step<T: Real>(
    states: &mut [NodeState<T>],
    topology: &NetworkTopology,
    data: StepData<'_, T>,
    weights: &CombinationMatrices<T>,
    steps: StepSizes<T>,
    variant: SonecVariant,
    link: &LinkModel<'_, T>,
    stats: &mut CompensationStats,
    iteration: usize,
) -> Result<(), DivergenceError> {
    let nw = NeighborWeights::new(topology, weights);
    let l = states.first().map_or(0, |s| s.omega.len());
    let mut scratch = Scratch::new(states.len(), l);
    step(
        states,
        topology,
        data,
        &nw,
        steps,
        variant,
        link,
        stats,
        &mut scratch,
    );
    guard(states, iteration)
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn step<T: Real>(
    states: &mut [NodeState<T>],
    topology: &NetworkTopology,
    data: StepData<'_, T>,
    nw: &NeighborWeights<T>,
    steps: StepSizes<T>,
    variant: SonecVariant,
    link: &LinkModel<'_, T>,
    stats: &mut CompensationStats,
    scratch: &mut Scratch<T>,
) {
    let dim = scratch.buf.len() / states.len();
    let mut regs: Vec<&[T]> = Vec::new();
    for (k, st) in states.iter_mut().enumerate() {
        let nb = topology.neighborhood(k);
        let m = nb.len();
        regs.clear();
        regs.extend(nb.iter().map(|&l| data.regressor(l, dim)));
        let d_tilde = &mut scratch.d_tilde[..m];
        for (dt, &l) in d_tilde.iter_mut().zip(nb) {
            *dt = data.d_tilde[l];
        }
        let d_hat = &mut scratch.d_hat[..m];
        let e = &mut scratch.e[..m];
        let c_k = &nw.c[k];
        match variant {
            SonecVariant::FullyDistributed => {
                for j in 0..m {
                    d_hat[j] = compensate_measurement(d_tilde[j], st.b_hat[j], stats);
                }
                for j in 0..m {
                    e[j] = error_signal(&st.omega, regs[j], d_tilde[j], st.b_hat[j], d_hat[j]);
                }
                estimate_nonlinearity_step(&mut st.b_hat, d_hat, e, c_k, steps.mu_b);
                adaptation_step(
                    &st.omega,
                    &regs,
                    d_tilde,
                    &st.b_hat,
                    d_hat,
                    c_k,
                    steps.mu,
                    &mut st.phi,
                );
            }
            SonecVariant::SemiDistributed => {
                for j in 0..m {
                    d_hat[j] = compensate_measurement(d_tilde[j], st.b_hat[j], stats);
                }
                adaptation_step(
                    &st.omega,
                    &regs,
                    d_tilde,
                    &st.b_hat,
                    d_hat,
                    c_k,
                    steps.mu,
                    &mut st.phi,
                );
            }
            SonecVariant::CombinationOnly => {
                d_hat.copy_from_slice(d_tilde);
                for j in 0..m {
                    e[j] = error_signal(&st.omega, regs[j], d_tilde[j], st.b_hat[j], d_hat[j]);
                }
                estimate_nonlinearity_step(&mut st.b_hat, d_hat, e, c_k, steps.mu_b);
                let zeros = &scratch.zeros[..m];
                adaptation_step(
                    &st.omega,
                    &regs,
                    d_tilde,
                    zeros,
                    d_hat,
                    c_k,
                    steps.mu,
                    &mut st.phi,
                );
            }
        }
    }
    let compensate_links = matches!(link, LinkModel::Nonlinear { .. });
    transmit(states, link, dim, &mut scratch.buf);
    for (k, st) in states.iter_mut().enumerate() {
        for (j, &l) in topology.neighborhood(k).iter().enumerate() {
            st.received_phi[j].copy_from_slice(&scratch.buf[l * dim..(l + 1) * dim]);
            if compensate_links {
                compensate_in_place(&mut st.received_phi[j], st.b_hat[j], stats);
            }
        }
        combine_into(&st.received_phi, &nw.a[k], &mut st.omega);
    }
}

/// Runs one SONEC-DLMS variant from zero initial estimates over every
/// iteration of `dataset`.
pub fn run_sonec_dlms<T: Real>(
    dataset: &SensorDataset<T>,
    topology: &NetworkTopology,
    weights: &CombinationMatrices<T>,
    steps: StepSizes<T>,
    variant: SonecVariant,
    link: LinkSetting,
    options: RunOptions,
) -> Result<RunTrace<T>, RunError> {
    let n = dataset.n_nodes();
    let dim = dataset.l();
    let nw = NeighborWeights::new(topology, weights);
    let mut states = NodeState::network(topology, dim);
    if variant == SonecVariant::SemiDistributed {
        let b_fit = centralized_train_b(&dataset.pilot, n)?;
        for (k, st) in states.iter_mut().enumerate() {
            for (j, &l) in topology.neighborhood(k).iter().enumerate() {
                st.b_hat[j] = b_fit[l];
            }
        }
    }
    let mut scratch = Scratch::new(n, dim);
    let mut stats = CompensationStats::default();
    let mut msd = Vec::with_capacity(dataset.n_iters);
    let mut b_msd = Vec::with_capacity(dataset.n_iters);
    let mut trajectory = options
        .record_trajectory
        .then(|| Trajectory::new(topology, dim, dataset.n_iters));
    for i in 0..dataset.n_iters {
        let data = StepData {
            u: &dataset.u[i * n * dim..(i + 1) * n * dim],
            d_tilde: &dataset.d_tilde[i * n..(i + 1) * n],
        };
        let lm = match link {
            LinkSetting::Clean => LinkModel::Identity,
            LinkSetting::Nonlinear => LinkModel::Nonlinear {
                b: &dataset.truth.b,
                eta: dataset
                    .eta
                    .as_ref()
                    .map(|e| &e[i * n * dim..(i + 1) * n * dim]),
            },
        };
        step(
            &mut states,
            topology,
            data,
            &nw,
            steps,
            variant,
            &lm,
            &mut stats,
            &mut scratch,
        );
        guard(&states, i + 1)?;
        msd.push(mean_sq_deviation(&states, &dataset.truth.omega_o));
        b_msd.push(coefficient_sq_deviation(
            &states,
            topology,
            &dataset.truth.b,
        ));
        if let Some(t) = trajectory.as_mut() {
            t.push(&states);
        }
    }
    Ok(RunTrace {
        msd,
        b_msd: Some(b_msd),
        states,
        trajectory,
        compensation: stats,
    })
}

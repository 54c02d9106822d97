use super::sonec::{combine_into, NeighborWeights};
use super::trace::{mean_sq_deviation, Trajectory};
use super::{guard, transmit, LinkModel, LinkSetting, NodeState, RunOptions, RunTrace, StepData};
use crate::error::DivergenceError;
use crate::scalar::{dot, Real};
use crate::signal::SensorDataset;
use crate::topology::{CombinationMatrices, NetworkTopology};

/// Which measurement stream a DLMS run consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Measurements {
    /// `d̃ = d + b d² + θ`.
    Nonlinear,
    /// `d + θ`: the same sensors with the nonlinearity removed.
    Linear,
}

/// One adapt-then-combine iteration over the whole network.
pub fn dlms_atc_step<T: Real>(
    states: &mut [NodeState<T>],
    topology: &NetworkTopology,
    data: StepData<'_, T>,
    weights: &CombinationMatrices<T>,
    mu: T,
    link: &LinkModel<'_, T>,
    iteration: usize,
) -> Result<(), DivergenceError> {
    let nw = NeighborWeights::new(topology, weights);
    let l = states.first().map_or(0, |s| s.omega.len());
    let mut buf = vec![T::zero(); states.len() * l];
    step(states, topology, data, &nw, mu, link, &mut buf);
    guard(states, iteration)
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn step<T: Real>(
    states: &mut [NodeState<T>],
    topology: &NetworkTopology,
    data: StepData<'_, T>,
    nw: &NeighborWeights<T>,
    mu: T,
    link: &LinkModel<'_, T>,
    buf: &mut [T],
) {
    let dim = buf.len() / states.len();
    for (k, st) in states.iter_mut().enumerate() {
        st.phi.copy_from_slice(&st.omega);
        for (j, &l) in topology.neighborhood(k).iter().enumerate() {
            let reg = data.regressor(l, dim);
            let e = data.d_tilde[l] - dot(reg, &st.omega);
            let g = mu * nw.c[k][j] * e;
            for (p, &u) in st.phi.iter_mut().zip(reg) {
                *p += g * u;
            }
        }
    }
    transmit(states, link, dim, buf);
    for (k, st) in states.iter_mut().enumerate() {
        for (j, &l) in topology.neighborhood(k).iter().enumerate() {
            st.received_phi[j].copy_from_slice(&buf[l * dim..(l + 1) * dim]);
        }
        combine_into(&st.received_phi, &nw.a[k], &mut st.omega);
    }
}

/// Runs DLMS from zero initial estimates over every iteration of `dataset`.
pub fn run_dlms<T: Real>(
    dataset: &SensorDataset<T>,
    topology: &NetworkTopology,
    weights: &CombinationMatrices<T>,
    mu: T,
    measurements: Measurements,
    link: LinkSetting,
    options: RunOptions,
) -> Result<RunTrace<T>, DivergenceError> {
    let n = dataset.n_nodes();
    let dim = dataset.l();
    let nw = NeighborWeights::new(topology, weights);
    let linear;
    let meas: &[T] = match measurements {
        Measurements::Nonlinear => &dataset.d_tilde,
        Measurements::Linear => {
            linear = dataset.linear_measurements();
            &linear
        }
    };
    let mut states = NodeState::network(topology, dim);
    let mut buf = vec![T::zero(); n * dim];
    let mut msd = Vec::with_capacity(dataset.n_iters);
    let mut trajectory = options
        .record_trajectory
        .then(|| Trajectory::new(topology, dim, dataset.n_iters));
    for i in 0..dataset.n_iters {
        let data = StepData {
            u: &dataset.u[i * n * dim..(i + 1) * n * dim],
            d_tilde: &meas[i * n..(i + 1) * n],
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
        step(&mut states, topology, data, &nw, mu, &lm, &mut buf);
        guard(&states, i + 1)?;
        msd.push(mean_sq_deviation(&states, &dataset.truth.omega_o));
        if let Some(t) = trajectory.as_mut() {
            t.push(&states);
        }
    }
    Ok(RunTrace {
        msd,
        b_msd: None,
        states,
        trajectory,
        compensation: Default::default(),
    })
}

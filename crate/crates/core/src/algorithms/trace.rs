use std::io::{self, Write};

use super::{CompensationStats, NodeState};
use crate::scalar::{dist_sq, Real};
use crate::topology::NetworkTopology;

/// Output of one adaptive run.
#[derive(Debug, Clone)]
pub struct RunTrace<T> {
    /// Mean over nodes of `‖ω_k − ω_o‖²`, one entry per iteration.
    pub msd: Vec<T>,
    /// `Σ_l (b̄_l − b_l)²` per iteration, where `b̄_l` averages every
    /// neighbor's estimate of `b_l`. Only for compensating variants.
    pub b_msd: Option<Vec<T>>,
    pub states: Vec<NodeState<T>>,
    pub trajectory: Option<Trajectory<T>>,
    pub compensation: CompensationStats,
}

/// Per-iteration snapshot of every node's `ω` and `b̂`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T> {
    l: usize,
    neighborhoods: Vec<Vec<usize>>,
    b_offsets: Vec<usize>,
    n_iters: usize,
    omega: Vec<T>,
    b_hat: Vec<T>,
}

impl<T: Real> Trajectory<T> {
    pub(crate) fn new(topology: &NetworkTopology, l: usize, capacity: usize) -> Self {
        let neighborhoods = topology.neighborhoods().to_vec();
        let mut b_offsets = Vec::with_capacity(neighborhoods.len() + 1);
        let mut acc = 0;
        for nb in &neighborhoods {
            b_offsets.push(acc);
            acc += nb.len();
        }
        b_offsets.push(acc);
        Trajectory {
            l,
            n_iters: 0,
            omega: Vec::with_capacity(capacity * neighborhoods.len() * l),
            b_hat: Vec::with_capacity(capacity * acc),
            neighborhoods,
            b_offsets,
        }
    }

    pub(crate) fn push(&mut self, states: &[NodeState<T>]) {
        for s in states {
            self.omega.extend_from_slice(&s.omega);
        }
        for s in states {
            self.b_hat.extend_from_slice(&s.b_hat);
        }
        self.n_iters += 1;
    }

    pub fn n_iters(&self) -> usize {
        self.n_iters
    }

    pub fn n_nodes(&self) -> usize {
        self.neighborhoods.len()
    }

    pub fn omega(&self, i: usize, k: usize) -> &[T] {
        let off = (i * self.n_nodes() + k) * self.l;
        &self.omega[off..off + self.l]
    }

    pub fn b_hat(&self, i: usize, k: usize) -> &[T] {
        let per_iter = *self.b_offsets.last().unwrap_or(&0);
        let base = i * per_iter;
        &self.b_hat[base + self.b_offsets[k]..base + self.b_offsets[k + 1]]
    }

    /// Long-format CSV: `iter,node,field,index,value` with 1-based indices;
    /// for `b_hat` the index is the neighbor whose coefficient is estimated.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "iter,node,field,index,value")?;
        for i in 0..self.n_iters {
            for k in 0..self.n_nodes() {
                for (j, x) in self.omega(i, k).iter().enumerate() {
                    writeln!(w, "{},{},omega,{},{}", i + 1, k + 1, j + 1, x)?;
                }
                for (j, x) in self.b_hat(i, k).iter().enumerate() {
                    writeln!(
                        w,
                        "{},{},b_hat,{},{}",
                        i + 1,
                        k + 1,
                        self.neighborhoods[k][j] + 1,
                        x
                    )?;
                }
            }
        }
        Ok(())
    }
}

pub(crate) fn mean_sq_deviation<T: Real>(states: &[NodeState<T>], omega_o: &[T]) -> T {
    let total = states
        .iter()
        .map(|s| dist_sq(&s.omega, omega_o))
        .fold(T::zero(), |a, x| a + x);
    total / T::lit(states.len() as f64)
}

pub(crate) fn coefficient_sq_deviation<T: Real>(
    states: &[NodeState<T>],
    topology: &NetworkTopology,
    b: &[T],
) -> T {
    let n = topology.n_nodes();
    let mut sum = vec![T::zero(); n];
    let mut count = vec![0usize; n];
    for (k, s) in states.iter().enumerate() {
        for (j, &l) in topology.neighborhood(k).iter().enumerate() {
            sum[l] += s.b_hat[j];
            count[l] += 1;
        }
    }
    (0..n)
        .map(|l| {
            let mean = sum[l] / T::lit(count[l] as f64);
            (mean - b[l]) * (mean - b[l])
        })
        .fold(T::zero(), |a, x| a + x)
}

//! Fisher information and Cramer-Rao bounds for `θ = [ω; b]` under
//! `x_k = U_k ω + b_k (U_k ω)² + θ_k`, `θ_k ~ N(0, σ²_θ,k I)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::analysis::MomentEstimate;
use crate::error::{CrbError, ModelError};
use crate::linalg::{symmetric_eigen, Cholesky, Matrix};
use crate::scalar::{dot, Real};
use crate::signal::SensorDataset;

/// Largest FIM condition number accepted before inversion.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, PartialEq)]
pub struct ObservationModel<T> {
    /// `u[k]` is node `k`'s `I×L` regressor matrix.
    pub u: Vec<Matrix<T>>,
    pub omega: Vec<T>,
    pub b: Vec<T>,
    pub sigma_theta2: Vec<T>,
}

impl<T: Real> ObservationModel<T> {
    pub fn new(
        u: Vec<Matrix<T>>,
        omega: Vec<T>,
        b: Vec<T>,
        sigma_theta2: Vec<T>,
    ) -> Result<Self, ModelError> {
        let n = u.len();
        if n == 0 {
            return Err(ModelError::invalid("U", "needs at least one node"));
        }
        if b.len() != n || sigma_theta2.len() != n {
            return Err(ModelError::invalid(
                "b",
                "b and sigma_theta2 need one entry per node",
            ));
        }
        let i = u[0].rows();
        if i == 0 {
            return Err(ModelError::invalid("I", "needs at least one observation"));
        }
        if u.iter().any(|m| m.rows() != i || m.cols() != omega.len()) {
            return Err(ModelError::invalid(
                "U",
                format!("every node needs an {i}x{} matrix", omega.len()),
            ));
        }
        if sigma_theta2
            .iter()
            .any(|s| !(*s > T::zero()) || !s.is_finite())
        {
            return Err(ModelError::invalid(
                "sigma_theta2",
                "variances must be positive",
            ));
        }
        Ok(ObservationModel {
            u,
            omega,
            b,
            sigma_theta2,
        })
    }

    /// Model over the first `window` iterations of a realization, at its
    /// true parameters.
    pub fn from_dataset(ds: &SensorDataset<T>, window: usize) -> Result<Self, ModelError> {
        if window == 0 || window > ds.n_iters {
            return Err(ModelError::invalid(
                "window",
                format!("must lie in 1..={}, got {window}", ds.n_iters),
            ));
        }
        let l = ds.l();
        let u = (0..ds.n_nodes())
            .map(|k| Matrix::from_fn(window, l, |i, j| ds.regressor(i, k)[j]))
            .collect();
        let s2 = ds.truth.sigma_theta.iter().map(|s| *s * *s).collect();
        Self::new(u, ds.truth.omega_o.clone(), ds.truth.b.clone(), s2)
    }

    pub fn n_nodes(&self) -> usize {
        self.u.len()
    }

    pub fn l(&self) -> usize {
        self.omega.len()
    }

    pub fn n_obs(&self) -> usize {
        self.u[0].rows()
    }

    /// `r_k = U_k ω + b_k (U_k ω)²`.
    pub fn mean(&self, k: usize) -> Vec<T> {
        self.u[k]
            .mat_vec(&self.omega)
            .into_iter()
            .map(|y| y + self.b[k] * y * y)
            .collect()
    }
}

/// `∂r_k/∂ω`: row `t` is `u_tᵀ (1 + 2 b_k u_tᵀω)`.
pub fn sensitivity_p<T: Real>(model: &ObservationModel<T>, k: usize) -> Matrix<T> {
    let u = &model.u[k];
    let b = model.b[k];
    let mut p = u.clone();
    for t in 0..u.rows() {
        let s = T::one() + T::two() * b * dot(u.row(t), &model.omega);
        p.row_mut(t).iter_mut().for_each(|x| *x *= s);
    }
    p
}

/// `∂r_k/∂b_k = (U_k ω)⊙(U_k ω)`; the derivative with respect to any other
/// node's coefficient is zero.
pub fn sensitivity_pprime<T: Real>(model: &ObservationModel<T>, k: usize) -> Vec<T> {
    model.u[k]
        .mat_vec(&model.omega)
        .into_iter()
        .map(|y| y * y)
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct FimBlocks<T> {
    pub f_omega: Matrix<T>,
    /// Diagonal.
    pub f_b: Matrix<T>,
    /// Row `k` couples `b_k` with `ω`.
    pub f_bomega: Matrix<T>,
}

impl<T: Real> FimBlocks<T> {
    /// `[[F_ω, F_bωᵀ], [F_bω, F_b]]`.
    pub fn full(&self) -> Matrix<T> {
        let l = self.f_omega.rows();
        let n = self.f_b.rows();
        Matrix::from_fn(l + n, l + n, |i, j| match (i < l, j < l) {
            (true, true) => self.f_omega[(i, j)],
            (true, false) => self.f_bomega[(j - l, i)],
            (false, true) => self.f_bomega[(i - l, j)],
            (false, false) => self.f_b[(i - l, j - l)],
        })
    }
}

pub fn assemble_fim<T: Real>(model: &ObservationModel<T>) -> FimBlocks<T> {
    let (n, l) = (model.n_nodes(), model.l());
    let mut f_omega = Matrix::zeros(l, l);
    let mut f_b = Matrix::zeros(n, n);
    let mut f_bomega = Matrix::zeros(n, l);
    for k in 0..n {
        let inv = T::one() / model.sigma_theta2[k];
        let p = sensitivity_p(model, k);
        let pc = sensitivity_pprime(model, k);
        for t in 0..p.rows() {
            let row = p.row(t);
            for i in 0..l {
                for j in 0..l {
                    f_omega[(i, j)] += inv * row[i] * row[j];
                }
                f_bomega[(k, i)] += inv * pc[t] * row[i];
            }
            f_b[(k, k)] += inv * pc[t] * pc[t];
        }
    }
    FimBlocks {
        f_omega,
        f_b,
        f_bomega,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrbResult<T> {
    pub omega: Vec<T>,
    pub b: Vec<T>,
    pub trace_omega: T,
    pub trace_b: T,
}

/// Diagonal of the inverse FIM, split into the `ω` and `b` blocks.
pub fn crb_from_fim<T: Real>(blocks: &FimBlocks<T>) -> Result<CrbResult<T>, CrbError> {
    let fim = blocks.full();
    let l = blocks.f_omega.rows();
    let eig = symmetric_eigen(&fim)?;
    let lo = eig.values[0];
    let hi = eig.values.iter().fold(T::zero(), |m, v| m.max(v.abs()));
    let condition = if lo > T::zero() {
        (hi / lo).to_f64_lossy()
    } else {
        f64::INFINITY
    };
    if !(condition <= MAX_CONDITION) {
        return Err(CrbError::NonIdentifiable {
            condition,
            null_direction: eig
                .vectors
                .column(0)
                .iter()
                .map(|x| x.to_f64_lossy())
                .collect(),
        });
    }
    let diag = Cholesky::new(&fim)?.inverse().diagonal();
    let (omega, b) = diag.split_at(l);
    Ok(CrbResult {
        trace_omega: omega.iter().copied().sum(),
        trace_b: b.iter().copied().sum(),
        omega: omega.to_vec(),
        b: b.to_vec(),
    })
}

/// Total-variance bounds in dB: `(10 log10 Σ CRB_ω, 10 log10 Σ CRB_b)`.
pub fn crb_msd_db<T: Real>(crb: &CrbResult<T>) -> (T, T) {
    (
        crate::scalar::db(crb.trace_omega),
        crate::scalar::db(crb.trace_b),
    )
}

/// Monte Carlo estimate of the score covariance `E{s sᵀ}` at the true
/// parameters, entries in row-major order of the `(L+N)²` matrix.
pub fn score_covariance_monte_carlo(
    model: &ObservationModel<f64>,
    samples: usize,
    seed: u64,
) -> MomentEstimate {
    const BATCHES: u64 = 16;
    let (n, l) = (model.n_nodes(), model.l());
    let dim = l + n;
    let means: Vec<Vec<f64>> = (0..n).map(|k| model.mean(k)).collect();
    let ps: Vec<Matrix<f64>> = (0..n).map(|k| sensitivity_p(model, k)).collect();
    let pcs: Vec<Vec<f64>> = (0..n).map(|k| sensitivity_pprime(model, k)).collect();
    let per = samples.div_ceil(BATCHES as usize);
    let parts: Vec<(Vec<f64>, Vec<f64>, usize)> = (0..BATCHES)
        .into_par_iter()
        .map(|batch| {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            rng.set_stream(batch);
            let count = per.min(samples.saturating_sub(batch as usize * per));
            let mut s1 = vec![0.0; dim * dim];
            let mut s2 = vec![0.0; dim * dim];
            let mut score = vec![0.0; dim];
            for _ in 0..count {
                score.iter_mut().for_each(|x| *x = 0.0);
                for k in 0..n {
                    let sd = model.sigma_theta2[k].sqrt();
                    for t in 0..model.n_obs() {
                        let z: f64 = rng.sample(StandardNormal);
                        let x = means[k][t] + sd * z;
                        let w = (x - means[k][t]) / model.sigma_theta2[k];
                        for (s, p) in score[..l].iter_mut().zip(ps[k].row(t)) {
                            *s += w * p;
                        }
                        score[l + k] += w * pcs[k][t];
                    }
                }
                for i in 0..dim {
                    for j in 0..dim {
                        let v = score[i] * score[j];
                        s1[i * dim + j] += v;
                        s2[i * dim + j] += v * v;
                    }
                }
            }
            (s1, s2, count)
        })
        .collect();
    let mut s1 = vec![0.0; dim * dim];
    let mut s2 = vec![0.0; dim * dim];
    let mut total = 0usize;
    for (a, b, c) in parts {
        s1.iter_mut().zip(&a).for_each(|(x, y)| *x += y);
        s2.iter_mut().zip(&b).for_each(|(x, y)| *x += y);
        total += c;
    }
    let nf = total as f64;
    let mean: Vec<f64> = s1.iter().map(|s| s / nf).collect();
    let std_err = s2
        .iter()
        .zip(&mean)
        .map(|(q, m)| ((q / nf - m * m).max(0.0) * nf / (nf - 1.0) / nf).sqrt())
        .collect();
    MomentEstimate {
        mean,
        std_err,
        samples: total,
    }
}

//! Recursions for the expected estimation error `E{ω_k,i − ω_o}`.

use std::io::{self, Write};

use rayon::prelude::*;

use super::moments::{appendix_f, appendix_h, appendix_r, appendix_t, MomentEstimate};
use crate::algorithms::{run_dlms, LinkSetting, Measurements, RunOptions};
use crate::error::{LinalgError, ModelError};
use crate::linalg::{spectral_radius, Matrix};
use crate::scalar::{norm_sq, Real};
use crate::signal::{generate_dataset, SignalConfig};
use crate::topology::{CombinationMatrices, NetworkTopology};

/// `γ_{l'k} = a_{l'k} − μσ_u² Σ_l c_{l'l} a_{lk}`, i.e. `A − μσ_u² C A`.
///
/// The support can reach two hops: `l'` feeds `l` through `c`, which feeds
/// `k` through `a`.
pub fn gamma_coefficients<T: Real>(
    weights: &CombinationMatrices<T>,
    mu: T,
    sigma_u2: T,
) -> Matrix<T> {
    let ca = weights.c.matmul(&weights.a);
    weights.a.sub(&ca.scale(mu * sigma_u2))
}

/// `ã_{lk} = a_{lk} − μσ_u² Σ_{l'} c_{l'l}` on the support of `a`.
///
/// This collapses the adaptation step onto each sender's own error; it
/// contracts a uniform error by `1 − 2μσ_u²` on two nodes, whereas the
/// DLMS mean follows `γ` and contracts it by `1 − μσ_u²`.
pub fn special_case_coefficients<T: Real>(
    weights: &CombinationMatrices<T>,
    mu: T,
    sigma_u2: T,
) -> Matrix<T> {
    let n = weights.n_nodes();
    let col_c: Vec<T> = (0..n)
        .map(|l| (0..n).fold(T::zero(), |s, lp| s + weights.c[(lp, l)]))
        .collect();
    Matrix::from_fn(n, n, |l, k| {
        let a = weights.a[(l, k)];
        if a > T::zero() {
            a - mu * sigma_u2 * col_c[l]
        } else {
            T::zero()
        }
    })
}

/// Per-iteration mean errors; entry 0 is the initial state.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanTrajectory<T> {
    /// `errors[i][k]` is the predicted `E{ω_k,i − ω_o}`.
    pub errors: Vec<Vec<Vec<T>>>,
    /// Bias forcing term `g_k,i`, one per node per step (entry 0 is zero).
    /// Absent for the bias-free recursion.
    pub bias: Option<Vec<Vec<Vec<T>>>>,
    pub spectral_radius: T,
    /// Spectral radius of the recursion matrix is at least one.
    pub divergent: bool,
}

impl<T: Real> MeanTrajectory<T> {
    pub fn n_steps(&self) -> usize {
        self.errors.len() - 1
    }

    pub fn error_norms(&self, i: usize) -> Vec<T> {
        self.errors[i].iter().map(|e| norm_sq(e).sqrt()).collect()
    }

    /// CSV with `iter,node,mean_error_norm,bias_norm,bound_db`; the last
    /// column repeats `bound_db` when given and is empty otherwise.
    pub fn write_csv<W: Write>(&self, mut w: W, bound_db: Option<f64>) -> io::Result<()> {
        writeln!(w, "iter,node,mean_error_norm,bias_norm,bound_db")?;
        let bound = bound_db.map(|b| format!("{b}")).unwrap_or_default();
        for (i, step) in self.errors.iter().enumerate() {
            for (k, e) in step.iter().enumerate() {
                let bias = self
                    .bias
                    .as_ref()
                    .map(|g| format!("{}", norm_sq(&g[i][k]).sqrt()))
                    .unwrap_or_default();
                writeln!(
                    w,
                    "{},{},{},{},{}",
                    i,
                    k + 1,
                    norm_sq(e).sqrt(),
                    bias,
                    bound
                )?;
            }
        }
        Ok(())
    }
}

fn check_initial<T>(initial: &[Vec<T>], n: usize) -> Result<usize, ModelError> {
    if initial.len() != n {
        return Err(ModelError::invalid(
            "initial",
            format!("expected {n} node vectors, got {}", initial.len()),
        ));
    }
    let l = initial.first().map_or(0, |v| v.len());
    if initial.iter().any(|v| v.len() != l) {
        return Err(ModelError::invalid("initial", "vectors differ in length"));
    }
    Ok(l)
}

fn propagate<T: Real>(gamma: &Matrix<T>, prev: &[Vec<T>], l: usize) -> Vec<Vec<T>> {
    let n = prev.len();
    (0..n)
        .map(|k| {
            let mut out = vec![T::zero(); l];
            for (lp, e) in prev.iter().enumerate() {
                let g = gamma[(lp, k)];
                if g != T::zero() {
                    for (o, &x) in out.iter_mut().zip(e) {
                        *o += g * x;
                    }
                }
            }
            out
        })
        .collect()
}

/// Bias-free recursion `ω̃̃_k,i = Σ_l γ_lk ω̃̃_l,i−1`.
pub fn mean_recursion_special<T: Real>(
    weights: &CombinationMatrices<T>,
    mu: T,
    sigma_u2: T,
    initial: &[Vec<T>],
    n_steps: usize,
) -> Result<MeanTrajectory<T>, RecursionError> {
    let l = check_initial(initial, weights.n_nodes())?;
    let gamma = gamma_coefficients(weights, mu, sigma_u2);
    let rho = spectral_radius(&gamma)?;
    let mut errors = Vec::with_capacity(n_steps + 1);
    errors.push(initial.to_vec());
    for _ in 0..n_steps {
        let next = propagate(&gamma, errors.last().expect("nonempty"), l);
        errors.push(next);
    }
    Ok(MeanTrajectory {
        errors,
        bias: None,
        spectral_radius: rho,
        divergent: rho >= T::one(),
    })
}

/// Model parameters the biased recursion needs beyond the weights.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneralRecursionInputs<T> {
    pub mu: T,
    pub sigma_u2: T,
    pub sigma_v2: T,
    /// Per-node nonlinearity coefficients.
    pub b: Vec<T>,
    pub omega_o: Vec<T>,
}

/// Biased recursion `ω̃̃_k,i = Σ_l γ_lk ω̃̃_l,i−1 + g_k,i` with
/// `g_k = Σ_l a_lk b_l (h_l + μ² r_l)`.
///
/// `h_l` evaluates the second moment of the intermediate estimate at
/// `ω_o + ω̃̃_l,i−1`; `r_l` is the coefficient of `μ²` in the second moment
/// of the measurement-distortion term.
pub fn mean_recursion_general<T: Real>(
    weights: &CombinationMatrices<T>,
    inputs: &GeneralRecursionInputs<T>,
    initial: &[Vec<T>],
    n_steps: usize,
) -> Result<MeanTrajectory<T>, RecursionError> {
    let n = weights.n_nodes();
    let l = check_initial(initial, n)?;
    if inputs.b.len() != n {
        return Err(ModelError::invalid(
            "b",
            format!("expected {n} coefficients, got {}", inputs.b.len()),
        )
        .into());
    }
    if inputs.omega_o.len() != l {
        return Err(ModelError::invalid(
            "omega_o",
            format!("expected length {l}, got {}", inputs.omega_o.len()),
        )
        .into());
    }
    let GeneralRecursionInputs {
        mu,
        sigma_u2,
        sigma_v2,
        ..
    } = *inputs;
    let gamma = gamma_coefficients(weights, mu, sigma_u2);
    let rho = spectral_radius(&gamma)?;

    let senders: Vec<Vec<usize>> = (0..n)
        .map(|lnode| {
            (0..n)
                .filter(|&lp| weights.c[(lp, lnode)] != T::zero())
                .collect()
        })
        .collect();
    let r: Vec<Vec<T>> = (0..n)
        .map(|lnode| {
            let c: Vec<T> = senders[lnode]
                .iter()
                .map(|&lp| weights.c[(lp, lnode)])
                .collect();
            let b: Vec<T> = senders[lnode].iter().map(|&lp| inputs.b[lp]).collect();
            appendix_r(&c, &b, &inputs.omega_o, sigma_u2, sigma_v2)
        })
        .collect();

    let mut errors = Vec::with_capacity(n_steps + 1);
    let mut bias = Vec::with_capacity(n_steps + 1);
    errors.push(initial.to_vec());
    bias.push(vec![vec![T::zero(); l]; n]);
    for _ in 0..n_steps {
        let prev = errors.last().expect("nonempty");
        let second: Vec<Vec<T>> = (0..n)
            .map(|lnode| {
                let c: Vec<T> = senders[lnode]
                    .iter()
                    .map(|&lp| weights.c[(lp, lnode)])
                    .collect();
                let errs: Vec<&[T]> = senders[lnode]
                    .iter()
                    .map(|&lp| prev[lp].as_slice())
                    .collect();
                let f = appendix_f(&c, sigma_u2, &errs);
                let t = appendix_t(&c, sigma_u2, &errs);
                let omega: Vec<T> = inputs
                    .omega_o
                    .iter()
                    .zip(&prev[lnode])
                    .map(|(&o, &e)| o + e)
                    .collect();
                let h = appendix_h(&omega, mu, &f, &t);
                h.iter()
                    .zip(&r[lnode])
                    .map(|(&h, &r)| h + mu * mu * r)
                    .collect()
            })
            .collect();
        let g: Vec<Vec<T>> = (0..n)
            .map(|k| {
                let mut out = vec![T::zero(); l];
                for lnode in 0..n {
                    let w = weights.a[(lnode, k)] * inputs.b[lnode];
                    if w != T::zero() {
                        for (o, &s) in out.iter_mut().zip(&second[lnode]) {
                            *o += w * s;
                        }
                    }
                }
                out
            })
            .collect();
        let mut next = propagate(&gamma, prev, l);
        for (nk, gk) in next.iter_mut().zip(&g) {
            for (x, &y) in nk.iter_mut().zip(gk) {
                *x += y;
            }
        }
        errors.push(next);
        bias.push(g);
    }
    Ok(MeanTrajectory {
        errors,
        bias: Some(bias),
        spectral_radius: rho,
        divergent: rho >= T::one(),
    })
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RecursionError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Sampling setup for the empirical mean error of DLMS.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanErrorExperiment {
    pub signal: SignalConfig,
    pub mu: f64,
    /// Fixed true parameter shared by every run.
    pub omega_o: Vec<f64>,
    /// Per-node coefficients shared by every run.
    pub b: Vec<f64>,
    pub measurements: Measurements,
    pub link: LinkSetting,
    pub runs: usize,
    pub seed: u64,
}

/// Per-checkpoint, per-node sample mean of `ω_k,i − ω_o` over independent
/// runs; checkpoint `i` is the state after `i` iterations. Runs that
/// diverge are skipped and counted in the second return value.
pub fn dlms_mean_error_monte_carlo(
    exp: &MeanErrorExperiment,
    topology: &NetworkTopology,
    weights: &CombinationMatrices<f64>,
    checkpoints: &[usize],
) -> Result<(Vec<Vec<MomentEstimate>>, usize), ModelError> {
    let mut cfg = exp.signal.clone();
    cfg.n_iters = checkpoints.iter().copied().max().unwrap_or(0).max(1);
    cfg.validate()?;
    let (n, l) = (cfg.n_nodes, cfg.l);
    let per_run: Vec<Option<Vec<Vec<Vec<f64>>>>> = (0..exp.runs)
        .into_par_iter()
        .map(|r| -> Result<_, ModelError> {
            let ds = generate_dataset::<f64>(&cfg, exp.seed.wrapping_add(r as u64))?
                .with_coeffs(&exp.b)
                .with_parameter(&exp.omega_o);
            let opts = RunOptions {
                record_trajectory: true,
            };
            let Ok(trace) = run_dlms(
                &ds,
                topology,
                weights,
                exp.mu,
                exp.measurements,
                exp.link,
                opts,
            ) else {
                return Ok(None);
            };
            let tr = trace.trajectory.expect("recorded");
            Ok(Some(
                checkpoints
                    .iter()
                    .map(|&i| {
                        (0..n)
                            .map(|k| {
                                let w = if i == 0 {
                                    vec![0.0; l]
                                } else {
                                    tr.omega(i - 1, k).to_vec()
                                };
                                w.iter().zip(&exp.omega_o).map(|(x, o)| x - o).collect()
                            })
                            .collect()
                    })
                    .collect(),
            ))
        })
        .collect::<Result<_, _>>()?;
    let ok: Vec<_> = per_run.iter().flatten().collect();
    let diverged = per_run.len() - ok.len();
    let m = ok.len() as f64;
    let out = (0..checkpoints.len())
        .map(|c| {
            (0..n)
                .map(|k| {
                    let mean: Vec<f64> = (0..l)
                        .map(|j| ok.iter().map(|run| run[c][k][j]).sum::<f64>() / m)
                        .collect();
                    let std_err = (0..l)
                        .map(|j| {
                            let var = ok
                                .iter()
                                .map(|run| (run[c][k][j] - mean[j]).powi(2))
                                .sum::<f64>()
                                / (m - 1.0);
                            (var / m).sqrt()
                        })
                        .collect();
                    MomentEstimate {
                        mean,
                        std_err,
                        samples: ok.len(),
                    }
                })
                .collect()
        })
        .collect();
    Ok((out, diverged))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::uniform_weights;

    fn pair() -> (NetworkTopology, CombinationMatrices<f64>) {
        let topo = NetworkTopology::from_edges(2, &[(0, 1)]).unwrap();
        let w = uniform_weights(&topo);
        (topo, w)
    }

    #[test]
    fn gamma_examples() {
        let (_, w) = pair();
        assert_eq!(gamma_coefficients(&w, 0.0, 1.0), w.a);
        let g = gamma_coefficients(&w, 0.01, 1.0);
        for i in 0..2 {
            for j in 0..2 {
                assert!((g[(i, j)] - 0.495).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn gamma_support_is_one_c_hop_closure() {
        let topo = NetworkTopology::from_edges(4, &[(0, 1), (1, 2), (2, 3)]).unwrap();
        let w: CombinationMatrices<f64> = uniform_weights(&topo);
        let g = gamma_coefficients(&w, 0.05, 1.0);
        for lp in 0..4 {
            for k in 0..4 {
                let reach =
                    (0..4).any(|l| w.c[(lp, l)] > 0.0 && w.a[(l, k)] > 0.0) || w.a[(lp, k)] > 0.0;
                assert_eq!(g[(lp, k)] != 0.0, reach, "({lp},{k})");
            }
        }
        assert!(g[(0, 2)] != 0.0);
        assert_eq!(g[(0, 3)], 0.0);
    }

    #[test]
    fn special_case_coefficients_example() {
        let (_, w) = pair();
        let a = special_case_coefficients(&w, 0.01, 1.0);
        assert!((a[(0, 1)] - 0.49).abs() < 1e-15);
        let rho = spectral_radius(&a).unwrap();
        assert!((rho - 0.98).abs() < 1e-8);
    }

    #[test]
    fn zero_errors_stay_zero() {
        let (_, w) = pair();
        let t = mean_recursion_special(&w, 0.01, 1.0, &[vec![0.0; 3], vec![0.0; 3]], 20).unwrap();
        assert!(t.errors.iter().flatten().flatten().all(|&x| x == 0.0));
        assert!(!t.divergent);
    }

    #[test]
    fn uniform_error_contracts() {
        let (_, w) = pair();
        let t = mean_recursion_special(&w, 0.01, 1.0, &[vec![1.0], vec![1.0]], 3).unwrap();
        assert!((t.errors[3][0][0] - 0.99f64.powi(3)).abs() < 1e-14);
        assert!((t.spectral_radius - 0.99).abs() < 1e-12);
    }

    #[test]
    fn large_step_is_flagged() {
        let (_, w) = pair();
        let t = mean_recursion_special(&w, 3.0, 1.0, &[vec![1.0], vec![1.0]], 5).unwrap();
        assert!(t.divergent);
        assert_eq!(t.n_steps(), 5);
    }

    #[test]
    fn general_without_nonlinearity_matches_special() {
        let topo = NetworkTopology::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        let w: CombinationMatrices<f64> = uniform_weights(&topo);
        let init = vec![vec![0.3, -0.1], vec![0.0, 0.2], vec![-0.5, 0.4]];
        let s = mean_recursion_special(&w, 0.02, 1.0, &init, 40).unwrap();
        let inputs = GeneralRecursionInputs {
            mu: 0.02,
            sigma_u2: 1.0,
            sigma_v2: 0.01,
            b: vec![0.0; 3],
            omega_o: vec![0.6, 0.8],
        };
        let g = mean_recursion_general(&w, &inputs, &init, 40).unwrap();
        assert_eq!(s.errors, g.errors);
    }

    fn steady_bias(b_scale: f64) -> f64 {
        let (_, w) = pair();
        let inputs = GeneralRecursionInputs {
            mu: 0.05,
            sigma_u2: 1.0,
            sigma_v2: 0.0,
            b: vec![-0.02 * b_scale, -0.01 * b_scale],
            omega_o: vec![0.6, 0.8],
        };
        let t = mean_recursion_general(&w, &inputs, &[vec![0.0; 2], vec![0.0; 2]], 2000).unwrap();
        let last = &t.errors[2000];
        let prev = &t.errors[1999];
        assert!((norm_sq(&last[0]) - norm_sq(&prev[0])).abs() < 1e-14);
        norm_sq(&last[0]).sqrt()
    }

    #[test]
    fn bias_shrinks_with_nonlinearity() {
        let big = steady_bias(1.0);
        let small = steady_bias(0.1);
        let tiny = steady_bias(0.01);
        assert!(
            big > small && small > tiny && tiny > 0.0,
            "{big} {small} {tiny}"
        );
    }

    #[test]
    fn csv_layout() {
        let (_, w) = pair();
        let t = mean_recursion_special(&w, 0.01, 1.0, &[vec![1.0], vec![1.0]], 2).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf, Some(-17.2)).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(s.lines().count(), 1 + 3 * 2);
        assert!(s.lines().nth(1).unwrap().starts_with("0,1,1,,-17.2"));
    }
}

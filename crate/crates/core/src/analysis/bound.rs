use crate::algorithms::{run_dlms, LinkSetting, Measurements, RunOptions};
use crate::error::DivergenceError;
use crate::scalar::{dist_sq, Real};
use crate::signal::SensorDataset;
use crate::topology::{CombinationMatrices, NetworkTopology};

/// Inputs of the nonlinearity error bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundInputs<T> {
    pub mu: T,
    pub b_max: T,
    pub l: usize,
    pub omega_norm: T,
}

/// Upper bound on the squared error injected by link nonlinearity with
/// coefficients no larger than `b_max` in magnitude:
/// `2 b^2.5 L μ^1.5 ‖ω‖³ + μ^1.5 b^3.5 ‖ω‖³ (L √(μb) ‖ω‖ + 4√L)²`.
pub fn c1_max<T: Real>(inp: &BoundInputs<T>) -> T {
    let BoundInputs {
        mu,
        b_max: b,
        l,
        omega_norm: w,
    } = *inp;
    let l = T::lit(l as f64);
    let mu15 = mu.powf(T::lit(1.5));
    let w3 = w * w * w;
    let inner = l * (mu * b).sqrt() * w + T::lit(4.0) * l.sqrt();
    T::two() * b.powf(T::lit(2.5)) * l * mu15 * w3 + mu15 * b.powf(T::lit(3.5)) * w3 * inner * inner
}

/// `c1 Σ_{l1} Σ_{l2} a_{l1,k} a_{l2,k}`; equal to `c1` for stochastic weights.
pub fn error_bound<T: Real>(c1: T, a_k: &[T]) -> T {
    let mut s = T::zero();
    for &a1 in a_k {
        for &a2 in a_k {
            s += a1 * a2;
        }
    }
    c1 * s
}

/// Outcome of comparing paired trajectories against the bound.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundCheck {
    pub bound: f64,
    /// Post-transient (iteration, node) pairs inspected.
    pub samples: usize,
    /// Fraction of them with `‖ω_nl − ω_clean‖² ≤ bound`.
    pub fraction_within: f64,
    pub max_sq_deviation: f64,
    /// Set when the run with nonlinear links diverged.
    pub divergence: Option<DivergenceError>,
}

/// Runs DLMS twice on identical data with linear measurements, once over
/// clean links and once over nonlinear links, and measures how often the
/// per-node squared difference stays below `bound` after `transient`
/// iterations.
pub fn paired_bound_check<T: Real>(
    dataset: &SensorDataset<T>,
    topology: &NetworkTopology,
    weights: &CombinationMatrices<T>,
    mu: T,
    bound: f64,
    transient: usize,
) -> Result<BoundCheck, DivergenceError> {
    let opts = RunOptions {
        record_trajectory: true,
    };
    let clean = run_dlms(
        dataset,
        topology,
        weights,
        mu,
        Measurements::Linear,
        LinkSetting::Clean,
        opts,
    )?;
    let nl = match run_dlms(
        dataset,
        topology,
        weights,
        mu,
        Measurements::Linear,
        LinkSetting::Nonlinear,
        opts,
    ) {
        Ok(t) => t,
        Err(e) => {
            return Ok(BoundCheck {
                bound,
                samples: 0,
                fraction_within: 0.0,
                max_sq_deviation: f64::INFINITY,
                divergence: Some(e),
            })
        }
    };
    let (tc, tn) = (
        clean.trajectory.expect("recorded"),
        nl.trajectory.expect("recorded"),
    );
    let mut samples = 0usize;
    let mut within = 0usize;
    let mut worst = 0.0f64;
    for i in transient.min(tc.n_iters())..tc.n_iters() {
        for k in 0..tc.n_nodes() {
            let dev = dist_sq(tc.omega(i, k), tn.omega(i, k)).to_f64_lossy();
            samples += 1;
            if dev <= bound {
                within += 1;
            }
            worst = worst.max(dev);
        }
    }
    Ok(BoundCheck {
        bound,
        samples,
        fraction_within: if samples == 0 {
            0.0
        } else {
            within as f64 / samples as f64
        },
        max_sq_deviation: worst,
        divergence: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inputs(mu: f64, b: f64, l: usize, w: f64) -> BoundInputs<f64> {
        BoundInputs {
            mu,
            b_max: b,
            l,
            omega_norm: w,
        }
    }

    #[test]
    fn reference_value() {
        // independent evaluation of the closed form
        let (mu, b, l, w) = (0.01f64, 0.4f64, 20.0f64, 1.0f64);
        let t1 = 2.0 * b.powf(2.5) * l * mu.powf(1.5) * w.powi(3);
        let t2 = mu.powf(1.5)
            * b.powf(3.5)
            * w.powi(3)
            * (l * (mu * b).sqrt() * w + 4.0 * l.sqrt()).powi(2);
        let c1 = c1_max(&inputs(0.01, 0.4, 20, 1.0));
        assert!((c1 - (t1 + t2)).abs() < 1e-15);
        assert!((c1 - 1.89e-2).abs() < 5e-5, "{c1}");
        assert!(10.0 * c1.log10() < -10.0);
    }

    #[test]
    fn vanishes_with_linear_sensors() {
        assert_eq!(c1_max(&inputs(0.01, 0.0, 20, 1.0)), 0.0);
        assert!(c1_max(&inputs(0.01, 1e-9, 20, 1.0)) < 1e-20);
    }

    #[test]
    fn monotone_on_grid() {
        let grid = [0.001, 0.01, 0.05, 0.2, 0.5];
        for &mu in &grid {
            for &b in &grid {
                for l in [1usize, 5, 20] {
                    for &w in &[0.1, 1.0, 3.0] {
                        let base = c1_max(&inputs(mu, b, l, w));
                        assert!(c1_max(&inputs(mu * 1.5, b, l, w)) >= base);
                        assert!(c1_max(&inputs(mu, b * 1.5, l, w)) >= base);
                        assert!(c1_max(&inputs(mu, b, l + 1, w)) >= base);
                        assert!(c1_max(&inputs(mu, b, l, w * 1.5)) >= base);
                    }
                }
            }
        }
    }

    #[test]
    fn stochastic_weights_leave_c1_unchanged() {
        assert_eq!(error_bound(2.0, &[0.5, 0.5]), 2.0);
        assert_eq!(error_bound(0.3, &[0.25; 4]), 0.3);
        assert_eq!(error_bound(0.7, &[1.0]), 0.7);
    }
}

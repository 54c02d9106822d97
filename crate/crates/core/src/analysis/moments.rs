//! Gaussian moment closed forms used by the mean recursion, each paired with
//! a Monte Carlo evaluator.
//!
//! Notation: node `l` adapts with weights `c_{l',l}` over its neighbors `l'`;
//! `p_l = −Σ c_{l'} u_{l'} u_{l'}ᵀ w_{l'}` with i.i.d. `u ~ N(0, σ_u² I)` and
//! `w_{l'}` the neighbors' mean errors.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::scalar::{dot, norm_sq, Real};

/// `f = E{p} = −σ_u² Σ c_{l'} w_{l'}`.
pub fn appendix_f<T: Real>(c: &[T], sigma_u2: T, errors: &[&[T]]) -> Vec<T> {
    let l = errors.first().map_or(0, |e| e.len());
    let mut f = vec![T::zero(); l];
    for (&cj, w) in c.iter().zip(errors) {
        for (fr, &wr) in f.iter_mut().zip(w.iter()) {
            *fr -= sigma_u2 * cj * wr;
        }
    }
    f
}

/// `t_r = E{p_r²}`: cross-neighbor terms `c' c'' σ⁴ w'_r w''_r` plus
/// same-neighbor terms `c'² σ⁴ (‖w'‖² + 2 w'_r²)`.
pub fn appendix_t<T: Real>(c: &[T], sigma_u2: T, errors: &[&[T]]) -> Vec<T> {
    let l = errors.first().map_or(0, |e| e.len());
    let s4 = sigma_u2 * sigma_u2;
    let mut t = vec![T::zero(); l];
    for (j1, (&c1, w1)) in c.iter().zip(errors).enumerate() {
        let n1 = norm_sq(w1);
        for r in 0..l {
            t[r] += c1 * c1 * s4 * (n1 + T::two() * w1[r] * w1[r]);
        }
        for (j2, (&c2, w2)) in c.iter().zip(errors).enumerate() {
            if j2 != j1 {
                for r in 0..l {
                    t[r] += c1 * c2 * s4 * w1[r] * w2[r];
                }
            }
        }
    }
    t
}

/// `h = ω⊙ω + 2μ ω⊙f + μ² t`, the elementwise second moment of `ω + μ p`.
pub fn appendix_h<T: Real>(omega: &[T], mu: T, f: &[T], t: &[T]) -> Vec<T> {
    omega
        .iter()
        .zip(f)
        .zip(t)
        .map(|((&w, &fr), &tr)| w * w + T::two() * mu * w * fr + mu * mu * tr)
        .collect()
}

/// Components of `A_r`, the fourth-power measurement moment
/// `E{(uᵀw + v)⁴ u_r²}` as it enters `r`.
#[derive(Debug, Clone, PartialEq)]
pub struct ATerms<T> {
    /// `E{(uᵀw)⁴ u_r²} = σ⁶ (3‖w‖⁴ + 12 ‖w‖² w_r²)`.
    pub sixth: Vec<T>,
    /// `6 σ_v² σ⁴ (‖w‖² + 2 w_r²)`: the noise cross terms.
    pub cross: Vec<T>,
    /// `3 σ_v⁴ σ_u²`, the term `E{v⁴ u_r²}`.
    pub noise: T,
    /// Extra additive `σ_v²` carried by the published expression; absent
    /// from the exact expansion and dimensionally inconsistent with it.
    pub extra: T,
}

impl<T: Real> ATerms<T> {
    /// The published expression, extra term included.
    pub fn as_published(&self) -> Vec<T> {
        self.exact().into_iter().map(|x| x + self.extra).collect()
    }

    /// `E{(uᵀw + v)⁴ u_r²}` by Isserlis' theorem.
    pub fn exact(&self) -> Vec<T> {
        self.sixth
            .iter()
            .zip(&self.cross)
            .map(|(&s, &c)| s + c + self.noise)
            .collect()
    }
}

pub fn appendix_a<T: Real>(w: &[T], sigma_u2: T, sigma_v2: T) -> ATerms<T> {
    let n2 = norm_sq(w);
    let s4 = sigma_u2 * sigma_u2;
    let s6 = s4 * sigma_u2;
    ATerms {
        sixth: w
            .iter()
            .map(|&wr| s6 * (T::lit(3.0) * n2 * n2 + T::lit(12.0) * n2 * wr * wr))
            .collect(),
        cross: w
            .iter()
            .map(|&wr| T::lit(6.0) * sigma_v2 * s4 * (n2 + T::two() * wr * wr))
            .collect(),
        noise: T::lit(3.0) * sigma_v2 * sigma_v2 * sigma_u2,
        extra: sigma_v2,
    }
}

/// `r_r = Σ_{l'} c_{l'}² b_{l'}² A_r`, using the published `A_r` with the
/// true parameter `w`.
pub fn appendix_r<T: Real>(c: &[T], b: &[T], w: &[T], sigma_u2: T, sigma_v2: T) -> Vec<T> {
    let a = appendix_a(w, sigma_u2, sigma_v2).as_published();
    let scale = c
        .iter()
        .zip(b)
        .fold(T::zero(), |acc, (&cj, &bj)| acc + cj * cj * bj * bj);
    a.into_iter().map(|x| scale * x).collect()
}

/// Sample mean and its standard error, per component.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentEstimate {
    pub mean: Vec<f64>,
    pub std_err: Vec<f64>,
    pub samples: usize,
}

impl MomentEstimate {
    /// `(mean − reference) / std_err` per component.
    pub fn z_scores(&self, reference: &[f64]) -> Vec<f64> {
        self.mean
            .iter()
            .zip(&self.std_err)
            .zip(reference)
            .map(|((m, s), r)| {
                if *s > 0.0 {
                    (m - r) / s
                } else if m == r {
                    0.0
                } else {
                    f64::INFINITY
                }
            })
            .collect()
    }

    /// Every component within `k` standard errors of `reference`.
    pub fn agrees_with(&self, reference: &[f64], k: f64) -> bool {
        self.z_scores(reference).iter().all(|z| z.abs() <= k)
    }
}

const BATCHES: u64 = 16;

/// Draws `samples` values of a vector statistic in independent,
/// deterministically seeded batches and reduces them in batch order.
fn monte_carlo<F>(dim: usize, samples: usize, seed: u64, draw: F) -> MomentEstimate
where
    F: Fn(&mut ChaCha20Rng, &mut [f64]) + Sync,
{
    let per = samples.div_ceil(BATCHES as usize);
    let parts: Vec<(Vec<f64>, Vec<f64>, usize)> = (0..BATCHES)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            rng.set_stream(b);
            let n = per.min(samples.saturating_sub(b as usize * per));
            let mut s1 = vec![0.0; dim];
            let mut s2 = vec![0.0; dim];
            let mut x = vec![0.0; dim];
            for _ in 0..n {
                draw(&mut rng, &mut x);
                for r in 0..dim {
                    s1[r] += x[r];
                    s2[r] += x[r] * x[r];
                }
            }
            (s1, s2, n)
        })
        .collect();
    let mut s1 = vec![0.0; dim];
    let mut s2 = vec![0.0; dim];
    let mut n = 0usize;
    for (a, b, m) in parts {
        for r in 0..dim {
            s1[r] += a[r];
            s2[r] += b[r];
        }
        n += m;
    }
    let nf = n as f64;
    let mean: Vec<f64> = s1.iter().map(|s| s / nf).collect();
    let std_err = s2
        .iter()
        .zip(&mean)
        .map(|(q, m)| ((q / nf - m * m).max(0.0) * nf / (nf - 1.0)).sqrt() / nf.sqrt())
        .collect();
    MomentEstimate {
        mean,
        std_err,
        samples: n,
    }
}

fn gaussian(rng: &mut ChaCha20Rng, mean: f64, std: f64) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    mean + std * z
}

fn draw_p(
    rng: &mut ChaCha20Rng,
    c: &[f64],
    sigma_u: f64,
    errors: &[Vec<f64>],
    u: &mut [f64],
    p: &mut [f64],
) {
    p.iter_mut().for_each(|x| *x = 0.0);
    for (cj, w) in c.iter().zip(errors) {
        for x in u.iter_mut() {
            *x = gaussian(rng, 0.0, sigma_u);
        }
        let s = dot(u, w);
        for (pr, ur) in p.iter_mut().zip(u.iter()) {
            *pr -= cj * s * ur;
        }
    }
}

/// Monte Carlo `E{p}`.
pub fn appendix_f_monte_carlo(
    c: &[f64],
    sigma_u: f64,
    errors: &[Vec<f64>],
    samples: usize,
    seed: u64,
) -> MomentEstimate {
    let l = errors[0].len();
    monte_carlo(l, samples, seed, |rng, out| {
        let mut u = vec![0.0; l];
        draw_p(rng, c, sigma_u, errors, &mut u, out);
    })
}

/// Monte Carlo `E{p⊙p}`.
pub fn appendix_t_monte_carlo(
    c: &[f64],
    sigma_u: f64,
    errors: &[Vec<f64>],
    samples: usize,
    seed: u64,
) -> MomentEstimate {
    let l = errors[0].len();
    monte_carlo(l, samples, seed, |rng, out| {
        let mut u = vec![0.0; l];
        draw_p(rng, c, sigma_u, errors, &mut u, out);
        out.iter_mut().for_each(|x| *x *= *x);
    })
}

/// Monte Carlo `E{(ω + μ p)⊙(ω + μ p)}`.
pub fn appendix_h_monte_carlo(
    omega: &[f64],
    mu: f64,
    c: &[f64],
    sigma_u: f64,
    errors: &[Vec<f64>],
    samples: usize,
    seed: u64,
) -> MomentEstimate {
    let l = omega.len();
    monte_carlo(l, samples, seed, |rng, out| {
        let mut u = vec![0.0; l];
        draw_p(rng, c, sigma_u, errors, &mut u, out);
        for (o, w) in out.iter_mut().zip(omega) {
            let phi = w + mu * *o;
            *o = phi * phi;
        }
    })
}

/// Monte Carlo `E{(uᵀw + v)⁴ u_r²}`.
pub fn appendix_a_monte_carlo(
    w: &[f64],
    sigma_u: f64,
    sigma_v: f64,
    samples: usize,
    seed: u64,
) -> MomentEstimate {
    let l = w.len();
    monte_carlo(l, samples, seed, |rng, out| {
        let mut u = vec![0.0; l];
        for x in u.iter_mut() {
            *x = gaussian(rng, 0.0, sigma_u);
        }
        let d = dot(&u, w) + gaussian(rng, 0.0, sigma_v);
        let d4 = d * d * d * d;
        for (o, ur) in out.iter_mut().zip(&u) {
            *o = d4 * ur * ur;
        }
    })
}

/// Monte Carlo `r = Σ c² b² E{(uᵀw + v)⁴ u_r²}`, built on the sampled
/// moment so that it carries no extra constant.
pub fn appendix_r_monte_carlo(
    c: &[f64],
    b: &[f64],
    w: &[f64],
    sigma_u: f64,
    sigma_v: f64,
    samples: usize,
    seed: u64,
) -> MomentEstimate {
    let scale: f64 = c.iter().zip(b).map(|(c, b)| c * c * b * b).sum();
    let a = appendix_a_monte_carlo(w, sigma_u, sigma_v, samples, seed);
    MomentEstimate {
        mean: a.mean.iter().map(|m| m * scale).collect(),
        std_err: a.std_err.iter().map(|s| s * scale).collect(),
        samples: a.samples,
    }
}

/// Setting for checking that measurement nonlinearity adds no mean drift
/// to the adaptation step.
#[derive(Debug, Clone, PartialEq)]
pub struct GZeroConfig {
    /// Adaptation weights over the neighbors.
    pub c: Vec<f64>,
    /// Neighbors' nonlinearity coefficients.
    pub b: Vec<f64>,
    pub omega_o: Vec<f64>,
    pub mu: f64,
    pub sigma_u: f64,
    pub sigma_v: f64,
    pub sigma_theta: f64,
    /// Mean of every regressor entry; zero for the symmetric model.
    pub regressor_mean: f64,
}

impl GZeroConfig {
    pub fn symmetric(l: usize) -> Self {
        let omega_o = vec![1.0 / (l as f64).sqrt(); l];
        GZeroConfig {
            c: vec![0.5, 0.5],
            b: vec![-0.3, -0.15],
            omega_o,
            mu: 0.01,
            sigma_u: 1.0,
            sigma_v: 0.0,
            sigma_theta: 0.045,
            regressor_mean: 0.0,
        }
    }
}

/// Per-component check of `E{Δφ} = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct GZeroReport {
    pub estimate: MomentEstimate,
    pub z_scores: Vec<f64>,
    /// Components with `|z| > 4`.
    pub flagged: Vec<usize>,
}

impl GZeroReport {
    pub fn passed(&self) -> bool {
        self.flagged.is_empty()
    }
}

/// Monte Carlo estimate of `E{Δφ}`, where `Δφ = μ Σ c u (d̃ − d)` is what the
/// distorted measurements add to the adaptation step.
pub fn verify_g_zero(cfg: &GZeroConfig, samples: usize, seed: u64) -> GZeroReport {
    let l = cfg.omega_o.len();
    let estimate = monte_carlo(l, samples, seed, |rng, out| {
        out.iter_mut().for_each(|x| *x = 0.0);
        let mut u = vec![0.0; l];
        for (cj, bj) in cfg.c.iter().zip(&cfg.b) {
            for x in u.iter_mut() {
                *x = gaussian(rng, cfg.regressor_mean, cfg.sigma_u);
            }
            let d = dot(&u, &cfg.omega_o) + gaussian(rng, 0.0, cfg.sigma_v);
            let theta = gaussian(rng, 0.0, cfg.sigma_theta);
            let g = cfg.mu * cj * (bj * d * d + theta);
            for (o, ur) in out.iter_mut().zip(&u) {
                *o += g * ur;
            }
        }
    });
    let z_scores = estimate.z_scores(&vec![0.0; l]);
    let flagged = z_scores
        .iter()
        .enumerate()
        .filter(|(_, z)| z.abs() > 4.0)
        .map(|(i, _)| i)
        .collect();
    GZeroReport {
        estimate,
        z_scores,
        flagged,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn f_examples() {
        let z = [0.0f64; 3];
        assert_eq!(appendix_f(&[0.5, 0.5], 1.0, &[&z, &z]), vec![0.0; 3]);
        assert_eq!(appendix_f(&[1.0], 1.0, &[&[0.5, -0.5]]), vec![-0.5, 0.5]);
    }

    #[test]
    fn t_examples() {
        assert_eq!(appendix_t(&[1.0f64], 1.0, &[&[0.0, 0.0]]), vec![0.0, 0.0]);
        assert_eq!(appendix_t(&[1.0f64], 1.0, &[&[1.0, 0.0]]), vec![3.0, 1.0]);
    }

    #[test]
    fn h_examples() {
        let w = [0.3f64, -2.0];
        assert_eq!(
            appendix_h(&w, 0.0, &[5.0, 5.0], &[7.0, 7.0]),
            vec![0.09, 4.0]
        );
        let h = appendix_h(&[1.0f64], 0.1, &[-0.5], &[2.0]);
        assert!((h[0] - 0.92).abs() < 1e-15);
    }

    #[test]
    fn r_examples() {
        assert_eq!(
            appendix_r(&[0.5f64, 0.5], &[0.0, 0.0], &[1.0, 0.0], 1.0, 0.01),
            vec![0.0, 0.0]
        );
        let r = appendix_r(&[1.0f64], &[-0.2], &[1.0], 1.0, 0.0);
        assert!((r[0] - 0.04 * 15.0).abs() < 1e-14);
    }

    #[test]
    fn sixth_moment_matches_sampling() {
        let est = appendix_a_monte_carlo(&[1.0], 1.0, 0.0, 400_000, 3);
        let a = appendix_a(&[1.0f64], 1.0, 0.0).exact();
        assert!((a[0] - 15.0).abs() < 1e-12);
        assert!(est.agrees_with(&a, 3.0), "{est:?}");
    }

    #[test]
    fn f_and_t_match_sampling() {
        let errors = vec![vec![0.4, -0.2, 0.1], vec![-0.3, 0.5, 0.2]];
        let refs: Vec<&[f64]> = errors.iter().map(|e| e.as_slice()).collect();
        let c = [0.6, 0.4];
        let f = appendix_f(&c, 0.49, &refs);
        let t = appendix_t(&c, 0.49, &refs);
        let ef = appendix_f_monte_carlo(&c, 0.7, &errors, 100_000, 1);
        let et = appendix_t_monte_carlo(&c, 0.7, &errors, 100_000, 2);
        assert!(ef.agrees_with(&f, 3.0), "{ef:?} vs {f:?}");
        assert!(et.agrees_with(&t, 3.0), "{et:?} vs {t:?}");
    }

    #[test]
    fn monte_carlo_is_deterministic() {
        let a = appendix_a_monte_carlo(&[0.3, 0.2], 1.0, 0.1, 1000, 9);
        let b = appendix_a_monte_carlo(&[0.3, 0.2], 1.0, 0.1, 1000, 9);
        assert_eq!(a, b);
        assert_eq!(a.samples, 1000);
    }

    #[test]
    fn g_zero_small_report_shape() {
        let rep = verify_g_zero(&GZeroConfig::symmetric(4), 20_000, 5);
        assert_eq!(rep.z_scores.len(), 4);
        assert_eq!(rep.estimate.samples, 20_000);
    }
}

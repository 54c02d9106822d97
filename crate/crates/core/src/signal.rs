//! Ground truth, regressors, noises, and the second-order sensor model
//! `d̃ = d + b d² + θ`.

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Open01, StandardNormal};

use crate::error::ModelError;
use crate::scalar::Real;

/// `d + b d² + θ`.
#[inline]
pub fn apply_nonlinearity<T: Real>(d: T, b: T, theta: T) -> T {
    d + b * d * d + theta
}

/// Elementwise `φ + b φ⊙φ + η`, the distortion seen by an exchanged vector.
pub fn corrupt_link_vector<T: Real>(phi: &[T], b_l: T, eta: &[T]) -> Vec<T> {
    assert_eq!(phi.len(), eta.len(), "phi and eta lengths differ");
    phi.iter()
        .zip(eta)
        .map(|(&p, &e)| apply_nonlinearity(p, b_l, e))
        .collect()
}

/// In-place variant of [`corrupt_link_vector`] writing into `out`.
pub fn corrupt_link_into<T: Real>(phi: &[T], b_l: T, eta: Option<&[T]>, out: &mut [T]) {
    match eta {
        Some(eta) => {
            for ((o, &p), &e) in out.iter_mut().zip(phi).zip(eta) {
                *o = apply_nonlinearity(p, b_l, e);
            }
        }
        None => {
            for (o, &p) in out.iter_mut().zip(phi) {
                *o = p + b_l * p * p;
            }
        }
    }
}

/// Independent draws `b_k ~ U(-b_max, 0)`.
pub fn draw_nonlinear_coeffs<T: Real>(
    n_nodes: usize,
    b_max: f64,
    seed: u64,
) -> Result<Vec<T>, ModelError> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    draw_coeffs_with(&mut rng, n_nodes, b_max)
}

fn draw_coeffs_with<T: Real, R: Rng>(
    rng: &mut R,
    n_nodes: usize,
    b_max: f64,
) -> Result<Vec<T>, ModelError> {
    if !(b_max > 0.0) || !b_max.is_finite() {
        return Err(ModelError::invalid(
            "b_max",
            format!("must be positive, got {b_max}"),
        ));
    }
    Ok((0..n_nodes)
        .map(|_| {
            let x: f64 = rng.sample(Open01);
            T::lit(-b_max * x)
        })
        .collect())
}

/// Parameters for [`generate_dataset`].
#[derive(Debug, Clone, PartialEq)]
pub struct SignalConfig {
    pub n_nodes: usize,
    pub l: usize,
    pub n_iters: usize,
    pub sigma_u: f64,
    pub sigma_v: f64,
    pub sigma_theta: f64,
    pub sigma_eta: f64,
    pub b_max: f64,
    /// Length of the clean-measurement training window preceding iteration 1.
    pub pilot_len: usize,
    /// Rescale the drawn `ω_o` to unit Euclidean norm.
    pub normalize_omega: bool,
}

impl Default for SignalConfig {
    fn default() -> Self {
        SignalConfig {
            n_nodes: 16,
            l: 20,
            n_iters: 1000,
            sigma_u: 1.0,
            sigma_v: 0.0,
            sigma_theta: 0.045,
            sigma_eta: 0.0,
            b_max: 0.4,
            pilot_len: 200,
            normalize_omega: true,
        }
    }
}

impl SignalConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        for (name, v) in [
            ("n_nodes", self.n_nodes),
            ("L", self.l),
            ("n_iters", self.n_iters),
        ] {
            if v == 0 {
                return Err(ModelError::invalid(name, "must be positive"));
            }
        }
        for (name, v) in [
            ("sigma_v", self.sigma_v),
            ("sigma_theta", self.sigma_theta),
            ("sigma_eta", self.sigma_eta),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(ModelError::invalid(
                    name,
                    format!("must be a finite value >= 0, got {v}"),
                ));
            }
        }
        if !(self.sigma_u > 0.0) || !self.sigma_u.is_finite() {
            return Err(ModelError::invalid(
                "sigma_u",
                format!("must be positive, got {}", self.sigma_u),
            ));
        }
        if !(self.b_max > 0.0) || !self.b_max.is_finite() {
            return Err(ModelError::invalid(
                "b_max",
                format!("must be positive, got {}", self.b_max),
            ));
        }
        Ok(())
    }
}

/// True parameters of one realization.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth<T> {
    pub omega_o: Vec<T>,
    pub b: Vec<T>,
    pub sigma_theta: Vec<T>,
    pub sigma_v: Vec<T>,
    pub sigma_eta: Vec<T>,
    pub sigma_u: T,
}

impl<T: Real> GroundTruth<T> {
    pub fn l(&self) -> usize {
        self.omega_o.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.b.len()
    }

    pub fn omega_norm(&self) -> T {
        crate::scalar::norm_sq(&self.omega_o).sqrt()
    }
}

/// Pilot window with clean measurements visible to a fusion center.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotWindow<T> {
    pub len: usize,
    /// `d[t * n_nodes + k]`
    pub d: Vec<T>,
    pub d_tilde: Vec<T>,
    pub theta: Vec<T>,
}

/// One Monte Carlo realization. Per-sample arrays are time-major:
/// sample `(i, k)` lives at `i * n_nodes + k`, and regressor component `j`
/// at `(i * n_nodes + k) * L + j`.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorDataset<T> {
    pub truth: GroundTruth<T>,
    pub n_iters: usize,
    pub u: Vec<T>,
    pub d: Vec<T>,
    pub d_tilde: Vec<T>,
    pub v: Vec<T>,
    pub theta: Vec<T>,
    /// Link noise for vectors sent by node `k` at time `i`, same layout as `u`.
    /// Absent when its std is zero everywhere.
    pub eta: Option<Vec<T>>,
    pub pilot: PilotWindow<T>,
}

impl<T: Real> SensorDataset<T> {
    pub fn n_nodes(&self) -> usize {
        self.truth.n_nodes()
    }

    pub fn l(&self) -> usize {
        self.truth.l()
    }

    #[inline]
    pub fn regressor(&self, i: usize, k: usize) -> &[T] {
        let l = self.l();
        let off = (i * self.n_nodes() + k) * l;
        &self.u[off..off + l]
    }

    #[inline]
    pub fn eta(&self, i: usize, k: usize) -> Option<&[T]> {
        let l = self.l();
        let off = (i * self.n_nodes() + k) * l;
        self.eta.as_ref().map(|e| &e[off..off + l])
    }

    #[inline]
    pub fn idx(&self, i: usize, k: usize) -> usize {
        i * self.n_nodes() + k
    }

    /// The measurements a linear sensor with the same noise would report.
    pub fn linear_measurements(&self) -> Vec<T> {
        self.d
            .iter()
            .zip(&self.theta)
            .map(|(&d, &t)| d + t)
            .collect()
    }

    /// Copy with every nonlinearity coefficient replaced and `d̃` recomputed
    /// from the stored `d` and `θ`.
    pub fn with_coeffs(&self, b: &[T]) -> Self {
        assert_eq!(b.len(), self.n_nodes());
        let mut out = self.clone();
        out.truth.b = b.to_vec();
        let n = self.n_nodes();
        for (idx, dt) in out.d_tilde.iter_mut().enumerate() {
            *dt = apply_nonlinearity(self.d[idx], b[idx % n], self.theta[idx]);
        }
        for (idx, dt) in out.pilot.d_tilde.iter_mut().enumerate() {
            *dt = apply_nonlinearity(self.pilot.d[idx], b[idx % n], self.pilot.theta[idx]);
        }
        out
    }

    /// Copy with a different true parameter and `d`, `d̃` recomputed from
    /// the stored regressors and noise. The pilot window is left untouched.
    pub fn with_parameter(&self, omega_o: &[T]) -> Self {
        assert_eq!(omega_o.len(), self.l());
        let mut out = self.clone();
        out.truth.omega_o = omega_o.to_vec();
        let n = self.n_nodes();
        let l = self.l();
        for idx in 0..self.d.len() {
            let d = crate::scalar::dot(&self.u[idx * l..(idx + 1) * l], omega_o) + self.v[idx];
            out.d[idx] = d;
            out.d_tilde[idx] = apply_nonlinearity(d, self.truth.b[idx % n], self.theta[idx]);
        }
        out
    }

    /// Copy with every regressor scaled to unit norm and `d`, `d̃`
    /// recomputed. The pilot window is left untouched.
    pub fn with_unit_regressors(&self) -> Self {
        let mut out = self.clone();
        let n = self.n_nodes();
        let l = self.l();
        for idx in 0..self.d.len() {
            let u = &mut out.u[idx * l..(idx + 1) * l];
            let norm = crate::scalar::norm_sq(u).sqrt();
            if norm > T::zero() {
                u.iter_mut().for_each(|x| *x /= norm);
            }
            let d = crate::scalar::dot(u, &self.truth.omega_o) + self.v[idx];
            out.d[idx] = d;
            out.d_tilde[idx] = apply_nonlinearity(d, self.truth.b[idx % n], self.theta[idx]);
        }
        out
    }

    /// Writes one CSV file per field into `dir` (created if missing).
    pub fn export_csv(&self, dir: &Path) -> io::Result<()> {
        fs::create_dir_all(dir)?;
        let n = self.n_nodes();
        let l = self.l();
        let open = |name: &str| -> io::Result<BufWriter<fs::File>> {
            Ok(BufWriter::new(fs::File::create(dir.join(name))?))
        };

        let mut w = open("omega_o.csv")?;
        writeln!(w, "j,omega_o")?;
        for (j, x) in self.truth.omega_o.iter().enumerate() {
            writeln!(w, "{},{}", j + 1, x)?;
        }
        w.flush()?;

        let mut w = open("b.csv")?;
        writeln!(w, "node,b,sigma_v,sigma_theta,sigma_eta")?;
        for k in 0..n {
            writeln!(
                w,
                "{},{},{},{},{}",
                k + 1,
                self.truth.b[k],
                self.truth.sigma_v[k],
                self.truth.sigma_theta[k],
                self.truth.sigma_eta[k]
            )?;
        }
        w.flush()?;

        let vector_field = |name: &str, data: &[T]| -> io::Result<()> {
            let mut w = open(name)?;
            write!(w, "iter,node")?;
            for j in 0..l {
                write!(w, ",c{}", j + 1)?;
            }
            writeln!(w)?;
            for i in 0..self.n_iters {
                for k in 0..n {
                    write!(w, "{},{}", i + 1, k + 1)?;
                    let off = (i * n + k) * l;
                    for x in &data[off..off + l] {
                        write!(w, ",{x}")?;
                    }
                    writeln!(w)?;
                }
            }
            w.flush()
        };
        vector_field("u.csv", &self.u)?;
        if let Some(eta) = &self.eta {
            vector_field("eta.csv", eta)?;
        }

        for (name, data) in [
            ("d", &self.d),
            ("d_tilde", &self.d_tilde),
            ("v", &self.v),
            ("theta", &self.theta),
        ] {
            let mut w = open(&format!("{name}.csv"))?;
            writeln!(w, "iter,node,{name}")?;
            for i in 0..self.n_iters {
                for k in 0..n {
                    writeln!(w, "{},{},{}", i + 1, k + 1, data[i * n + k])?;
                }
            }
            w.flush()?;
        }

        let mut w = open("pilot.csv")?;
        writeln!(w, "t,node,d,d_tilde")?;
        for t in 0..self.pilot.len {
            for k in 0..n {
                let idx = t * n + k;
                writeln!(
                    w,
                    "{},{},{},{}",
                    t + 1,
                    k + 1,
                    self.pilot.d[idx],
                    self.pilot.d_tilde[idx]
                )?;
            }
        }
        w.flush()
    }
}

// Independent ChaCha streams, one per random source, all keyed by the run seed.
const STREAM_OMEGA: u64 = 0;
const STREAM_B: u64 = 1;
const STREAM_U: u64 = 2;
const STREAM_V: u64 = 3;
const STREAM_THETA: u64 = 4;
const STREAM_ETA: u64 = 5;
const STREAM_PILOT: u64 = 6;

fn substream(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn normal(rng: &mut ChaCha20Rng, std: f64) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    std * z
}

/// Draws one complete realization. Sampling happens in `f64` and is then
/// converted, so `f32` and `f64` datasets from one seed describe the same
/// realization.
pub fn generate_dataset<T: Real>(
    cfg: &SignalConfig,
    seed: u64,
) -> Result<SensorDataset<T>, ModelError> {
    cfg.validate()?;
    let (n, l, iters) = (cfg.n_nodes, cfg.l, cfg.n_iters);

    let mut rng = substream(seed, STREAM_OMEGA);
    let mut omega: Vec<f64> = (0..l).map(|_| normal(&mut rng, 1.0)).collect();
    if cfg.normalize_omega {
        let norm = omega.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            omega.iter_mut().for_each(|x| *x /= norm);
        }
    }

    let b: Vec<f64> = draw_coeffs_with(&mut substream(seed, STREAM_B), n, cfg.b_max)?;

    let mut rng_u = substream(seed, STREAM_U);
    let u: Vec<f64> = (0..iters * n * l)
        .map(|_| normal(&mut rng_u, cfg.sigma_u))
        .collect();
    let mut rng_v = substream(seed, STREAM_V);
    let v: Vec<f64> = (0..iters * n)
        .map(|_| normal(&mut rng_v, cfg.sigma_v))
        .collect();
    let mut rng_t = substream(seed, STREAM_THETA);
    let theta: Vec<f64> = (0..iters * n)
        .map(|_| normal(&mut rng_t, cfg.sigma_theta))
        .collect();
    let eta = (cfg.sigma_eta > 0.0).then(|| {
        let mut rng_e = substream(seed, STREAM_ETA);
        (0..iters * n * l)
            .map(|_| normal(&mut rng_e, cfg.sigma_eta))
            .collect::<Vec<f64>>()
    });

    let cast = |x: &[f64]| -> Vec<T> { x.iter().map(|&v| T::lit(v)).collect() };
    let omega_t = cast(&omega);
    let b_t = cast(&b);
    let u_t = cast(&u);
    let v_t = cast(&v);
    let theta_t = cast(&theta);

    // Both model relations are evaluated in T so they hold exactly as stored.
    let mut d = Vec::with_capacity(iters * n);
    let mut d_tilde = Vec::with_capacity(iters * n);
    for i in 0..iters {
        for k in 0..n {
            let idx = i * n + k;
            let reg = &u_t[idx * l..(idx + 1) * l];
            let dk = crate::scalar::dot(reg, &omega_t) + v_t[idx];
            d.push(dk);
            d_tilde.push(apply_nonlinearity(dk, b_t[k], theta_t[idx]));
        }
    }

    let mut rng_p = substream(seed, STREAM_PILOT);
    let mut pilot_d = Vec::with_capacity(cfg.pilot_len * n);
    let mut pilot_dt = Vec::with_capacity(cfg.pilot_len * n);
    let mut pilot_theta = Vec::with_capacity(cfg.pilot_len * n);
    let mut reg = vec![T::zero(); l];
    for _ in 0..cfg.pilot_len {
        for k in 0..n {
            for r in reg.iter_mut() {
                *r = T::lit(normal(&mut rng_p, cfg.sigma_u));
            }
            let vk = T::lit(normal(&mut rng_p, cfg.sigma_v));
            let th = T::lit(normal(&mut rng_p, cfg.sigma_theta));
            let dk = crate::scalar::dot(&reg, &omega_t) + vk;
            pilot_d.push(dk);
            pilot_dt.push(apply_nonlinearity(dk, b_t[k], th));
            pilot_theta.push(th);
        }
    }

    Ok(SensorDataset {
        truth: GroundTruth {
            omega_o: omega_t,
            b: b_t,
            sigma_theta: vec![T::lit(cfg.sigma_theta); n],
            sigma_v: vec![T::lit(cfg.sigma_v); n],
            sigma_eta: vec![T::lit(cfg.sigma_eta); n],
            sigma_u: T::lit(cfg.sigma_u),
        },
        n_iters: iters,
        u: u_t,
        d,
        d_tilde,
        v: v_t,
        theta: theta_t,
        eta: eta.map(|e| cast(&e)),
        pilot: PilotWindow {
            len: cfg.pilot_len,
            d: pilot_d,
            d_tilde: pilot_dt,
            theta: pilot_theta,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg() -> SignalConfig {
        SignalConfig {
            n_nodes: 3,
            l: 4,
            n_iters: 50,
            pilot_len: 10,
            ..SignalConfig::default()
        }
    }

    #[test]
    fn nonlinearity_examples() {
        assert_eq!(apply_nonlinearity(2.0, 0.0, 0.0), 2.0);
        assert!((apply_nonlinearity(2.0, -0.1, 0.0) - 1.6f64).abs() < 1e-15);
        assert!((apply_nonlinearity(1.0, 0.2, 0.0) - 1.2f64).abs() < 1e-15);
    }

    #[test]
    fn link_corruption_examples() {
        assert_eq!(
            corrupt_link_vector(&[1.0, -1.0], 0.0, &[0.0, 0.0]),
            vec![1.0, -1.0]
        );
        let v = corrupt_link_vector(&[2.0f64, 0.0], -0.1, &[0.0, 0.0]);
        assert!((v[0] - 1.6).abs() < 1e-15 && v[1] == 0.0);
        let x = 0.731f64;
        assert_eq!(
            corrupt_link_vector(&[x], -0.3, &[0.0])[0],
            apply_nonlinearity(x, -0.3, 0.0)
        );
        let mut out = [0.0; 2];
        corrupt_link_into(&[2.0, 0.0], -0.1, None, &mut out);
        assert_eq!(out.to_vec(), v);
    }

    #[test]
    fn coeffs_in_open_interval() {
        let b = draw_nonlinear_coeffs::<f64>(16, 0.4, 3).unwrap();
        assert_eq!(b.len(), 16);
        assert!(b.iter().all(|&x| x > -0.4 && x < 0.0));
        let tiny = draw_nonlinear_coeffs::<f64>(16, 1e-300, 3).unwrap();
        assert!(tiny.iter().all(|&x| x.abs() <= 1e-300));
        assert!(draw_nonlinear_coeffs::<f64>(4, 0.0, 3).is_err());
        assert!(draw_nonlinear_coeffs::<f64>(4, -1.0, 3).is_err());
    }

    #[test]
    fn coeff_mean_is_half_bmax() {
        let n = 1_000_000;
        let b = draw_nonlinear_coeffs::<f64>(n, 0.4, 11).unwrap();
        let mean = b.iter().sum::<f64>() / n as f64;
        // std of U(-0.4, 0) is 0.4 / sqrt(12)
        let se = 0.4 / 12f64.sqrt() / (n as f64).sqrt();
        assert!((mean + 0.2).abs() < 3.0 * se, "mean {mean}");
    }

    #[test]
    fn dataset_invariants_hold_exactly() {
        let ds = generate_dataset::<f64>(&small_cfg(), 5).unwrap();
        for i in 0..ds.n_iters {
            for k in 0..ds.n_nodes() {
                let idx = ds.idx(i, k);
                let d = crate::scalar::dot(ds.regressor(i, k), &ds.truth.omega_o) + ds.v[idx];
                assert_eq!(d, ds.d[idx]);
                assert_eq!(
                    ds.d_tilde[idx],
                    apply_nonlinearity(d, ds.truth.b[k], ds.theta[idx])
                );
            }
        }
        assert!((ds.truth.omega_norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn noiseless_linear_case() {
        let cfg = SignalConfig {
            sigma_theta: 0.0,
            b_max: 1e-300,
            ..small_cfg()
        };
        let ds = generate_dataset::<f64>(&cfg, 1).unwrap();
        for idx in 0..ds.d.len() {
            assert_eq!(ds.d[idx], ds.d_tilde[idx]);
            let reg = &ds.u[idx * 4..idx * 4 + 4];
            assert_eq!(ds.d[idx], crate::scalar::dot(reg, &ds.truth.omega_o));
        }
    }

    #[test]
    fn default_shapes_and_determinism() {
        let cfg = SignalConfig {
            n_iters: 30,
            ..SignalConfig::default()
        };
        let a = generate_dataset::<f64>(&cfg, 9).unwrap();
        let b = generate_dataset::<f64>(&cfg, 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.u.len(), 30 * 16 * 20);
        assert_eq!(a.d_tilde.len(), 30 * 16);
        assert_eq!(a.truth.sigma_theta[0], 0.045);
        assert!(a.eta.is_none());
        let c = generate_dataset::<f64>(&cfg, 10).unwrap();
        assert_ne!(a.u, c.u);
    }

    #[test]
    fn f32_matches_f64_realization() {
        let a = generate_dataset::<f64>(&small_cfg(), 4).unwrap();
        let b = generate_dataset::<f32>(&small_cfg(), 4).unwrap();
        for (x, y) in a.u.iter().zip(&b.u) {
            assert_eq!(*x as f32, *y);
        }
    }

    #[test]
    fn rejects_zero_dimensions() {
        for cfg in [
            SignalConfig {
                l: 0,
                ..small_cfg()
            },
            SignalConfig {
                n_nodes: 0,
                ..small_cfg()
            },
            SignalConfig {
                n_iters: 0,
                ..small_cfg()
            },
            SignalConfig {
                sigma_theta: -1.0,
                ..small_cfg()
            },
        ] {
            assert!(generate_dataset::<f64>(&cfg, 0).is_err());
        }
    }

    #[test]
    fn noise_stds_match_configuration() {
        let cfg = SignalConfig {
            n_nodes: 10,
            l: 2,
            n_iters: 10_000,
            sigma_v: 0.3,
            sigma_theta: 0.045,
            sigma_eta: 0.2,
            sigma_u: 0.7,
            pilot_len: 0,
            ..SignalConfig::default()
        };
        let ds = generate_dataset::<f64>(&cfg, 77).unwrap();
        let check = |xs: &[f64], std: f64| {
            let n = xs.len() as f64;
            let var = xs.iter().map(|x| x * x).sum::<f64>() / n;
            // var of x^2 for a Gaussian is 2 std^4
            let se = (2.0f64).sqrt() * std * std / n.sqrt();
            assert!(
                (var - std * std).abs() < 3.0 * se,
                "var {var} vs {}",
                std * std
            );
        };
        check(&ds.v, 0.3);
        check(&ds.theta, 0.045);
        check(ds.eta.as_ref().unwrap(), 0.2);
        check(&ds.u, 0.7);
    }

    #[test]
    fn recoefficient_keeps_noise() {
        let ds = generate_dataset::<f64>(&small_cfg(), 2).unwrap();
        let zero = ds.with_coeffs(&[0.0; 3]);
        for idx in 0..ds.d.len() {
            assert_eq!(zero.d_tilde[idx], ds.d[idx] + ds.theta[idx]);
        }
    }

    #[test]
    fn csv_bundle_written() {
        let dir = std::env::temp_dir().join(format!("sonec-export-{}", std::process::id()));
        let ds = generate_dataset::<f64>(&small_cfg(), 2).unwrap();
        ds.export_csv(&dir).unwrap();
        let d = fs::read_to_string(dir.join("d_tilde.csv")).unwrap();
        assert_eq!(d.lines().count(), 1 + 50 * 3);
        let first: f64 = d
            .lines()
            .nth(1)
            .unwrap()
            .split(',')
            .nth(2)
            .unwrap()
            .parse()
            .unwrap();
        assert_eq!(first, ds.d_tilde[0]);
        fs::remove_dir_all(&dir).unwrap();
    }
}

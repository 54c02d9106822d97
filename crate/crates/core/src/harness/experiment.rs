use rayon::prelude::*;

use super::config::{AlgorithmId, ConfigError, ExperimentConfig};
use crate::algorithms::{
    run_dlms, run_sonec_dlms, LinkSetting, Measurements, RunOptions, SonecVariant, StepSizes,
};
use crate::analysis::{c1_max, error_bound, BoundInputs};
use crate::crb::{assemble_fim, crb_from_fim, ObservationModel};
use crate::error::ModelError;
use crate::signal::generate_dataset;
use crate::topology::{
    build_random_topology, uniform_weights, CombinationMatrices, NetworkTopology,
};

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("worker pool: {0}")]
    ThreadPool(String),
    #[error("no run produced a usable result")]
    AllDiverged,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of run `r`: `splitmix64(splitmix64(master) ^ r)`.
pub fn run_seed(master: u64, r: u64) -> u64 {
    splitmix64(splitmix64(master) ^ r)
}

/// Seed of the network shared by all runs; never equal to a run seed for
/// any realistic run count.
pub fn topology_seed(master: u64) -> u64 {
    run_seed(master, u64::MAX)
}

/// Averaged curves in dB, one entry per iteration, plus constant lines.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MsdTrace {
    pub n_iters: usize,
    pub dlms_nl: Option<Vec<f64>>,
    pub dlms_clean: Option<Vec<f64>>,
    pub sonec_fd: Option<Vec<f64>>,
    pub sonec_sd: Option<Vec<f64>>,
    pub sonec_comb: Option<Vec<f64>>,
    pub b_fd: Option<Vec<f64>>,
    pub b_sd: Option<Vec<f64>>,
    pub crb_omega_db: Option<f64>,
    pub crb_b_db: Option<f64>,
    pub upper_bound_db: Option<f64>,
}

impl MsdTrace {
    pub fn msd(&self, alg: AlgorithmId) -> Option<&[f64]> {
        match alg {
            AlgorithmId::DlmsNl => self.dlms_nl.as_deref(),
            AlgorithmId::DlmsClean => self.dlms_clean.as_deref(),
            AlgorithmId::SonecFd => self.sonec_fd.as_deref(),
            AlgorithmId::SonecSd => self.sonec_sd.as_deref(),
            AlgorithmId::SonecCombOnly => self.sonec_comb.as_deref(),
        }
    }

    /// Mean in dB over the last `fraction` of iterations, averaged in the
    /// linear domain.
    pub fn steady_state_db(&self, alg: AlgorithmId, fraction: f64) -> Option<f64> {
        let c = self.msd(alg)?;
        let tail = ((c.len() as f64 * fraction).ceil() as usize).clamp(1, c.len());
        let lin: f64 = c[c.len() - tail..]
            .iter()
            .map(|x| 10f64.powf(x / 10.0))
            .sum::<f64>()
            / tail as f64;
        Some(10.0 * lin.log10())
    }
}

/// A run excluded from the averages, with what is needed to replay it.
#[derive(Debug, Clone, PartialEq)]
pub struct DivergentRun {
    pub run: usize,
    pub seed: u64,
    pub algorithm: AlgorithmId,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub trace: MsdTrace,
    pub divergent: Vec<DivergentRun>,
    /// Runs that contributed to each algorithm's average.
    pub completed: Vec<(AlgorithmId, usize)>,
    /// Runs whose information matrix could not be inverted.
    pub crb_failures: usize,
    pub topology: NetworkTopology,
}

impl ExperimentResult {
    /// Selected algorithms without a single completed run.
    pub fn all_divergent(&self) -> Vec<AlgorithmId> {
        self.completed
            .iter()
            .filter(|(_, c)| *c == 0)
            .map(|(a, _)| *a)
            .collect()
    }
}

/// Per-iteration MSD and, for the estimating variants, the b̂ MSD.
type Curve = Result<(Vec<f64>, Option<Vec<f64>>), String>;

struct RunOutput {
    curves: Vec<(AlgorithmId, Curve)>,
    crb: Option<(f64, f64)>,
    bound: f64,
}

fn one_run(
    cfg: &ExperimentConfig,
    topology: &NetworkTopology,
    weights: &CombinationMatrices<f64>,
    seed: u64,
) -> Result<RunOutput, ModelError> {
    let ds = generate_dataset::<f64>(&cfg.signal(), seed)?;
    let link = if cfg.link_nonlinearity {
        LinkSetting::Nonlinear
    } else {
        LinkSetting::Clean
    };
    let steps = StepSizes::new(cfg.mu, cfg.mu_b)?;
    let opts = RunOptions::default();
    let curves = cfg
        .algorithms
        .iter()
        .map(|&alg| {
            let out = match alg {
                AlgorithmId::DlmsNl => run_dlms(
                    &ds,
                    topology,
                    weights,
                    cfg.mu,
                    Measurements::Nonlinear,
                    link,
                    opts,
                )
                .map_err(|e| e.to_string()),
                AlgorithmId::DlmsClean => run_dlms(
                    &ds,
                    topology,
                    weights,
                    cfg.mu,
                    Measurements::Linear,
                    LinkSetting::Clean,
                    opts,
                )
                .map_err(|e| e.to_string()),
                AlgorithmId::SonecFd | AlgorithmId::SonecSd | AlgorithmId::SonecCombOnly => {
                    let variant = match alg {
                        AlgorithmId::SonecFd => SonecVariant::FullyDistributed,
                        AlgorithmId::SonecSd => SonecVariant::SemiDistributed,
                        _ => SonecVariant::CombinationOnly,
                    };
                    run_sonec_dlms(&ds, topology, weights, steps, variant, link, opts)
                        .map_err(|e| e.to_string())
                }
            };
            (alg, out.map(|t| (t.msd, t.b_msd)))
        })
        .collect();
    let crb = if cfg.sigma_theta > 0.0 {
        let model = ObservationModel::from_dataset(&ds, cfg.n_iters)?;
        crb_from_fim(&assemble_fim(&model))
            .ok()
            .map(|c| (c.trace_omega, c.trace_b))
    } else {
        None
    };
    let c1 = c1_max(&BoundInputs {
        mu: cfg.mu,
        b_max: cfg.b_max,
        l: cfg.l,
        omega_norm: ds.truth.omega_norm(),
    });
    let bound = (0..topology.n_nodes())
        .map(|k| error_bound(c1, &weights.a.column(k)))
        .fold(0.0, f64::max);
    Ok(RunOutput { curves, crb, bound })
}

/// The network shared by every run of `cfg`, with uniform weights.
pub fn build_network(
    cfg: &ExperimentConfig,
) -> Result<(NetworkTopology, CombinationMatrices<f64>), ModelError> {
    let topology = build_random_topology(
        cfg.n_nodes,
        cfg.topology_degree,
        topology_seed(cfg.master_seed),
    )?;
    let weights = uniform_weights(&topology);
    Ok((topology, weights))
}

fn worker_pool(threads: Option<usize>) -> Result<rayon::ThreadPool, ExperimentError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        builder = builder.num_threads(t);
    }
    builder
        .build()
        .map_err(|e| ExperimentError::ThreadPool(e.to_string()))
}

/// Cramer-Rao bounds averaged over runs in the variance domain.
#[derive(Debug, Clone, PartialEq)]
pub struct CrbSummary {
    pub omega_db: f64,
    pub b_db: f64,
    /// Runs whose information matrix was invertible.
    pub runs: usize,
    pub failures: usize,
}

/// CRB of every run's realization over all `n_iters` samples, without
/// running any estimator.
pub fn average_crb(
    cfg: &ExperimentConfig,
    threads: Option<usize>,
) -> Result<CrbSummary, ExperimentError> {
    cfg.validate()?;
    if !(cfg.sigma_theta > 0.0) {
        return Err(ConfigError::Range {
            key: "sigma_theta",
            reason: "the bound needs positive measurement noise".into(),
        }
        .into());
    }
    let pool = worker_pool(threads)?;
    let traces: Vec<Option<(f64, f64)>> = pool.install(|| {
        (0..cfg.n_runs)
            .into_par_iter()
            .map(|r| -> Result<_, ModelError> {
                let ds =
                    generate_dataset::<f64>(&cfg.signal(), run_seed(cfg.master_seed, r as u64))?;
                let model = ObservationModel::from_dataset(&ds, cfg.n_iters)?;
                Ok(crb_from_fim(&assemble_fim(&model))
                    .ok()
                    .map(|c| (c.trace_omega, c.trace_b)))
            })
            .collect::<Result<Vec<_>, _>>()
    })?;
    let ok: Vec<(f64, f64)> = traces.iter().flatten().copied().collect();
    if ok.is_empty() {
        return Err(ExperimentError::AllDiverged);
    }
    let m = ok.len() as f64;
    Ok(CrbSummary {
        omega_db: 10.0 * (ok.iter().map(|c| c.0).sum::<f64>() / m).log10(),
        b_db: 10.0 * (ok.iter().map(|c| c.1).sum::<f64>() / m).log10(),
        runs: ok.len(),
        failures: traces.len() - ok.len(),
    })
}

fn to_db(sum: &[f64], count: usize) -> Vec<f64> {
    sum.iter()
        .map(|s| 10.0 * (s / count as f64).log10())
        .collect()
}

/// Runs every selected algorithm on `n_runs` paired realizations and
/// averages squared deviations over runs and nodes. `threads` sizes the
/// worker pool; results do not depend on it.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    threads: Option<usize>,
) -> Result<ExperimentResult, ExperimentError> {
    cfg.validate()?;
    let (topology, weights) = build_network(cfg)?;

    let pool = worker_pool(threads)?;
    let outputs: Vec<RunOutput> = pool.install(|| {
        (0..cfg.n_runs)
            .into_par_iter()
            .map(|r| {
                one_run(
                    cfg,
                    &topology,
                    &weights,
                    run_seed(cfg.master_seed, r as u64),
                )
            })
            .collect::<Result<Vec<_>, _>>()
    })?;

    let n = cfg.n_iters;
    let mut trace = MsdTrace {
        n_iters: n,
        ..MsdTrace::default()
    };
    let mut divergent = Vec::new();
    let mut completed = Vec::new();
    for (slot, &alg) in cfg.algorithms.iter().enumerate() {
        let mut sum = vec![0.0; n];
        let mut b_sum = vec![0.0; n];
        let mut count = 0usize;
        let mut has_b = false;
        for (r, out) in outputs.iter().enumerate() {
            match &out.curves[slot].1 {
                Ok((msd, b_msd)) => {
                    sum.iter_mut().zip(msd).for_each(|(s, x)| *s += x);
                    if let Some(b) = b_msd {
                        has_b = true;
                        b_sum.iter_mut().zip(b).for_each(|(s, x)| *s += x);
                    }
                    count += 1;
                }
                Err(reason) => divergent.push(DivergentRun {
                    run: r,
                    seed: run_seed(cfg.master_seed, r as u64),
                    algorithm: alg,
                    reason: reason.clone(),
                }),
            }
        }
        completed.push((alg, count));
        if count == 0 {
            continue;
        }
        let curve = Some(to_db(&sum, count));
        let b_curve = has_b.then(|| to_db(&b_sum, count));
        match alg {
            AlgorithmId::DlmsNl => trace.dlms_nl = curve,
            AlgorithmId::DlmsClean => trace.dlms_clean = curve,
            AlgorithmId::SonecFd => {
                trace.sonec_fd = curve;
                trace.b_fd = b_curve;
            }
            AlgorithmId::SonecSd => {
                trace.sonec_sd = curve;
                trace.b_sd = b_curve;
            }
            AlgorithmId::SonecCombOnly => trace.sonec_comb = curve,
        }
    }
    divergent.sort_by_key(|d| (d.run, d.algorithm));

    let crbs: Vec<(f64, f64)> = outputs.iter().filter_map(|o| o.crb).collect();
    let crb_failures = if cfg.sigma_theta > 0.0 {
        outputs.len() - crbs.len()
    } else {
        0
    };
    if !crbs.is_empty() {
        let m = crbs.len() as f64;
        trace.crb_omega_db = Some(10.0 * (crbs.iter().map(|c| c.0).sum::<f64>() / m).log10());
        trace.crb_b_db = Some(10.0 * (crbs.iter().map(|c| c.1).sum::<f64>() / m).log10());
    }
    let bound = outputs.iter().map(|o| o.bound).sum::<f64>() / outputs.len() as f64;
    trace.upper_bound_db = Some(10.0 * bound.log10());

    Ok(ExperimentResult {
        trace,
        divergent,
        completed,
        crb_failures,
        topology,
    })
}

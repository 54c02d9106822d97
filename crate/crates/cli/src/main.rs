use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use sonec::analysis::{
    appendix_a, appendix_a_monte_carlo, appendix_f, appendix_f_monte_carlo, appendix_h,
    appendix_h_monte_carlo, appendix_t, appendix_t_monte_carlo, c1_max, error_bound,
    mean_recursion_general, mean_recursion_special, verify_g_zero, BoundInputs, GZeroConfig,
    GeneralRecursionInputs, MomentEstimate,
};
use sonec::harness::{
    average_crb, build_network, format_g, parse_config, run_experiment, run_seed, write_csv,
    ExperimentConfig, ExperimentError,
};
use sonec::{generate_dataset, Dataset, Weights};

#[derive(Parser)]
#[command(
    name = "sonec",
    version,
    about = "Diffusion LMS with second-order sensor nonlinearity"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the Monte Carlo experiment and write the averaged MSD curves.
    Simulate(Common),
    /// Cramer-Rao bounds averaged over the configured realizations.
    Crb(Common),
    /// Evaluate the nonlinearity error bound.
    Bound(Common),
    /// Iterate the mean-error recursions for the configured network.
    Predict(Common),
    /// Compare the Gaussian moment closed forms with sampling.
    ValidateMoments {
        #[command(flatten)]
        common: Common,
        /// Monte Carlo samples per check.
        #[arg(long, default_value_t = 1_000_000)]
        samples: usize,
    },
}

#[derive(Args, Clone)]
struct Common {
    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides `master_seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `n_runs`.
    #[arg(long)]
    runs: Option<usize>,
    /// Output file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

enum Failure {
    Config(String),
    Diverged(String),
    Io(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 1,
            Failure::Diverged(_) => 2,
            Failure::Io(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Diverged(m) | Failure::Io(m) => m,
        }
    }
}

impl From<ExperimentError> for Failure {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::AllDiverged => Failure::Diverged(e.to_string()),
            other => Failure::Config(other.to_string()),
        }
    }
}

fn io_failure(path: Option<&Path>, e: io::Error) -> Failure {
    match path {
        Some(p) => Failure::Io(format!("{}: {e}", p.display())),
        None => Failure::Io(e.to_string()),
    }
}

fn load_config(common: &Common) -> Result<ExperimentConfig, Failure> {
    let text = match &common.config {
        Some(p) => fs::read_to_string(p).map_err(|e| io_failure(Some(p), e))?,
        None => String::new(),
    };
    let mut cfg = parse_config(&text).map_err(|e| Failure::Config(e.to_string()))?;
    if let Some(seed) = common.seed {
        cfg.master_seed = seed;
    }
    if let Some(runs) = common.runs {
        cfg.n_runs = runs;
    }
    cfg.validate().map_err(|e| Failure::Config(e.to_string()))?;
    Ok(cfg)
}

fn with_output(
    common: &Common,
    body: impl FnOnce(&mut dyn Write) -> io::Result<()>,
) -> Result<(), Failure> {
    match &common.out {
        Some(p) => {
            let file = fs::File::create(p).map_err(|e| io_failure(Some(p), e))?;
            let mut w = BufWriter::new(file);
            body(&mut w)
                .and_then(|_| w.flush())
                .map_err(|e| io_failure(Some(p), e))
        }
        None => {
            let stdout = io::stdout();
            let mut w = stdout.lock();
            body(&mut w).map_err(|e| io_failure(None, e))
        }
    }
}

fn simulate(common: &Common) -> Result<(), Failure> {
    let cfg = load_config(common)?;
    let res = run_experiment(&cfg, common.threads)?;
    with_output(common, |w| write_csv(&res.trace, w))?;
    for (alg, done) in &res.completed {
        let steady = res
            .trace
            .steady_state_db(*alg, 0.1)
            .map(format_g)
            .unwrap_or_else(|| "-".into());
        eprintln!(
            "{alg}: {done}/{} runs, steady state {steady} dB",
            cfg.n_runs
        );
    }
    for d in &res.divergent {
        eprintln!(
            "diverged: run {} (seed {}) {}: {}",
            d.run, d.seed, d.algorithm, d.reason
        );
    }
    let lost = res.all_divergent();
    if !lost.is_empty() {
        let names: Vec<&str> = lost.iter().map(|a| a.name()).collect();
        return Err(Failure::Diverged(format!(
            "every run diverged for {}",
            names.join(", ")
        )));
    }
    Ok(())
}

fn crb(common: &Common) -> Result<(), Failure> {
    let cfg = load_config(common)?;
    let s = average_crb(&cfg, common.threads)?;
    with_output(common, |w| {
        writeln!(w, "crb_omega_db,crb_b_db,runs,failures")?;
        writeln!(
            w,
            "{},{},{},{}",
            format_g(s.omega_db),
            format_g(s.b_db),
            s.runs,
            s.failures
        )
    })
}

fn first_realization(cfg: &ExperimentConfig) -> Result<Dataset, Failure> {
    generate_dataset::<f64>(&cfg.signal(), run_seed(cfg.master_seed, 0))
        .map_err(|e| Failure::Config(e.to_string()))
}

fn network(cfg: &ExperimentConfig) -> Result<Weights, Failure> {
    build_network(cfg)
        .map(|(_, w)| w)
        .map_err(|e| Failure::Config(e.to_string()))
}

fn bound_db(cfg: &ExperimentConfig, omega_norm: f64, weights: &Weights) -> (f64, f64) {
    let c1 = c1_max(&BoundInputs {
        mu: cfg.mu,
        b_max: cfg.b_max,
        l: cfg.l,
        omega_norm,
    });
    let bound = (0..weights.n_nodes())
        .map(|k| error_bound(c1, &weights.a.column(k)))
        .fold(0.0, f64::max);
    (c1, 10.0 * bound.log10())
}

fn bound(common: &Common) -> Result<(), Failure> {
    let cfg = load_config(common)?;
    let ds = first_realization(&cfg)?;
    let weights = network(&cfg)?;
    let norm = ds.truth.omega_norm();
    let (c1, db) = bound_db(&cfg, norm, &weights);
    with_output(common, |w| {
        writeln!(w, "mu,b_max,L,omega_norm,c1_max,upper_bound_db")?;
        writeln!(
            w,
            "{},{},{},{},{},{}",
            format_g(cfg.mu),
            format_g(cfg.b_max),
            cfg.l,
            format_g(norm),
            format_g(c1),
            format_g(db)
        )
    })
}

fn predict(common: &Common) -> Result<(), Failure> {
    let cfg = load_config(common)?;
    let ds = first_realization(&cfg)?;
    let weights = network(&cfg)?;
    let initial: Vec<Vec<f64>> = (0..cfg.n_nodes)
        .map(|_| ds.truth.omega_o.iter().map(|x| -x).collect())
        .collect();
    let s2 = cfg.sigma_u * cfg.sigma_u;
    let special = mean_recursion_special(&weights, cfg.mu, s2, &initial, cfg.n_iters)
        .map_err(|e| Failure::Config(e.to_string()))?;
    let general = mean_recursion_general(
        &weights,
        &GeneralRecursionInputs {
            mu: cfg.mu,
            sigma_u2: s2,
            sigma_v2: cfg.sigma_v * cfg.sigma_v,
            b: ds.truth.b.clone(),
            omega_o: ds.truth.omega_o.clone(),
        },
        &initial,
        cfg.n_iters,
    )
    .map_err(|e| Failure::Config(e.to_string()))?;
    eprintln!(
        "spectral radius {}{}",
        format_g(special.spectral_radius),
        if special.divergent {
            " (divergent)"
        } else {
            ""
        }
    );
    let (_, db) = bound_db(&cfg, ds.truth.omega_norm(), &weights);
    with_output(common, |w| general.write_csv(w, Some(db)))
}

fn report(
    w: &mut dyn Write,
    name: &str,
    est: &MomentEstimate,
    reference: &[f64],
    k: f64,
) -> io::Result<bool> {
    let z = est.z_scores(reference);
    let worst = z.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let ok = worst <= k;
    writeln!(
        w,
        "{name},{},{},{}",
        est.samples,
        format_g(worst),
        if ok { "pass" } else { "fail" }
    )?;
    Ok(ok)
}

fn validate_moments(common: &Common, samples: usize) -> Result<(), Failure> {
    let cfg = load_config(common)?;
    let seed = cfg.master_seed;
    let su = cfg.sigma_u;
    let s2 = su * su;
    let errors = vec![vec![0.4, -0.2, 0.1, 0.3], vec![-0.3, 0.5, 0.2, -0.1]];
    let refs: Vec<&[f64]> = errors.iter().map(|e| e.as_slice()).collect();
    let c = [0.6, 0.4];
    let omega = [0.5, -0.5, 0.25, 0.1];
    let mu = cfg.mu;
    let w_true = [0.3, 0.2];
    let sv = 1.0;

    with_output(common, |w| {
        writeln!(w, "check,samples,max_abs_z,result")?;
        report(
            w,
            "f",
            &appendix_f_monte_carlo(&c, su, &errors, samples, seed),
            &appendix_f(&c, s2, &refs),
            3.0,
        )?;
        report(
            w,
            "t",
            &appendix_t_monte_carlo(&c, su, &errors, samples, seed ^ 1),
            &appendix_t(&c, s2, &refs),
            3.0,
        )?;
        let f = appendix_f(&c, s2, &refs);
        let t = appendix_t(&c, s2, &refs);
        report(
            w,
            "h",
            &appendix_h_monte_carlo(&omega, mu, &c, su, &errors, samples, seed ^ 2),
            &appendix_h(&omega, mu, &f, &t),
            3.0,
        )?;
        let a_mc = appendix_a_monte_carlo(&w_true, su, sv, samples, seed ^ 3);
        let a = appendix_a(&w_true, s2, sv * sv);
        report(w, "r_exact", &a_mc, &a.exact(), 3.0)?;
        report(w, "r_published", &a_mc, &a.as_published(), 3.0)?;
        let g = verify_g_zero(&GZeroConfig::symmetric(4), samples, seed ^ 4);
        writeln!(
            w,
            "g_zero,{},{},{}",
            g.estimate.samples,
            format_g(g.z_scores.iter().fold(0.0f64, |m, x| m.max(x.abs()))),
            if g.passed() { "pass" } else { "fail" }
        )?;
        let biased = GZeroConfig {
            regressor_mean: 0.5,
            ..GZeroConfig::symmetric(4)
        };
        let g = verify_g_zero(&biased, samples, seed ^ 5);
        writeln!(
            w,
            "g_zero_biased_regressors,{},{},{}",
            g.estimate.samples,
            format_g(g.z_scores.iter().fold(0.0f64, |m, x| m.max(x.abs()))),
            if g.passed() { "pass" } else { "fail" }
        )
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(c) => simulate(c),
        Command::Crb(c) => crb(c),
        Command::Bound(c) => bound(c),
        Command::Predict(c) => predict(c),
        Command::ValidateMoments { common, samples } => validate_moments(common, *samples),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}

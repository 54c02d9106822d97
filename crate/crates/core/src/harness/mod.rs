//! Monte Carlo experiments: configuration, paired runs, aggregation and CSV.

mod config;
mod experiment;
mod output;

pub use config::{parse_config, AlgorithmId, ConfigError, ExperimentConfig};
pub use experiment::{
    average_crb, build_network, run_experiment, run_seed, topology_seed, CrbSummary, DivergentRun,
    ExperimentError, ExperimentResult, MsdTrace,
};
pub use output::{format_g, write_csv, CSV_HEADER};

/// `10 log10` of the mean over runs and nodes of `‖ω_k − ω_o‖²`.
/// `estimates[run][node]` holds an estimate of `truth`.
pub fn msd_db(estimates: &[Vec<Vec<f64>>], truth: &[f64]) -> Result<f64, ExperimentError> {
    let mut total = 0.0;
    let mut count = 0usize;
    for run in estimates {
        for w in run {
            total += crate::scalar::dist_sq(w, truth);
            count += 1;
        }
    }
    if count == 0 {
        return Err(ExperimentError::AllDiverged);
    }
    Ok(10.0 * (total / count as f64).log10())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn msd_examples() {
        let truth = [0.3, -0.2];
        let off = |d: f64| vec![truth[0] + d, truth[1]];
        assert_eq!(msd_db(&[vec![off(1.0), off(1.0)]], &truth).unwrap(), 0.0);
        let r = msd_db(&[vec![off(0.1)], vec![off(-0.1)]], &truth).unwrap();
        assert!((r + 20.0).abs() < 1e-9);
        let r = msd_db(&[vec![off(1.0), off(0.1)]], &truth).unwrap();
        assert!((r - 10.0 * 0.505f64.log10()).abs() < 1e-12);
        assert!((r + 2.966).abs() < 2e-3);
        assert!(msd_db(&[], &truth).is_err());
    }
}

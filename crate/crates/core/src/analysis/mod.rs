//! Error bound, mean-convergence recursions and the Gaussian moments they use.

mod bound;
mod mean;
mod moments;

pub use bound::{c1_max, error_bound, paired_bound_check, BoundCheck, BoundInputs};
pub use mean::{
    dlms_mean_error_monte_carlo, gamma_coefficients, mean_recursion_general,
    mean_recursion_special, special_case_coefficients, GeneralRecursionInputs, MeanErrorExperiment,
    MeanTrajectory, RecursionError,
};
pub use moments::{
    appendix_a, appendix_a_monte_carlo, appendix_f, appendix_f_monte_carlo, appendix_h,
    appendix_h_monte_carlo, appendix_r, appendix_r_monte_carlo, appendix_t, appendix_t_monte_carlo,
    verify_g_zero, ATerms, GZeroConfig, GZeroReport, MomentEstimate,
};

pub use crate::linalg::spectral_radius;

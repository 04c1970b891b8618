//! Joint estimation of the nominal coefficients, latent weights, and noise
//! variance by EM over streaming sufficient statistics.

mod em;
mod stats;

pub use em::{
    e_step, em_fit, em_refit, m_step, marginal_log_likelihood, recursive_update, EmOptions,
    FitReport, ModelState,
};
pub use stats::SufficientStats;

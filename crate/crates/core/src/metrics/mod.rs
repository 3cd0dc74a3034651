//! Equilibrium oracle and performance measures.

pub mod oracle;
pub mod trace;

pub use oracle::{kkt_residual, solve_sgne, OracleParams, SgneSolution};
pub use trace::{
    consensus_diameter, cv_increment, delta_f_sup_estimate, mean_distance, phi_variation, regret_increment,
    sublinearity_fit, MetricsTrace, PhiSplit, RoundRecord, CSV_HEADER,
};

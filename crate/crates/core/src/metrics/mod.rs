//! Error, entropy, confidence-interval, slope, energy and correlate metrics.

mod correlates;
mod energy;
mod entropy;
mod errors;
mod stats;
mod table;

pub use correlates::{error_correlates, topk_table, CorrelateRecord, TopKRow};
pub use energy::{discrete_energy, energy_deviation, ic_energy, ENERGY_THRESHOLD, IC_QUADRATURE_INTERVALS};
pub use entropy::{
    mean_entropy, DistributionRecord, EntropyValue, LogBase, TokenDistribution, MASS_TOLERANCE, REMAINDER_TOLERANCE,
};
pub use errors::{maxae, maxae_per_step, rmse, rmse_per_step};
pub use stats::{
    aggregate_ci, aggregate_preferring_log, incomplete_beta, loglog_slope, t_cdf, t_quantile, Aggregate, LineFit, Scale,
};
pub use table::{read_metrics_csv, write_metrics_csv, MetricRow};

//! Posterior inference over the network by collapsed Gibbs sampling.

pub mod chain_io;
pub mod gibbs;
pub mod niw;
pub mod polya_gamma;
pub mod streams;

pub use chain_io::{read_chain, write_chain, ChainMeta};
pub use gibbs::{
    collapsed_log_odds, edge_log_odds, kappa_products, resample_auxiliary,
    resample_connections_row, run_gibbs, run_gibbs_from, AuxiliaryState, GibbsSampler,
    PosteriorChain, RowInputs, RowState, SamplerConfig, ScanOrder,
};
pub use niw::{resample_niw_hyperparameters, GaussianPrior, HyperState};
pub use polya_gamma::{pg_mean, sample_pg, sample_polya_gamma, PgMethod};

//! Private and non-private optimizers over a [`ConvexDomain`](crate::geometry::ConvexDomain).

mod localization;
mod pnsgd;
mod record;
mod strongly_convex;

pub use localization::{
    doubly_exponential_phases, phased_erm, phased_erm_step, phased_sgd, phased_sgd_sc, phased_sgd_sc_step,
    phased_sgd_step, InnerSolver, PhasedErmConfig, PhasedSgdConfig, INNER_CAP_CONSTANT, PHASED_SC_CONSTANT,
};
pub use pnsgd::{pnsgd, psgd, snowball_sgd, SnowballVariant};
pub use record::{Guarantee, PhaseEntry, RunRecord, MAX_SERIALIZED_DIM};
pub use strongly_convex::{reduction_blocks, sc_reduction, sc_snowball, sc_step, sc_weighted_sgd, DpScoAlgorithm};

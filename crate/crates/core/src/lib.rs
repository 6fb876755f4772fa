//! Numerical laboratory for Delone sets on discretized tori: greedy
//! generation and control certification, a Chabauty-type metric on closed
//! sets, Lipschitz partitions of unity, Gram-orthogonalized isometries
//! into site spaces, Voronoi cell decompositions, compression maps between
//! finite-propagation site operators and grid operators, and continuous
//! fields of operator norms along refinement schedules.

pub mod cells;
pub mod chabauty;
pub mod config;
pub mod delone;
pub mod error;
pub mod field;
pub mod gram;
pub mod io;
pub mod linalg;
pub mod pou;
pub mod report;
pub mod roe;
pub mod space;
pub mod suite;

pub use cells::{cell_dims, cell_projection, precedes, preceding_sites, verify_cells, voronoi_cells, CellDims, CellPartition, CellProjection, CellReport};
pub use chabauty::{epsilon_net, rho, rho_sequence, EpsilonNet, RhoResult};
pub use delone::{greedy_delone, ControlFunction, DeloneSet};
pub use error::{Error, Result};
pub use field::{field_axioms_check, norm_profile, section, FieldAxioms, FieldSection, IdealFamily, NormProfile};
pub use gram::{gram, isometry, project, strong_convergence, GramData, Isometry};
pub use io::{load_cell_assign, load_delone, load_operator, load_pou, load_space, save_cells, save_delone, save_grid_operator, save_pou, save_site_operator, save_space, LoadedOperator, SpaceConfig};
pub use pou::{build_pou, verify_pou, PartitionOfUnity, PartitionReport};
pub use roe::{
    adapted_basis, alpha, alpha_beta_defect, beta, build_stages, eps_propagation,
    multiplicativity_defect, norm_convergence, random_banded, random_banded_grid, truncate_k,
    AdaptedBasis, BlockRank, FinitePropOperator, GridOperator, NormConvergence, StageData,
};
pub use config::{ExperimentConfig, Seeds, Tolerances};
pub use report::{Assertion, Outcome, Report, Table};
pub use space::{GridFunction, Point, TorusSpace};
pub use suite::run_suite;

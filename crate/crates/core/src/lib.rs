//! Solver library for a heat equation and a wave equation coupled across a
//! common interface, integrated with independent (multirate) time-step sizes
//! per subdomain.
//!
//! The pieces fit together as follows:
//!
//! * [`mesh`] and [`operators`] build the fixed spatial discretization
//!   (bilinear elements on structured quads) and all time-independent
//!   matrices, including the Nitsche interface blocks.
//! * [`timegrid`] holds the two-level time partition: a macro mesh shared by
//!   both subdomains plus per-subdomain micro meshes with a patch structure,
//!   and implements nested refinement with patch repair and macro splitting.
//! * [`forms`] evaluates the semi-discrete variational machinery: cross-mesh
//!   interpolation, source integrals and the per-macro-interval micro sweeps.
//! * [`primal`] marches the coupled problem forward, resolving the interface
//!   coupling by relaxation, shooting (matrix-free Newton-Krylov) or a
//!   monolithic direct solve.
//! * [`adjoint`] evaluates goal functionals and solves the backward-in-time
//!   adjoint problem on the same partition.
//! * [`estimator`] computes localized temporal error indicators from primal
//!   and adjoint residuals with reconstruction-based weights.
//! * [`adapt`] drives the solve - estimate - mark - refine loop.

pub mod adapt;
pub mod adjoint;
pub mod error;
pub mod estimator;
pub mod forms;
pub mod linalg;
pub mod mesh;
pub mod operators;
pub mod params;
pub mod primal;
pub mod timegrid;

pub use adapt::{adaptive_loop, mark, AdaptiveConfig, AdaptiveRecord};
pub use adjoint::{solve_adjoint, AdjointCoupling, AdjointTrajectory, GoalFunctional, GoalKind};
pub use error::{ConfigError, MeshError, PartitionError, SolveError};
pub use estimator::{
    effectivity, extrapolate_reference, indicator_average, total_estimate, ErrorBreakdown,
    Extrapolation,
};
pub use forms::{FieldPair, InterfaceTrace, PrimalTrajectory};
pub use mesh::{build_domain_mesh, SpaceMesh};
pub use operators::{assemble_operators, OperatorSet, SourceConfig};
pub use params::PhysicalParams;
pub use primal::{
    DecouplerConfig, DecouplingMethod, IterationStats, PrimalSolver, SolveOutcome,
};
pub use timegrid::{uniform_partition, MarkSet, TimeFrac, TimePartition};

/// The two space domains of the coupled problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Subdomain {
    /// Upper rectangle carrying the heat equation.
    Fluid,
    /// Lower rectangle carrying the wave equation.
    Solid,
}

impl Subdomain {
    pub fn label(self) -> &'static str {
        match self {
            Subdomain::Fluid => "fluid",
            Subdomain::Solid => "solid",
        }
    }
}

//! Goal-driven adaptive refinement loop: solve, estimate, mark, refine.

use crate::adjoint::{solve_adjoint, AdjointCoupling, GoalFunctional};
use crate::error::SolveError;
use crate::estimator::{self, ErrorBreakdown};
use crate::mesh::SpaceMesh;
use crate::operators::OperatorSet;
use crate::primal::{DecouplerConfig, PrimalSolver};
use crate::timegrid::{MarkSet, TimePartition};

/// Marks every micro interval whose primal or adjoint indicator magnitude
/// reaches the absolute-value average; fluid and solid are marked
/// independently. Patch closure happens inside the refinement itself.
pub fn mark(bd: &ErrorBreakdown) -> MarkSet {
    let threshold = estimator::indicator_average(bd);
    let mut marks = MarkSet::default();
    // an exactly zero average means there is no error to chase; the literal
    // criterion would otherwise mark every interval
    if threshold == 0.0 {
        return marks;
    }
    for (i, (t, v)) in bd.theta_f.iter().zip(&bd.vartheta_f).enumerate() {
        if t.abs() >= threshold || v.abs() >= threshold {
            marks.fluid.insert(i);
        }
    }
    for (i, (t, v)) in bd.theta_s.iter().zip(&bd.vartheta_s).enumerate() {
        if t.abs() >= threshold || v.abs() >= threshold {
            marks.solid.insert(i);
        }
    }
    marks
}

#[derive(Debug, Clone)]
pub struct AdaptiveConfig {
    /// Number of solve-estimate-mark-refine rounds.
    pub steps: usize,
    pub solver: DecouplerConfig,
    pub adjoint: AdjointCoupling,
    /// Reference value for effectivity reporting, usually extrapolated from
    /// a separate uniform convergence run.
    pub j_reference: Option<f64>,
}

/// One row of the adaptive history.
#[derive(Debug, Clone)]
pub struct AdaptiveRecord {
    pub step: usize,
    pub n_macro: usize,
    pub fluid_intervals: usize,
    pub solid_intervals: usize,
    pub j_value: f64,
    pub sigma: f64,
    pub sigma_bar: f64,
    pub effectivity: Option<f64>,
    pub marked_fluid: usize,
    pub marked_solid: usize,
    pub wall_time: std::time::Duration,
}

/// Runs the adaptive loop for `cfg.steps` rounds starting from `initial`.
///
/// Each round solves the primal and adjoint problems on the current
/// partition, evaluates the localized indicators, marks against the average
/// and refines (patch repair and macro splitting happen inside the
/// refinement). Partial records are returned alongside the error if a stage
/// fails.
pub fn adaptive_loop(
    mesh: &SpaceMesh,
    ops: &OperatorSet,
    initial: TimePartition,
    goal: &GoalFunctional,
    cfg: &AdaptiveConfig,
) -> Result<(Vec<AdaptiveRecord>, TimePartition), (usize, Vec<AdaptiveRecord>, SolveError)> {
    let mut records = Vec::with_capacity(cfg.steps);
    let mut partition = initial;
    for step in 0..cfg.steps {
        let started = std::time::Instant::now();
        let stage = |e: SolveError, records: &Vec<AdaptiveRecord>| (step, records.clone(), e);

        let mut solver = PrimalSolver::new(mesh, ops, &partition);
        let outcome = solver
            .solve_primal(&cfg.solver)
            .map_err(|e| stage(e, &records))?;
        let z = solve_adjoint(&mut solver, goal, &outcome.trajectory, &cfg.adjoint)
            .map_err(|e| stage(e, &records))?;
        let bd = estimator::estimate(ops, &partition, &outcome.trajectory, &z, goal)
            .map_err(|e| stage(e, &records))?;

        let j_value = crate::adjoint::goal_value(ops, &partition, goal, &outcome.trajectory);
        let sigma = estimator::total_estimate(&bd);
        let sigma_bar = estimator::indicator_average(&bd);
        let marks = mark(&bd);
        let (marked_fluid, marked_solid) = marks.counts();
        let effectivity = cfg
            .j_reference
            .and_then(|j_ref| estimator::effectivity(sigma, j_ref, j_value).ok());

        records.push(AdaptiveRecord {
            step,
            n_macro: partition.n_macro(),
            fluid_intervals: partition.fluid.interval_count(),
            solid_intervals: partition.solid.interval_count(),
            j_value,
            sigma,
            sigma_bar,
            effectivity,
            marked_fluid,
            marked_solid,
            wall_time: started.elapsed(),
        });

        let refined = partition
            .refine(&marks)
            .map_err(|e| (step, records.clone(), SolveError::Invalid(e.to_string())))?;
        drop(solver);
        partition = refined;
    }
    Ok((records, partition))
}

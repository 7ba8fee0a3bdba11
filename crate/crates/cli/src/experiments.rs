//! Experiment drivers: each takes a parsed configuration and produces a
//! structured report.

use crate::config::{ExperimentKind, RunConfig};
use crate::report::*;
use crate::svg::render_time_mesh;
use heatwave::adjoint::goal_value;
use heatwave::error::SolveError;
use heatwave::estimator;
use heatwave::operators::OperatorSet;
use heatwave::primal::{IterationStats, PrimalSolver};
use heatwave::*;
use log::info;

fn method_name(method: DecouplingMethod) -> &'static str {
    match method {
        DecouplingMethod::Relaxation => "relaxation",
        DecouplingMethod::Shooting => "shooting",
        DecouplingMethod::Monolithic => "monolithic",
    }
}

fn stats_row(method: DecouplingMethod, s: &IterationStats) -> StatsRow {
    StatsRow {
        step: s.macro_step + 1,
        method: method_name(method).into(),
        outer_iterations: s.outer_iterations,
        evaluations: s.evaluations,
        newton_iterations: s.newton_iterations,
        final_residual: s.final_residual,
    }
}

struct Problem {
    mesh: mesh::SpaceMesh,
    ops: OperatorSet,
}

fn build_problem(cfg: &RunConfig) -> Result<Problem, SolveError> {
    let mesh = build_domain_mesh(cfg.physical.h)
        .map_err(|e| SolveError::Invalid(e.to_string()))?;
    let ops = assemble_operators(&mesh, &cfg.physical, cfg.source());
    Ok(Problem { mesh, ops })
}

fn uniform(cfg: &RunConfig, n: usize, m: usize, l: usize) -> Result<TimePartition, SolveError> {
    uniform_partition(cfg.t_end, n, m, l).map_err(|e| SolveError::Invalid(e.to_string()))
}

/// Runs the experiment selected by the configuration.
pub fn run_experiment(cfg: &RunConfig) -> Result<RunReport, SolveError> {
    match cfg.experiment {
        ExperimentKind::Primal => run_primal(cfg),
        ExperimentKind::DecouplerCompare => run_decoupler_compare(cfg),
        ExperimentKind::Convergence => run_convergence(cfg),
        ExperimentKind::Adaptive => run_adaptive(cfg),
    }
}

fn run_primal(cfg: &RunConfig) -> Result<RunReport, SolveError> {
    let problem = build_problem(cfg)?;
    let partition = uniform(cfg, cfg.n_macro, cfg.m_micro, cfg.l_micro)?;
    let mut solver = PrimalSolver::new(&problem.mesh, &problem.ops, &partition);
    let outcome = solver.solve_primal(&cfg.decoupler)?;
    let j_value = goal_value(&problem.ops, &partition, &cfg.goal(), &outcome.trajectory);
    info!(
        "primal solve finished: J = {j_value:.8e}, {} macro steps",
        partition.n_macro()
    );
    let mut report = RunReport::new(cfg);
    report.primal = Some(PrimalSummary {
        j_value,
        steps: outcome
            .stats
            .iter()
            .map(|s| stats_row(cfg.decoupler.method, s))
            .collect(),
    });
    report.meshes.push(MeshArtifact {
        step: 0,
        svg: render_time_mesh(&partition),
        text: partition.to_text_lines(),
    });
    Ok(report)
}

fn run_decoupler_compare(cfg: &RunConfig) -> Result<RunReport, SolveError> {
    let problem = build_problem(cfg)?;
    let partition = uniform(cfg, cfg.n_macro, cfg.m_micro, cfg.l_micro)?;
    let mut rows = Vec::new();
    let mut j_values = Vec::new();
    for method in [DecouplingMethod::Relaxation, DecouplingMethod::Shooting] {
        let mut solver = PrimalSolver::new(&problem.mesh, &problem.ops, &partition);
        let run_cfg = DecouplerConfig {
            method,
            ..cfg.decoupler.clone()
        };
        let outcome = solver.solve_primal(&run_cfg)?;
        j_values.push(goal_value(
            &problem.ops,
            &partition,
            &cfg.goal(),
            &outcome.trajectory,
        ));
        rows.extend(outcome.stats.iter().map(|s| stats_row(method, s)));
        info!(
            "{}: total evaluations {}",
            method_name(method),
            outcome.stats.iter().map(|s| s.evaluations).sum::<usize>()
        );
    }
    let mut report = RunReport::new(cfg);
    report.decoupler = Some(rows);
    report.primal = Some(PrimalSummary {
        j_value: j_values[1],
        steps: Vec::new(),
    });
    Ok(report)
}

fn convergence_summary(
    cfg: &RunConfig,
    problem: &Problem,
    base_n: usize,
    levels: usize,
) -> Result<ConvergenceSummary, SolveError> {
    let goal = cfg.goal();
    let mut raw = Vec::new();
    for level in 0..levels {
        let n = base_n << level;
        let partition = uniform(cfg, n, cfg.m_micro, cfg.l_micro)?;
        let mut solver = PrimalSolver::new(&problem.mesh, &problem.ops, &partition);
        let u = solver.solve_primal(&cfg.decoupler)?.trajectory;
        let z = solve_adjoint(&mut solver, &goal, &u, &AdjointCoupling::Monolithic)?;
        let bd = estimator::estimate(&problem.ops, &partition, &u, &z, &goal)?;
        let j = goal_value(&problem.ops, &partition, &goal, &u);
        info!("convergence level N = {n}: J = {j:.8e}");
        raw.push((n, partition, bd, j));
    }
    let (j_reference, rate, fell_back) = if raw.len() >= 3 {
        let e = extrapolate_reference(
            raw[raw.len() - 3].3,
            raw[raw.len() - 2].3,
            raw[raw.len() - 1].3,
        );
        (e.j_ref, e.rate, e.fell_back)
    } else {
        (f64::NAN, f64::NAN, true)
    };
    let rows = raw
        .iter()
        .map(|(n, partition, bd, j)| {
            let sigma = total_estimate(bd);
            ConvergenceRow {
                n_macro: *n,
                fluid_intervals: partition.fluid.interval_count(),
                solid_intervals: partition.solid.interval_count(),
                theta_f: bd.theta_f_total(),
                theta_s: bd.theta_s_total(),
                vartheta_f: bd.vartheta_f_total(),
                vartheta_s: bd.vartheta_s_total(),
                sigma,
                j_value: *j,
                jref_minus_j: j_reference - j,
                effectivity: effectivity(sigma, j_reference, *j).unwrap_or(f64::NAN),
            }
        })
        .collect();
    Ok(ConvergenceSummary {
        rows,
        j_reference,
        rate,
        extrapolation_fell_back: fell_back,
    })
}

fn run_convergence(cfg: &RunConfig) -> Result<RunReport, SolveError> {
    let problem = build_problem(cfg)?;
    let summary = convergence_summary(cfg, &problem, cfg.n_macro, cfg.levels)?;
    let mut report = RunReport::new(cfg);
    report.convergence = Some(summary);
    Ok(report)
}

fn run_adaptive(cfg: &RunConfig) -> Result<RunReport, SolveError> {
    let problem = build_problem(cfg)?;
    // effectivity is reported against a reference from a separate uniform
    // convergence run one level beyond the starting resolution
    let reference = convergence_summary(cfg, &problem, 2 * cfg.n_macro, 3)?;
    info!(
        "adaptive reference J = {:.8e} (rate {:.2})",
        reference.j_reference, reference.rate
    );
    let initial = uniform(cfg, cfg.n_macro, cfg.m_micro, cfg.l_micro)?;
    let adaptive_cfg = AdaptiveConfig {
        steps: cfg.adaptive_steps,
        solver: cfg.decoupler.clone(),
        adjoint: AdjointCoupling::Monolithic,
        j_reference: Some(reference.j_reference),
    };
    let goal = cfg.goal();
    let mut partitions = vec![initial.clone()];
    let (records, final_partition) =
        adaptive_loop(&problem.mesh, &problem.ops, initial, &goal, &adaptive_cfg)
            .map_err(|(step, _, e)| SolveError::AtStep {
                macro_step: step,
                source: Box::new(e),
            })?;
    partitions.push(final_partition);

    let mut report = RunReport::new(cfg);
    report.adaptive = Some(
        records
            .iter()
            .map(|r| AdaptiveRow {
                step: r.step,
                n_macro: r.n_macro,
                fluid_intervals: r.fluid_intervals,
                solid_intervals: r.solid_intervals,
                j_value: r.j_value,
                sigma: r.sigma,
                sigma_bar: r.sigma_bar,
                effectivity: r.effectivity,
                marked_fluid: r.marked_fluid,
                marked_solid: r.marked_solid,
                wall_time_ms: r.wall_time.as_millis(),
            })
            .collect(),
    );
    report.convergence = Some(reference);
    for (step, partition) in [(0usize, &partitions[0]), (records.len(), &partitions[1])] {
        report.meshes.push(MeshArtifact {
            step,
            svg: render_time_mesh(partition),
            text: partition.to_text_lines(),
        });
    }
    Ok(report)
}

/// Builds the configured initial partition and renders it, without solving.
pub fn render_mesh_only(cfg: &RunConfig) -> Result<RunReport, SolveError> {
    let partition = uniform(cfg, cfg.n_macro, cfg.m_micro, cfg.l_micro)?;
    let mut report = RunReport::new(cfg);
    report.meshes.push(MeshArtifact {
        step: 0,
        svg: render_time_mesh(&partition),
        text: partition.to_text_lines(),
    });
    Ok(report)
}

//! Goal functionals, their derivatives, and the backward-in-time adjoint
//! solve on the same multirate partition.
//!
//! The adjoint problem is posed against the trial space of the primal
//! problem, which makes its algebraic form the transpose of the primal block
//! system. The backward macro loop therefore reuses the factorized coupled
//! macro systems: each step solves the transposed block with a right-hand
//! side carrying the goal loads plus the coupling from the already-computed
//! later block. No terminal value is prescribed; the value at the final time
//! is implicitly defined by the variational formulation.

use crate::error::SolveError;
use crate::forms::{gauss2, FieldPair, PrimalTrajectory};
use crate::linalg::{self, SparseLu};
use crate::operators::OperatorSet;
use crate::params::PhysicalParams;
use crate::primal::{MacroLayout, PrimalSolver};
use crate::timegrid::TimePartition;
use crate::Subdomain;

/// The two quadratic energy functionals: the weighted gradient energy of the
/// fluid velocity or of the solid displacement, each restricted to the right
/// half of its subdomain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GoalKind {
    FluidVelocityGradient,
    SolidDisplacementGradient,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GoalFunctional {
    pub kind: GoalKind,
}

impl GoalFunctional {
    pub fn fluid() -> Self {
        Self {
            kind: GoalKind::FluidVelocityGradient,
        }
    }

    pub fn solid() -> Self {
        Self {
            kind: GoalKind::SolidDisplacementGradient,
        }
    }

    pub fn subdomain(&self) -> Subdomain {
        match self.kind {
            GoalKind::FluidVelocityGradient => Subdomain::Fluid,
            GoalKind::SolidDisplacementGradient => Subdomain::Solid,
        }
    }

    pub fn coefficient(&self, p: &PhysicalParams) -> f64 {
        match self.kind {
            GoalKind::FluidVelocityGradient => p.nu,
            GoalKind::SolidDisplacementGradient => p.lambda,
        }
    }
}

fn goal_field<'a>(goal: &GoalFunctional, state: &'a FieldPair) -> &'a [f64] {
    match goal.kind {
        GoalKind::FluidVelocityGradient => &state.v,
        GoalKind::SolidDisplacementGradient => &state.u,
    }
}

fn goal_matrix<'a>(goal: &GoalFunctional, ops: &'a OperatorSet) -> &'a crate::linalg::Csr {
    match goal.kind {
        GoalKind::FluidVelocityGradient => &ops.goal_stiff_f,
        GoalKind::SolidDisplacementGradient => &ops.goal_stiff_s,
    }
}

/// Evaluates the goal functional on a primal trajectory with the 2-point
/// Gauss rule in time per micro interval, exact for the quadratic-in-time
/// integrand.
pub fn goal_value(
    ops: &OperatorSet,
    partition: &TimePartition,
    goal: &GoalFunctional,
    trajectory: &PrimalTrajectory,
) -> f64 {
    let s = goal.subdomain();
    let mesh = partition.mesh(s);
    let states = trajectory.states(s);
    let w = goal_matrix(goal, ops);
    let coef = goal.coefficient(&ops.params);
    let mut total = 0.0;
    for i in 0..mesh.interval_count() {
        let (a, b) = (mesh.node_times[i], mesh.node_times[i + 1]);
        let k = mesh.step(i);
        for g in gauss2(a, b) {
            let c1 = (g - a) / k;
            let field = |node: usize| goal_field(goal, &states[node]);
            let x: Vec<f64> = field(i)
                .iter()
                .zip(field(i + 1))
                .map(|(p, q)| (1.0 - c1) * p + c1 * q)
                .collect();
            total += 0.5 * k * coef * w.pair(&x, &x);
        }
    }
    total
}

/// Goal derivative as per-micro-node load vectors on the owning subdomain.
///
/// For the fluid functional the load acts on the velocity test component at
/// every fluid micro node; for the solid functional on the displacement test
/// component at every solid micro node. The other subdomain carries no load.
#[derive(Debug, Clone)]
pub struct GoalLoads {
    pub subdomain: Subdomain,
    /// One load vector per micro node of the owning subdomain.
    pub nodal: Vec<Vec<f64>>,
}

impl GoalLoads {
    pub fn node(&self, idx: usize) -> &[f64] {
        &self.nodal[idx]
    }
}

/// Assembles the nodal load vectors of the Gateaux derivative `2 c (grad w,
/// grad .)` discretized with the same 2-point Gauss rule and nodal-in-time
/// interpolation as the functional itself.
pub fn goal_derivative_load(
    ops: &OperatorSet,
    partition: &TimePartition,
    goal: &GoalFunctional,
    trajectory: &PrimalTrajectory,
) -> GoalLoads {
    let s = goal.subdomain();
    let mesh = partition.mesh(s);
    let states = trajectory.states(s);
    let w = goal_matrix(goal, ops);
    let coef = goal.coefficient(&ops.params);
    let n = ops.grid_size(s);
    let mut nodal = vec![vec![0.0; n]; mesh.node_fracs.len()];
    for i in 0..mesh.interval_count() {
        let (a, b) = (mesh.node_times[i], mesh.node_times[i + 1]);
        let k = mesh.step(i);
        for g in gauss2(a, b) {
            let c1 = (g - a) / k;
            let field = |node: usize| goal_field(goal, &states[node]);
            let x: Vec<f64> = field(i)
                .iter()
                .zip(field(i + 1))
                .map(|(p, q)| (1.0 - c1) * p + c1 * q)
                .collect();
            let wx = w.mul_vec(&x);
            let scale = 0.5 * k * 2.0 * coef;
            linalg::axpy(&mut nodal[i], scale * (1.0 - c1), &wx);
            linalg::axpy(&mut nodal[i + 1], scale * c1, &wx);
        }
    }
    GoalLoads { subdomain: s, nodal }
}

/// Piecewise-constant-in-time adjoint solution: one state per micro interval
/// of each subdomain plus the extra initial-node values admitted by the test
/// space.
///
/// Component convention matching [`FieldPair`]: the `u` slot holds the dual
/// of the displacement-tested equation, the `v` slot the dual of the
/// velocity-tested equation. The fluid displacement equation has no initial
/// term, so `initial_fluid.u` is identically zero and unused.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjointTrajectory {
    pub fluid: Vec<FieldPair>,
    pub solid: Vec<FieldPair>,
    pub initial_fluid: FieldPair,
    pub initial_solid: FieldPair,
}

impl AdjointTrajectory {
    pub fn states(&self, s: Subdomain) -> &[FieldPair] {
        match s {
            Subdomain::Fluid => &self.fluid,
            Subdomain::Solid => &self.solid,
        }
    }

    pub fn distance_inf(&self, other: &Self) -> f64 {
        let d = |a: &[FieldPair], b: &[FieldPair]| {
            a.iter()
                .zip(b)
                .map(|(x, y)| {
                    linalg::norm_inf(&linalg::sub(&x.u, &y.u))
                        .max(linalg::norm_inf(&linalg::sub(&x.v, &y.v)))
                })
                .fold(0.0, f64::max)
        };
        d(&self.fluid, &other.fluid).max(d(&self.solid, &other.solid))
    }
}

/// How the interface coupling of the adjoint macro blocks is resolved.
#[derive(Debug, Clone)]
pub enum AdjointCoupling {
    /// Transposed direct solve of the coupled block (default).
    Monolithic,
    /// Damped block fixed-point iteration between the two subdomain parts of
    /// the transposed block, for cross-validation of the monolithic path.
    Relaxation { tau: f64, tol: f64, max_iters: usize },
}

fn block_goal_loads(
    layout: &MacroLayout,
    partition: &TimePartition,
    loads: &GoalLoads,
    n: usize,
) -> Vec<f64> {
    let mut rhs = vec![0.0; layout.size()];
    match loads.subdomain {
        Subdomain::Fluid => {
            let range = partition.fluid.intervals_of_macro(n);
            for (m, node) in (1..=layout.m_n).zip(range.start + 1..=range.end) {
                let at = layout.fluid_v(m);
                rhs[at..at + layout.nf].copy_from_slice(loads.node(node));
            }
        }
        Subdomain::Solid => {
            let range = partition.solid.intervals_of_macro(n);
            for (l, node) in (1..=layout.l_n).zip(range.start + 1..=range.end) {
                let at = layout.solid_u(l);
                rhs[at..at + layout.ns].copy_from_slice(loads.node(node));
            }
        }
    }
    rhs
}

fn relaxed_transpose_solve(
    sys: &crate::primal::MacroSystem,
    rhs: &[f64],
    tau: f64,
    tol: f64,
    max_iters: usize,
    macro_step: usize,
) -> Result<Vec<f64>, SolveError> {
    let layout = &sys.layout;
    let nf_total = 2 * layout.nf * layout.m_n;
    let total = layout.size();
    let a_ff = sys.matrix.submatrix(0..nf_total, 0..nf_total);
    let a_fs = sys.matrix.submatrix(0..nf_total, nf_total..total);
    let a_sf = sys.matrix.submatrix(nf_total..total, 0..nf_total);
    let a_ss = sys.matrix.submatrix(nf_total..total, nf_total..total);
    let lu_ff = SparseLu::factor(&a_ff)?;
    let lu_ss = SparseLu::factor(&a_ss)?;

    let mut lam_f = vec![0.0; nf_total];
    let mut lam_s = vec![0.0; total - nf_total];
    let mut history = Vec::new();
    for _ in 0..max_iters {
        // fluid part of the transposed block, given the solid dual state
        let mut rf = rhs[..nf_total].to_vec();
        a_sf.mul_transpose_vec_add(-1.0, &lam_s, &mut rf);
        let new_f = lu_ff.solve_transpose(&rf);
        // solid part, given the updated fluid dual state
        let mut rs = rhs[nf_total..].to_vec();
        a_fs.mul_transpose_vec_add(-1.0, &new_f, &mut rs);
        let tilde_s = lu_ss.solve_transpose(&rs);
        let err = linalg::norm_inf(&linalg::sub(&tilde_s, &lam_s))
            .max(linalg::norm_inf(&linalg::sub(&new_f, &lam_f)));
        history.push(err);
        lam_f = new_f;
        if err <= tol {
            for (s, t) in lam_s.iter_mut().zip(&tilde_s) {
                *s = *t;
            }
            let mut lam = lam_f;
            lam.extend_from_slice(&lam_s);
            return Ok(lam);
        }
        for (s, t) in lam_s.iter_mut().zip(&tilde_s) {
            *s = tau * t + (1.0 - tau) * *s;
        }
    }
    Err(SolveError::Divergence {
        method: "adjoint relaxation",
        macro_step,
        max_iterations: max_iters,
        final_residual: history.last().copied().unwrap_or(f64::NAN),
        history,
    })
}

/// Solves the semi-discrete adjoint problem backward in time.
pub fn solve_adjoint(
    solver: &mut PrimalSolver,
    goal: &GoalFunctional,
    trajectory: &PrimalTrajectory,
    coupling: &AdjointCoupling,
) -> Result<AdjointTrajectory, SolveError> {
    let ops = solver.ops();
    let partition = solver.partition();
    let loads = goal_derivative_load(ops, partition, goal, trajectory);
    let n_macro = partition.n_macro();
    let (nf, ns) = (ops.n_fluid, ops.n_solid);

    let mut fluid = vec![FieldPair::zeros(nf); partition.fluid.interval_count()];
    let mut solid = vec![FieldPair::zeros(ns); partition.solid.interval_count()];
    // coupling of the later block to the state at the shared macro node,
    // laid out as [u_f, v_f, u_s, v_s]
    let mut carry = vec![0.0; 2 * nf + 2 * ns];

    for n in (0..n_macro).rev() {
        let sys = solver.macro_system(n)?;
        let layout = sys.layout;
        let mut rhs = block_goal_loads(&layout, partition, &loads, n);
        // the carry acts on the last micro node unknowns of this block
        let slices = [
            (layout.fluid_u(layout.m_n), layout.prev_fluid_u(), nf),
            (layout.fluid_v(layout.m_n), layout.prev_fluid_v(), nf),
            (layout.solid_u(layout.l_n), layout.prev_solid_u(), ns),
            (layout.solid_v(layout.l_n), layout.prev_solid_v(), ns),
        ];
        for (at, from, len) in slices {
            for j in 0..len {
                rhs[at + j] -= carry[from + j];
            }
        }
        let lam = match coupling {
            AdjointCoupling::Monolithic => sys.lu.solve_transpose(&rhs),
            AdjointCoupling::Relaxation { tau, tol, max_iters } => {
                relaxed_transpose_solve(&sys, &rhs, *tau, *tol, *max_iters, n)?
            }
        };
        // unpack the dual interval values
        let f_range = partition.fluid.intervals_of_macro(n);
        for (m, i) in (1..=layout.m_n).zip(f_range.clone()) {
            fluid[i] = FieldPair {
                u: lam[layout.fluid_u(m)..layout.fluid_u(m) + nf].to_vec(),
                v: lam[layout.fluid_v(m)..layout.fluid_v(m) + nf].to_vec(),
            };
        }
        let s_range = partition.solid.intervals_of_macro(n);
        for (l, i) in (1..=layout.l_n).zip(s_range.clone()) {
            solid[i] = FieldPair {
                u: lam[layout.solid_u(l)..layout.solid_u(l) + ns].to_vec(),
                v: lam[layout.solid_v(l)..layout.solid_v(l) + ns].to_vec(),
            };
        }
        carry = vec![0.0; 2 * nf + 2 * ns];
        sys.coupling_prev.mul_transpose_vec_add(1.0, &lam, &mut carry);
    }

    // initial-node duals from the initial-condition rows
    let mf = solver.mass_factor(Subdomain::Fluid)?;
    let ms = solver.mass_factor(Subdomain::Solid)?;
    let mut rhs_zf = vec![0.0; nf];
    if loads.subdomain == Subdomain::Fluid {
        rhs_zf.copy_from_slice(loads.node(0));
    }
    for (r, c) in rhs_zf.iter_mut().zip(&carry[nf..2 * nf]) {
        *r -= c;
    }
    let z_f0 = mf.solve(&rhs_zf);

    let mut rhs_ys = vec![0.0; ns];
    if loads.subdomain == Subdomain::Solid {
        rhs_ys.copy_from_slice(loads.node(0));
    }
    for (r, c) in rhs_ys.iter_mut().zip(&carry[2 * nf..2 * nf + ns]) {
        *r -= c;
    }
    let y_s0 = ms.solve(&rhs_ys);

    let mut rhs_zs = vec![0.0; ns];
    for (r, c) in rhs_zs.iter_mut().zip(&carry[2 * nf + ns..]) {
        *r -= c;
    }
    let z_s0 = ms.solve(&rhs_zs);

    Ok(AdjointTrajectory {
        fluid,
        solid,
        initial_fluid: FieldPair {
            u: vec![0.0; nf],
            v: z_f0,
        },
        initial_solid: FieldPair { u: y_s0, v: z_s0 },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_domain_mesh, SpaceMesh};
    use crate::operators::{assemble_operators, SourceConfig};
    use crate::primal::{DecouplerConfig, DecouplingMethod};
    use crate::timegrid::uniform_partition;

    fn setup(h: f64, source: SourceConfig) -> (SpaceMesh, OperatorSet) {
        let mesh = build_domain_mesh(h).unwrap();
        let p = PhysicalParams { h, ..Default::default() };
        let ops = assemble_operators(&mesh, &p, source);
        (mesh, ops)
    }

    fn pseudo_random(seed: u64, n: usize) -> Vec<f64> {
        let mut state = seed.wrapping_mul(0x9e3779b97f4a7c15).wrapping_add(99);
        (0..n)
            .map(|_| {
                state ^= state << 13;
                state ^= state >> 7;
                state ^= state << 17;
                (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
            })
            .collect()
    }

    #[test]
    fn goal_value_of_zero_trajectory_is_zero() {
        let (_, ops) = setup(0.5, SourceConfig::Fluid);
        let partition = uniform_partition(1.0, 4, 2, 1).unwrap();
        let traj = PrimalTrajectory::zeros(&partition, ops.n_fluid, ops.n_solid);
        assert_eq!(goal_value(&ops, &partition, &GoalFunctional::fluid(), &traj), 0.0);
        assert_eq!(goal_value(&ops, &partition, &GoalFunctional::solid(), &traj), 0.0);
    }

    #[test]
    fn goal_value_matches_closed_form_for_linear_in_time_field() {
        // v_f(x, y, t) = (a + b t) g (y - 1): constant spatial gradient
        // (0, g) on the whole fluid domain, zero on the clamped top edge
        let (mesh, ops) = setup(0.25, SourceConfig::Fluid);
        let partition = uniform_partition(1.0, 5, 2, 1).unwrap();
        let (a, b, g) = (0.3, -1.7, 2.0);
        let mut traj = PrimalTrajectory::zeros(&partition, ops.n_fluid, ops.n_solid);
        for (node, t) in partition.fluid.node_times.iter().enumerate() {
            let c = a + b * t;
            for (i, xy) in mesh.fluid.coords.iter().enumerate() {
                traj.fluid[node].v[i] = c * g * (xy[1] - 1.0);
            }
        }
        let got = goal_value(&ops, &partition, &GoalFunctional::fluid(), &traj);
        // area of the right half is 2, integrand nu c(t)^2 g^2 |area|
        let p = ops.params;
        let exact = p.nu * g * g * 2.0 * (a * a + a * b + b * b / 3.0);
        assert!(
            (got - exact).abs() <= 1e-12 * exact.abs(),
            "{got} vs {exact}"
        );
    }

    #[test]
    fn derivative_load_passes_a_finite_difference_check() {
        let (mesh, ops) = setup(0.5, SourceConfig::Fluid);
        let partition = uniform_partition(0.5, 3, 2, 1).unwrap();
        let goal = GoalFunctional::fluid();
        let mut traj = PrimalTrajectory::zeros(&partition, ops.n_fluid, ops.n_solid);
        for (node, state) in traj.fluid.iter_mut().enumerate() {
            state.v = pseudo_random(100 + node as u64, ops.n_fluid);
            for &d in &mesh.fluid.dirichlet {
                state.v[d] = 0.0;
            }
        }
        let loads = goal_derivative_load(&ops, &partition, &goal, &traj);

        // direction: another random nodal trajectory
        let mut dir = PrimalTrajectory::zeros(&partition, ops.n_fluid, ops.n_solid);
        for (node, state) in dir.fluid.iter_mut().enumerate() {
            state.v = pseudo_random(200 + node as u64, ops.n_fluid);
            for &d in &mesh.fluid.dirichlet {
                state.v[d] = 0.0;
            }
        }
        let pairing: f64 = (0..traj.fluid.len())
            .map(|node| linalg::dot(loads.node(node), &dir.fluid[node].v))
            .sum();

        let s = 1e-7;
        let mut bumped = traj.clone();
        for (node, state) in bumped.fluid.iter_mut().enumerate() {
            linalg::axpy(&mut state.v, s, &dir.fluid[node].v);
        }
        let fd = (goal_value(&ops, &partition, &goal, &bumped)
            - goal_value(&ops, &partition, &goal, &traj))
            / s;
        assert!(
            (fd - pairing).abs() <= 1e-6 * pairing.abs().max(1e-12),
            "fd {fd} vs pairing {pairing}"
        );

        // linearity of the load in the trajectory
        let mut doubled = traj.clone();
        for state in doubled.fluid.iter_mut() {
            linalg::scale(&mut state.v, 2.0);
        }
        let loads2 = goal_derivative_load(&ops, &partition, &goal, &doubled);
        for node in 0..traj.fluid.len() {
            for (x, y) in loads.node(node).iter().zip(loads2.node(node)) {
                assert!((2.0 * x - y).abs() <= 1e-12 * y.abs().max(1e-300));
            }
        }
    }

    #[test]
    fn zero_goal_load_gives_zero_adjoint() {
        let (mesh, ops) = setup(0.5, SourceConfig::Fluid);
        let partition = uniform_partition(0.2, 2, 2, 3).unwrap();
        let traj = PrimalTrajectory::zeros(&partition, ops.n_fluid, ops.n_solid);
        let mut solver = crate::primal::PrimalSolver::new(&mesh, &ops, &partition);
        let z = solve_adjoint(&mut solver, &GoalFunctional::fluid(), &traj, &AdjointCoupling::Monolithic)
            .unwrap();
        for state in z.fluid.iter().chain(&z.solid) {
            assert_eq!(state.norm_inf(), 0.0);
        }
        assert_eq!(z.initial_fluid.norm_inf(), 0.0);
        assert_eq!(z.initial_solid.norm_inf(), 0.0);
    }

    fn solved_pair(
        mesh: &SpaceMesh,
        ops: &OperatorSet,
        partition: &TimePartition,
        goal: &GoalFunctional,
    ) -> (PrimalTrajectory, AdjointTrajectory) {
        let mut solver = crate::primal::PrimalSolver::new(mesh, ops, partition);
        let u = solver
            .solve_primal(&DecouplerConfig::with_method(DecouplingMethod::Monolithic))
            .unwrap()
            .trajectory;
        let z = solve_adjoint(&mut solver, goal, &u, &AdjointCoupling::Monolithic).unwrap();
        (u, z)
    }

    #[test]
    fn monolithic_and_relaxed_adjoint_agree() {
        let (mesh, ops) = setup(0.5, SourceConfig::Fluid);
        let partition = uniform_partition(0.3, 3, 2, 1).unwrap();
        let goal = GoalFunctional::fluid();
        let (u, z_mono) = solved_pair(&mesh, &ops, &partition, &goal);
        let mut solver = crate::primal::PrimalSolver::new(&mesh, &ops, &partition);
        let z_relax = solve_adjoint(
            &mut solver,
            &goal,
            &u,
            &AdjointCoupling::Relaxation {
                tau: 0.7,
                tol: 1e-12,
                max_iters: 200,
            },
        )
        .unwrap();
        let d = z_mono.distance_inf(&z_relax);
        let scale = z_mono
            .fluid
            .iter()
            .map(FieldPair::norm_inf)
            .fold(0.0, f64::max)
            .max(1e-30);
        assert!(d <= 1e-8 * scale.max(1.0), "adjoint paths deviate {d:.3e}");
    }

    #[test]
    fn transpose_solve_matches_dense_oracle() {
        let (mesh, ops) = setup(1.0, SourceConfig::Fluid);
        let partition = uniform_partition(0.1, 2, 1, 1).unwrap();
        let mut solver = crate::primal::PrimalSolver::new(&mesh, &ops, &partition);
        let sys = solver.macro_system(0).unwrap();
        let n = sys.layout.size();
        let rhs = pseudo_random(7, n);
        let got = sys.lu.solve_transpose(&rhs);
        // dense route on the explicitly transposed matrix
        let dense = sys.matrix.transpose().to_dense();
        let want = crate::linalg::dense_solve(dense, rhs);
        let d = linalg::norm_inf(&linalg::sub(&got, &want));
        let scale = linalg::norm_inf(&want).max(1.0);
        assert!(d <= 1e-9 * scale, "transpose solve deviates {d:.3e}");
    }

    #[test]
    fn early_perturbations_leave_later_adjoint_blocks_unchanged() {
        let (mesh, ops) = setup(0.5, SourceConfig::Fluid);
        let partition = uniform_partition(0.3, 3, 2, 1).unwrap();
        let goal = GoalFunctional::fluid();
        let (u, z_base) = solved_pair(&mesh, &ops, &partition, &goal);

        // perturb the primal only at the interior node of macro interval 0
        let mut u2 = u.clone();
        let bump = pseudo_random(300, ops.n_fluid);
        let mut perturbed = u2.fluid[1].v.clone();
        linalg::axpy(&mut perturbed, 0.1, &bump);
        for &d in &mesh.fluid.dirichlet {
            perturbed[d] = 0.0;
        }
        u2.fluid[1].v = perturbed;
        let mut solver = crate::primal::PrimalSolver::new(&mesh, &ops, &partition);
        let z_pert = solve_adjoint(&mut solver, &goal, &u2, &AdjointCoupling::Monolithic).unwrap();

        // goal loads changed only at nodes 0..=2, all inside macro block 0,
        // so the backward solve reproduces blocks 1 and 2 bit for bit
        for i in partition.fluid.intervals_of_macro(1).start..partition.fluid.interval_count() {
            assert!(z_base.fluid[i] == z_pert.fluid[i], "fluid interval {i} changed");
        }
        for i in partition.solid.intervals_of_macro(1).start..partition.solid.interval_count() {
            assert!(z_base.solid[i] == z_pert.solid[i], "solid interval {i} changed");
        }
        // while block 0 did change
        assert!(z_base.fluid[0] != z_pert.fluid[0]);
    }
}

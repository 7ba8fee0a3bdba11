//! Forward solver for the coupled problem, one macro interval at a time.
//!
//! The interface coupling within a macro interval is resolved either by a
//! damped fixed-point iteration on the solid interface trace (relaxation), by
//! a Newton iteration on the interface defect with a matrix-free GMRES inner
//! solver (shooting), or by assembling the full coupled linear system over
//! all micro unknowns of the interval and solving it directly (monolithic).
//! The monolithic path is also the reference oracle the iterative methods are
//! tested against, and its factorizations back the adjoint solver.

use crate::error::SolveError;
use crate::forms::{FieldPair, FormsContext, InterfaceTrace, PrimalTrajectory};
use crate::forms::{source_time_integral};
use crate::linalg::{self, Csr, SparseLu, Triplets};
use crate::mesh::SpaceMesh;
use crate::operators::{OperatorSet, SourceConfig};
use crate::timegrid::TimePartition;
use crate::Subdomain;
use std::collections::HashMap;
use std::rc::Rc;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecouplingMethod {
    Relaxation,
    Shooting,
    Monolithic,
}

/// Solver method and tolerances for one run.
#[derive(Debug, Clone)]
pub struct DecouplerConfig {
    pub method: DecouplingMethod,
    /// Relaxation damping in [0, 1].
    pub tau: f64,
    /// Outer stopping tolerance on the interface l-infinity norm.
    pub outer_tol: f64,
    /// Maximum decoupling-function evaluations per macro step (relaxation)
    /// or Newton iterations (shooting).
    pub max_outer: usize,
    /// Relative tolerance of the inner GMRES solves (inexact Newton).
    pub gmres_tol: f64,
    /// Maximum GMRES dimension; 0 means the full interface unknown count.
    pub gmres_max: usize,
}

impl Default for DecouplerConfig {
    fn default() -> Self {
        Self {
            method: DecouplingMethod::Shooting,
            tau: 0.7,
            outer_tol: 1e-12,
            max_outer: 400,
            gmres_tol: 1e-3,
            gmres_max: 0,
        }
    }
}

impl DecouplerConfig {
    pub fn with_method(method: DecouplingMethod) -> Self {
        Self {
            method,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), SolveError> {
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(SolveError::Invalid(format!("tau {} outside [0, 1]", self.tau)));
        }
        if self.outer_tol <= 0.0 || self.gmres_tol <= 0.0 {
            return Err(SolveError::Invalid("tolerances must be positive".into()));
        }
        Ok(())
    }
}

/// Per-macro-step iteration record.
#[derive(Debug, Clone, Default)]
pub struct IterationStats {
    pub macro_step: usize,
    /// Accepted trace updates before convergence was detected.
    pub outer_iterations: usize,
    /// Decoupling-function evaluations, the paper-level cost unit.
    pub evaluations: usize,
    pub final_residual: f64,
    pub newton_iterations: usize,
    /// Inner GMRES iterations per Newton step (shooting only).
    pub gmres_iterations: Vec<usize>,
    pub residual_history: Vec<f64>,
}

/// Both subdomain states at one macro node.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledState {
    pub fluid: FieldPair,
    pub solid: FieldPair,
}

impl CoupledState {
    pub fn zeros(nf: usize, ns: usize) -> Self {
        Self {
            fluid: FieldPair::zeros(nf),
            solid: FieldPair::zeros(ns),
        }
    }
}

pub struct SolveOutcome {
    pub trajectory: PrimalTrajectory,
    pub stats: Vec<IterationStats>,
}

/// Index bookkeeping for the coupled system over one macro interval.
///
/// Unknowns are the fluid states at micro nodes 1..=M then the solid states
/// at micro nodes 1..=L, each node holding its displacement block before its
/// velocity block. Equation rows use the same layout: the displacement slot
/// carries the equation tested with the displacement test function.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MacroLayout {
    pub nf: usize,
    pub ns: usize,
    pub m_n: usize,
    pub l_n: usize,
}

impl MacroLayout {
    pub fn fluid_u(&self, m: usize) -> usize {
        debug_assert!((1..=self.m_n).contains(&m));
        (m - 1) * 2 * self.nf
    }

    pub fn fluid_v(&self, m: usize) -> usize {
        self.fluid_u(m) + self.nf
    }

    pub fn solid_u(&self, l: usize) -> usize {
        debug_assert!((1..=self.l_n).contains(&l));
        self.m_n * 2 * self.nf + (l - 1) * 2 * self.ns
    }

    pub fn solid_v(&self, l: usize) -> usize {
        self.solid_u(l) + self.ns
    }

    pub fn size(&self) -> usize {
        2 * self.nf * self.m_n + 2 * self.ns * self.l_n
    }

    // compact layout of the previous macro node state used by the coupling
    // block: [u_f, v_f, u_s, v_s]
    pub fn prev_fluid_u(&self) -> usize {
        0
    }
    pub fn prev_fluid_v(&self) -> usize {
        self.nf
    }
    pub fn prev_solid_u(&self) -> usize {
        2 * self.nf
    }
    pub fn prev_solid_v(&self) -> usize {
        2 * self.nf + self.ns
    }
    pub fn prev_size(&self) -> usize {
        2 * self.nf + 2 * self.ns
    }

    pub fn pack_prev(&self, state: &CoupledState) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.prev_size());
        x.extend_from_slice(&state.fluid.u);
        x.extend_from_slice(&state.fluid.v);
        x.extend_from_slice(&state.solid.u);
        x.extend_from_slice(&state.solid.v);
        x
    }
}

/// Assembled coupled system of one macro interval: the block matrix over the
/// interval unknowns, its factorization, and the coupling block to the
/// previous macro node state.
pub struct MacroSystem {
    pub layout: MacroLayout,
    pub matrix: Csr,
    pub lu: SparseLu,
    pub coupling_prev: Csr,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct MacroKey {
    fluid: Vec<(i64, i64)>,
    solid: Vec<(i64, i64)>,
}

/// Forward solver bound to one mesh/operator/partition triple.
pub struct PrimalSolver<'a> {
    pub forms: FormsContext<'a>,
    macro_systems: HashMap<MacroKey, Rc<MacroSystem>>,
    mass_factor_f: Option<Rc<SparseLu>>,
    mass_factor_s: Option<Rc<SparseLu>>,
}

impl<'a> PrimalSolver<'a> {
    pub fn new(mesh: &'a SpaceMesh, ops: &'a OperatorSet, partition: &'a TimePartition) -> Self {
        Self {
            forms: FormsContext::new(mesh, ops, partition),
            macro_systems: HashMap::new(),
            mass_factor_f: None,
            mass_factor_s: None,
        }
    }

    pub fn mesh(&self) -> &'a SpaceMesh {
        self.forms.mesh
    }

    pub fn ops(&self) -> &'a OperatorSet {
        self.forms.ops
    }

    pub fn partition(&self) -> &'a TimePartition {
        self.forms.partition
    }

    fn macro_key(&self, n: usize) -> MacroKey {
        let partition = self.forms.partition;
        let rel = |s: Subdomain| -> Vec<(i64, i64)> {
            let mesh = partition.mesh(s);
            mesh.intervals_of_macro(n)
                .map(|i| {
                    let f = crate::timegrid::TimeFrac::sub(
                        mesh.node_fracs[i + 1],
                        partition.macro_fracs[n],
                    );
                    (f.numer(), f.denom())
                })
                .collect()
        };
        MacroKey {
            fluid: rel(Subdomain::Fluid),
            solid: rel(Subdomain::Solid),
        }
    }

    /// Builds (or fetches) the coupled system of macro interval `n`.
    pub fn macro_system(&mut self, n: usize) -> Result<Rc<MacroSystem>, SolveError> {
        let key = self.macro_key(n);
        if let Some(sys) = self.macro_systems.get(&key) {
            return Ok(Rc::clone(sys));
        }
        let sys = Rc::new(self.assemble_macro_system(n)?);
        self.macro_systems.insert(key, Rc::clone(&sys));
        Ok(sys)
    }

    fn assemble_macro_system(&self, n: usize) -> Result<MacroSystem, SolveError> {
        let ops = self.forms.ops;
        let mesh = self.forms.mesh;
        let partition = self.forms.partition;
        let layout = MacroLayout {
            nf: ops.n_fluid,
            ns: ops.n_solid,
            m_n: partition.fluid.count_in_macro(n),
            l_n: partition.solid.count_in_macro(n),
        };
        let pen = ops.params.penalty();
        let nu = ops.params.nu;
        let lambda = ops.params.lambda;

        let mut a = Triplets::new(layout.size(), layout.size());
        let mut b = Triplets::new(layout.size(), layout.prev_size());

        // fluid micro steps
        let f_range = partition.fluid.intervals_of_macro(n);
        let mut alpha_prev = partition.left_weight(n, Subdomain::Fluid, f_range.start);
        for (m, i) in (1..=layout.m_n).zip(f_range.clone()) {
            let k = partition.fluid.step(i);
            let alpha = partition.left_weight(n, Subdomain::Fluid, i + 1);
            let w_prev = 0.5 * k * (alpha + alpha_prev);
            let w_next = 0.5 * k * (2.0 - alpha - alpha_prev);

            // displacement row: (k/2)(Fu u_m + Fu u_{m-1}) - penalty coupling
            a.add_csr(layout.fluid_u(m), layout.fluid_u(m), 0.5 * k, &ops.fluid_u_op);
            if m >= 2 {
                a.add_csr(layout.fluid_u(m), layout.fluid_u(m - 1), 0.5 * k, &ops.fluid_u_op);
            } else {
                b.add_csr(layout.fluid_u(m), layout.prev_fluid_u(), 0.5 * k, &ops.fluid_u_op);
            }
            a.add_csr(
                layout.fluid_u(m),
                layout.solid_u(layout.l_n),
                -pen * w_next,
                &ops.iface_mass_fs,
            );
            b.add_csr(layout.fluid_u(m), layout.prev_solid_u(), -pen * w_prev, &ops.iface_mass_fs);

            // velocity row: M (v_m - v_{m-1}) + (k/2)(Fv v_m + Fv v_{m-1}) - coupling
            a.add_csr(layout.fluid_v(m), layout.fluid_v(m), 1.0, &ops.mass_f);
            a.add_csr(layout.fluid_v(m), layout.fluid_v(m), 0.5 * k, &ops.fluid_v_op);
            if m >= 2 {
                a.add_csr(layout.fluid_v(m), layout.fluid_v(m - 1), -1.0, &ops.mass_f);
                a.add_csr(layout.fluid_v(m), layout.fluid_v(m - 1), 0.5 * k, &ops.fluid_v_op);
            } else {
                b.add_csr(layout.fluid_v(m), layout.prev_fluid_v(), -1.0, &ops.mass_f);
                b.add_csr(layout.fluid_v(m), layout.prev_fluid_v(), 0.5 * k, &ops.fluid_v_op);
            }
            a.add_csr(
                layout.fluid_v(m),
                layout.solid_v(layout.l_n),
                -pen * w_next,
                &ops.iface_mass_fs,
            );
            b.add_csr(layout.fluid_v(m), layout.prev_solid_v(), -pen * w_prev, &ops.iface_mass_fs);

            alpha_prev = alpha;
        }

        // solid micro steps
        let s_range = partition.solid.intervals_of_macro(n);
        let mut alpha_prev = partition.left_weight(n, Subdomain::Solid, s_range.start);
        for (l, i) in (1..=layout.l_n).zip(s_range.clone()) {
            let k = partition.solid.step(i);
            let alpha = partition.left_weight(n, Subdomain::Solid, i + 1);
            let w_prev = 0.5 * k * (alpha + alpha_prev);
            let w_next = 0.5 * k * (2.0 - alpha - alpha_prev);

            // displacement row: M (u_l - u_{l-1}) - (k/2) M (v_l + v_{l-1})
            a.add_csr(layout.solid_u(l), layout.solid_u(l), 1.0, &ops.mass_s);
            a.add_csr(layout.solid_u(l), layout.solid_v(l), -0.5 * k, &ops.mass_s);
            if l >= 2 {
                a.add_csr(layout.solid_u(l), layout.solid_u(l - 1), -1.0, &ops.mass_s);
                a.add_csr(layout.solid_u(l), layout.solid_v(l - 1), -0.5 * k, &ops.mass_s);
            } else {
                b.add_csr(layout.solid_u(l), layout.prev_solid_u(), -1.0, &ops.mass_s);
                b.add_csr(layout.solid_u(l), layout.prev_solid_v(), -0.5 * k, &ops.mass_s);
            }

            // velocity row: M (v_l - v_{l-1}) + (k/2)(lambda K u + Vop v) + flux coupling
            a.add_csr(layout.solid_v(l), layout.solid_v(l), 1.0, &ops.mass_s);
            a.add_csr(layout.solid_v(l), layout.solid_v(l), 0.5 * k, &ops.solid_v_op);
            a.add_csr(layout.solid_v(l), layout.solid_u(l), 0.5 * k * lambda, &ops.stiff_s);
            if l >= 2 {
                a.add_csr(layout.solid_v(l), layout.solid_v(l - 1), -1.0, &ops.mass_s);
                a.add_csr(layout.solid_v(l), layout.solid_v(l - 1), 0.5 * k, &ops.solid_v_op);
                a.add_csr(layout.solid_v(l), layout.solid_u(l - 1), 0.5 * k * lambda, &ops.stiff_s);
            } else {
                b.add_csr(layout.solid_v(l), layout.prev_solid_v(), -1.0, &ops.mass_s);
                b.add_csr(layout.solid_v(l), layout.prev_solid_v(), 0.5 * k, &ops.solid_v_op);
                b.add_csr(layout.solid_v(l), layout.prev_solid_u(), 0.5 * k * lambda, &ops.stiff_s);
            }
            a.add_csr(
                layout.solid_v(l),
                layout.fluid_v(layout.m_n),
                nu * w_next,
                &ops.flux_sf,
            );
            b.add_csr(layout.solid_v(l), layout.prev_fluid_v(), nu * w_prev, &ops.flux_sf);

            alpha_prev = alpha;
        }

        // identity rows on constrained nodes
        for m in 1..=layout.m_n {
            for &d in &mesh.fluid.dirichlet {
                a.push(layout.fluid_u(m) + d, layout.fluid_u(m) + d, 1.0);
                a.push(layout.fluid_v(m) + d, layout.fluid_v(m) + d, 1.0);
            }
        }
        for l in 1..=layout.l_n {
            for &d in &mesh.solid.dirichlet {
                a.push(layout.solid_u(l) + d, layout.solid_u(l) + d, 1.0);
                a.push(layout.solid_v(l) + d, layout.solid_v(l) + d, 1.0);
            }
        }

        let matrix = a.to_csr();
        let lu = SparseLu::factor(&matrix)?;
        Ok(MacroSystem {
            layout,
            matrix,
            lu,
            coupling_prev: b.to_csr(),
        })
    }

    /// Source contributions of macro interval `n` over the block layout.
    pub fn macro_source(&self, n: usize, layout: &MacroLayout) -> Result<Vec<f64>, SolveError> {
        let ops = self.forms.ops;
        let partition = self.forms.partition;
        let mut f = vec![0.0; layout.size()];
        match ops.source {
            SourceConfig::Fluid => {
                for (m, i) in (1..=layout.m_n).zip(partition.fluid.intervals_of_macro(n)) {
                    let s = source_time_integral(
                        partition.fluid.node_times[i],
                        partition.fluid.node_times[i + 1],
                    )?;
                    let at = layout.fluid_v(m);
                    linalg::axpy(&mut f[at..at + layout.nf], s, &ops.load_f);
                }
            }
            SourceConfig::Solid => {
                for (l, i) in (1..=layout.l_n).zip(partition.solid.intervals_of_macro(n)) {
                    let s = source_time_integral(
                        partition.solid.node_times[i],
                        partition.solid.node_times[i + 1],
                    )?;
                    let at = layout.solid_v(l);
                    linalg::axpy(&mut f[at..at + layout.ns], s, &ops.load_s);
                }
            }
        }
        Ok(f)
    }

    fn unpack_block(&self, layout: &MacroLayout, x: &[f64]) -> (Vec<FieldPair>, Vec<FieldPair>) {
        let fluid = (1..=layout.m_n)
            .map(|m| FieldPair {
                u: x[layout.fluid_u(m)..layout.fluid_u(m) + layout.nf].to_vec(),
                v: x[layout.fluid_v(m)..layout.fluid_v(m) + layout.nf].to_vec(),
            })
            .collect();
        let solid = (1..=layout.l_n)
            .map(|l| FieldPair {
                u: x[layout.solid_u(l)..layout.solid_u(l) + layout.ns].to_vec(),
                v: x[layout.solid_v(l)..layout.solid_v(l) + layout.ns].to_vec(),
            })
            .collect();
        (fluid, solid)
    }

    /// Assembles and solves the full coupled system of macro interval `n`
    /// directly. Reference for the partitioned methods.
    pub fn monolithic_macro_solve(
        &mut self,
        n: usize,
        state_prev: &CoupledState,
    ) -> Result<(Vec<FieldPair>, Vec<FieldPair>), SolveError> {
        let sys = self.macro_system(n)?;
        let mut rhs = self.macro_source(n, &sys.layout)?;
        let prev = sys.layout.pack_prev(state_prev);
        sys.coupling_prev.mul_vec_add(-1.0, &prev, &mut rhs);
        let x = sys.lu.solve(&rhs);
        Ok(self.unpack_block(&sys.layout, &x))
    }

    /// One evaluation of the decoupling function: a fluid sweep driven by the
    /// guessed solid trace at `t_n`, then a solid sweep driven by the
    /// resulting fluid velocities.
    pub fn decouple_step(
        &mut self,
        n: usize,
        state_prev: &CoupledState,
        guess: &InterfaceTrace,
    ) -> Result<(Vec<FieldPair>, Vec<FieldPair>), SolveError> {
        let mesh = self.forms.mesh;
        let solid_prev = InterfaceTrace::from_state(mesh, Subdomain::Solid, &state_prev.solid);
        let fluid = self
            .forms
            .fluid_macro_sweep(n, &state_prev.fluid, &solid_prev, guess, None)?;
        let fluid_v_next = &fluid.last().expect("at least one micro step").v;
        let solid = self.forms.solid_macro_sweep(
            n,
            &state_prev.solid,
            &state_prev.fluid.v,
            fluid_v_next,
            None,
        )?;
        Ok((fluid, solid))
    }

    fn end_trace(&self, solid: &[FieldPair]) -> InterfaceTrace {
        InterfaceTrace::from_state(
            self.forms.mesh,
            Subdomain::Solid,
            solid.last().expect("at least one micro step"),
        )
    }

    /// Damped fixed-point iteration on the solid interface trace.
    pub fn relax_macro_step(
        &mut self,
        n: usize,
        state_prev: &CoupledState,
        cfg: &DecouplerConfig,
    ) -> Result<(Vec<FieldPair>, Vec<FieldPair>, IterationStats), SolveError> {
        cfg.validate()?;
        let mut stats = IterationStats {
            macro_step: n,
            ..Default::default()
        };
        let mut guess =
            InterfaceTrace::from_state(self.forms.mesh, Subdomain::Solid, &state_prev.solid);
        loop {
            let (fluid, solid) = self.decouple_step(n, state_prev, &guess)?;
            stats.evaluations += 1;
            let updated = self.end_trace(&solid);
            let err = linalg::norm_inf(&linalg::sub(&updated.flat(), &guess.flat()));
            stats.residual_history.push(err);
            stats.final_residual = err;
            if err <= cfg.outer_tol {
                return Ok((fluid, solid, stats));
            }
            if stats.evaluations >= cfg.max_outer {
                return Err(SolveError::Divergence {
                    method: "relaxation",
                    macro_step: n,
                    max_iterations: cfg.max_outer,
                    final_residual: err,
                    history: stats.residual_history,
                });
            }
            let flat: Vec<f64> = guess
                .flat()
                .iter()
                .zip(&updated.flat())
                .map(|(old, new)| cfg.tau * new + (1.0 - cfg.tau) * old)
                .collect();
            guess = InterfaceTrace::from_flat(Subdomain::Solid, &flat);
            stats.outer_iterations += 1;
        }
    }

    /// Inexact Newton on the interface defect with matrix-free GMRES, the
    /// Jacobian action realized as a finite-difference directional
    /// derivative.
    pub fn shoot_macro_step(
        &mut self,
        n: usize,
        state_prev: &CoupledState,
        cfg: &DecouplerConfig,
    ) -> Result<(Vec<FieldPair>, Vec<FieldPair>, IterationStats), SolveError> {
        cfg.validate()?;
        let mut stats = IterationStats {
            macro_step: n,
            ..Default::default()
        };
        let mut x = InterfaceTrace::from_state(self.forms.mesh, Subdomain::Solid, &state_prev.solid)
            .flat();
        let dim = x.len();
        let gmres_max = if cfg.gmres_max == 0 { dim } else { cfg.gmres_max };
        let sqrt_eps = f64::EPSILON.sqrt();
        loop {
            let (fluid, solid) = self.decouple_step(
                n,
                state_prev,
                &InterfaceTrace::from_flat(Subdomain::Solid, &x),
            )?;
            stats.evaluations += 1;
            let updated = self.end_trace(&solid).flat();
            let defect = linalg::sub(&x, &updated);
            let err = linalg::norm_inf(&defect);
            stats.residual_history.push(err);
            stats.final_residual = err;
            if err <= cfg.outer_tol {
                return Ok((fluid, solid, stats));
            }
            if stats.newton_iterations >= cfg.max_outer {
                return Err(SolveError::Divergence {
                    method: "shooting",
                    macro_step: n,
                    max_iterations: cfg.max_outer,
                    final_residual: err,
                    history: stats.residual_history,
                });
            }

            // solve S'(x) d = -S(x)
            let x_norm = linalg::norm2(&x);
            let mut rhs = defect.clone();
            linalg::scale(&mut rhs, -1.0);
            let mut probe_err: Option<SolveError> = None;
            let (d, out) = {
                let evaluations = &mut stats.evaluations;
                let probe_err = &mut probe_err;
                let apply = |dir: &[f64]| -> Vec<f64> {
                    let dn = linalg::norm2(dir);
                    if dn == 0.0 {
                        return vec![0.0; dim];
                    }
                    let eps = sqrt_eps * (1.0 + x_norm) / dn;
                    let mut probe = x.clone();
                    linalg::axpy(&mut probe, eps, dir);
                    match self.decouple_step(
                        n,
                        state_prev,
                        &InterfaceTrace::from_flat(Subdomain::Solid, &probe),
                    ) {
                        Ok((_, solid_probe)) => {
                            *evaluations += 1;
                            let updated_probe = InterfaceTrace::from_state(
                                self.forms.mesh,
                                Subdomain::Solid,
                                solid_probe.last().expect("at least one micro step"),
                            )
                            .flat();
                            let defect_probe = linalg::sub(&probe, &updated_probe);
                            defect_probe
                                .iter()
                                .zip(&defect)
                                .map(|(sp, s0)| (sp - s0) / eps)
                                .collect()
                        }
                        Err(e) => {
                            *probe_err = Some(e);
                            vec![0.0; dim]
                        }
                    }
                };
                linalg::gmres(apply, &rhs, cfg.gmres_tol, gmres_max)
            };
            if let Some(e) = probe_err {
                return Err(e);
            }
            if !out.converged {
                return Err(SolveError::GmresStagnation {
                    macro_step: n,
                    final_residual: out.residual,
                    history: out.history,
                });
            }
            stats.gmres_iterations.push(out.iterations);
            linalg::axpy(&mut x, 1.0, &d);
            stats.newton_iterations += 1;
            stats.outer_iterations += 1;
        }
    }

    fn step(
        &mut self,
        n: usize,
        state_prev: &CoupledState,
        cfg: &DecouplerConfig,
    ) -> Result<(Vec<FieldPair>, Vec<FieldPair>, IterationStats), SolveError> {
        match cfg.method {
            DecouplingMethod::Relaxation => self.relax_macro_step(n, state_prev, cfg),
            DecouplingMethod::Shooting => self.shoot_macro_step(n, state_prev, cfg),
            DecouplingMethod::Monolithic => {
                let (fluid, solid) = self.monolithic_macro_solve(n, state_prev)?;
                let stats = IterationStats {
                    macro_step: n,
                    ..Default::default()
                };
                Ok((fluid, solid, stats))
            }
        }
    }

    /// Marches the coupled problem over the whole horizon from zero initial
    /// conditions.
    pub fn solve_primal(&mut self, cfg: &DecouplerConfig) -> Result<SolveOutcome, SolveError> {
        cfg.validate()?;
        let ops = self.forms.ops;
        let partition = self.forms.partition;
        let mut trajectory = PrimalTrajectory::zeros(partition, ops.n_fluid, ops.n_solid);
        let mut state = CoupledState::zeros(ops.n_fluid, ops.n_solid);
        let mut all_stats = Vec::with_capacity(partition.n_macro());
        for n in 0..partition.n_macro() {
            let (fluid, solid, stats) = self.step(n, &state, cfg).map_err(|e| match e {
                e @ SolveError::Divergence { .. } | e @ SolveError::GmresStagnation { .. } => e,
                other => SolveError::AtStep {
                    macro_step: n,
                    source: Box::new(other),
                },
            })?;
            let f_range = partition.fluid.intervals_of_macro(n);
            for (state_m, node) in fluid.iter().zip(f_range.start + 1..=f_range.end) {
                trajectory.fluid[node] = state_m.clone();
            }
            let s_range = partition.solid.intervals_of_macro(n);
            for (state_l, node) in solid.iter().zip(s_range.start + 1..=s_range.end) {
                trajectory.solid[node] = state_l.clone();
            }
            state = CoupledState {
                fluid: fluid.last().expect("nonempty").clone(),
                solid: solid.last().expect("nonempty").clone(),
            };
            all_stats.push(stats);
        }
        Ok(SolveOutcome {
            trajectory,
            stats: all_stats,
        })
    }

    /// Factorized (Dirichlet-regularized) mass matrix of one subdomain.
    pub fn mass_factor(&mut self, s: Subdomain) -> Result<Rc<SparseLu>, SolveError> {
        let ops = self.forms.ops;
        let mesh = self.forms.mesh;
        let slot = match s {
            Subdomain::Fluid => &mut self.mass_factor_f,
            Subdomain::Solid => &mut self.mass_factor_s,
        };
        if let Some(f) = slot {
            return Ok(Rc::clone(f));
        }
        let (m, grid, nn) = match s {
            Subdomain::Fluid => (&ops.mass_f, &mesh.fluid, ops.n_fluid),
            Subdomain::Solid => (&ops.mass_s, &mesh.solid, ops.n_solid),
        };
        let mut t = Triplets::new(nn, nn);
        t.add_csr(0, 0, 1.0, m);
        for &d in &grid.dirichlet {
            t.push(d, d, 1.0);
        }
        let lu = Rc::new(SparseLu::factor(&t.to_csr())?);
        *slot = Some(Rc::clone(&lu));
        Ok(lu)
    }
}

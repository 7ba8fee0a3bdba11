//! Semi-discrete variational machinery: nodal states, cross-mesh
//! interpolation, exact source time integrals, and the per-macro-interval
//! micro sweeps of the two subproblems.
//!
//! Each micro step is one Crank-Nicolson-type linear solve. During a fluid
//! sweep the solid interface data at intermediate micro times is the linear
//! interpolant between the two macro endpoint traces, and symmetrically for
//! the solid sweep with the fluid heat flux.

use crate::error::SolveError;
use crate::linalg::{self, Csr, SparseLu};
use crate::mesh::SpaceMesh;
use crate::operators::{OperatorSet, SourceConfig};
use crate::timegrid::TimePartition;
use crate::Subdomain;
use std::collections::HashMap;
use std::rc::Rc;

/// Nodal coefficient vectors of one subdomain at one time node.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldPair {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

impl FieldPair {
    pub fn zeros(n: usize) -> Self {
        Self {
            u: vec![0.0; n],
            v: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    pub fn norm_inf(&self) -> f64 {
        linalg::norm_inf(&self.u).max(linalg::norm_inf(&self.v))
    }

    pub fn blend(a: &FieldPair, b: &FieldPair, weight_b: f64) -> FieldPair {
        let wa = 1.0 - weight_b;
        FieldPair {
            u: a.u.iter().zip(&b.u).map(|(x, y)| wa * x + weight_b * y).collect(),
            v: a.v.iter().zip(&b.v).map(|(x, y)| wa * x + weight_b * y).collect(),
        }
    }
}

/// Values of (u, v) restricted to the interface nodes at one time node.
#[derive(Debug, Clone, PartialEq)]
pub struct InterfaceTrace {
    pub subdomain: Subdomain,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

impl InterfaceTrace {
    pub fn zeros(subdomain: Subdomain, n_interface: usize) -> Self {
        Self {
            subdomain,
            u: vec![0.0; n_interface],
            v: vec![0.0; n_interface],
        }
    }

    /// Extracts the interface values of a full nodal state.
    pub fn from_state(mesh: &SpaceMesh, subdomain: Subdomain, state: &FieldPair) -> Self {
        let grid = mesh.grid(subdomain);
        Self {
            subdomain,
            u: grid.interface.iter().map(|&n| state.u[n]).collect(),
            v: grid.interface.iter().map(|&n| state.v[n]).collect(),
        }
    }

    /// Scatters the trace into full-length vectors (zeros elsewhere).
    pub fn expand(&self, mesh: &SpaceMesh) -> FieldPair {
        let grid = mesh.grid(self.subdomain);
        let mut full = FieldPair::zeros(grid.n_nodes());
        for (k, &n) in grid.interface.iter().enumerate() {
            full.u[n] = self.u[k];
            full.v[n] = self.v[k];
        }
        full
    }

    pub fn flat(&self) -> Vec<f64> {
        let mut out = self.u.clone();
        out.extend_from_slice(&self.v);
        out
    }

    pub fn from_flat(subdomain: Subdomain, flat: &[f64]) -> Self {
        let n = flat.len() / 2;
        Self {
            subdomain,
            u: flat[..n].to_vec(),
            v: flat[n..].to_vec(),
        }
    }
}

/// Piecewise-linear-in-time primal solution: one state per micro node of
/// each subdomain, including the shared initial node.
#[derive(Debug, Clone, PartialEq)]
pub struct PrimalTrajectory {
    pub fluid: Vec<FieldPair>,
    pub solid: Vec<FieldPair>,
}

impl PrimalTrajectory {
    pub fn zeros(partition: &TimePartition, n_fluid: usize, n_solid: usize) -> Self {
        Self {
            fluid: vec![FieldPair::zeros(n_fluid); partition.fluid.node_fracs.len()],
            solid: vec![FieldPair::zeros(n_solid); partition.solid.node_fracs.len()],
        }
    }

    pub fn states(&self, s: Subdomain) -> &[FieldPair] {
        match s {
            Subdomain::Fluid => &self.fluid,
            Subdomain::Solid => &self.solid,
        }
    }

    pub fn norm_inf(&self) -> f64 {
        self.fluid
            .iter()
            .chain(&self.solid)
            .map(FieldPair::norm_inf)
            .fold(0.0, f64::max)
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

    /// Nodal-in-time interpolation of a component at time `t` within the
    /// micro interval `i` of subdomain `s`.
    pub fn interp_in_interval(
        &self,
        partition: &TimePartition,
        s: Subdomain,
        i: usize,
        t: f64,
    ) -> FieldPair {
        let mesh = partition.mesh(s);
        let (a, b) = (mesh.node_times[i], mesh.node_times[i + 1]);
        let w = (t - a) / (b - a);
        let states = self.states(s);
        FieldPair::blend(&states[i], &states[i + 1], w)
    }
}

/// Macro-interval interpolation weight: the value at `t` is
/// `alpha * value(t_prev) + (1 - alpha) * value(t_next)`.
fn left_weight(t_prev: f64, t_next: f64, t: f64) -> f64 {
    (t_next - t) / (t_next - t_prev)
}

fn check_in_interval(t_prev: f64, t_next: f64, t: f64) -> Result<(), SolveError> {
    let slack = 1e-12 * (t_next - t_prev).abs();
    if t < t_prev - slack || t > t_next + slack {
        Err(SolveError::TimeOutOfInterval {
            t,
            a: t_prev,
            b: t_next,
        })
    } else {
        Ok(())
    }
}

/// Interpolates the solid state to a fluid micro time inside macro interval
/// `n`: linear blend of the two macro endpoint states. The fluid component
/// of the pairing is the identity and is not materialized.
pub fn interp_fluid(
    partition: &TimePartition,
    n: usize,
    solid_prev: &FieldPair,
    solid_next: &FieldPair,
    t: f64,
) -> Result<FieldPair, SolveError> {
    let (a, b) = (partition.macro_times[n], partition.macro_times[n + 1]);
    check_in_interval(a, b, t)?;
    let alpha = left_weight(a, b, t);
    Ok(FieldPair::blend(solid_next, solid_prev, alpha))
}

/// Mirror image of [`interp_fluid`]: fluid endpoint states interpolated to a
/// solid micro time.
pub fn interp_solid(
    partition: &TimePartition,
    n: usize,
    fluid_prev: &FieldPair,
    fluid_next: &FieldPair,
    t: f64,
) -> Result<FieldPair, SolveError> {
    let (a, b) = (partition.macro_times[n], partition.macro_times[n + 1]);
    check_in_interval(a, b, t)?;
    let alpha = left_weight(a, b, t);
    Ok(FieldPair::blend(fluid_next, fluid_prev, alpha))
}

/// 2-point Gauss nodes on `[a, b]`: the midpoint offset by
/// `(b - a) / (2 sqrt(3))` to either side.
pub fn gauss2(a: f64, b: f64) -> [f64; 2] {
    let mid = 0.5 * (a + b);
    let off = (b - a) / (2.0 * 3.0_f64.sqrt());
    [mid - off, mid + off]
}

/// Cumulative integral of the unit source window indicator
/// `g(t) = 1 on [floor(t), floor(t) + 0.1)`.
fn source_cumulative(t: f64) -> f64 {
    let fl = t.floor();
    0.1 * fl + (t - fl).min(0.1)
}

/// Exact integral of the time source component over `[a, b]`.
pub fn source_time_integral(a: f64, b: f64) -> Result<f64, SolveError> {
    if a > b {
        return Err(SolveError::ReversedBounds { a, b });
    }
    Ok(source_cumulative(b) - source_cumulative(a))
}

/// Exact integral over `[a, b]` of the source indicator times the linear
/// weight taking values `w_a` at `a` and `w_b` at `b`.
pub fn source_weighted_integral(a: f64, b: f64, w_a: f64, w_b: f64) -> Result<f64, SolveError> {
    if a > b {
        return Err(SolveError::ReversedBounds { a, b });
    }
    if a == b {
        return Ok(0.0);
    }
    let mut total = 0.0;
    let mut j = a.floor();
    while j < b {
        let lo = a.max(j);
        let hi = b.min(j + 0.1);
        if hi > lo {
            // linear weight integrates to midpoint value times length
            let tm = 0.5 * (lo + hi);
            let w = w_a + (w_b - w_a) * (tm - a) / (b - a);
            total += (hi - lo) * w;
        }
        j += 1.0;
    }
    Ok(total)
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
enum FactorKey {
    FluidU { step: (i64, i64) },
    FluidV { step: (i64, i64) },
    Solid { step: (i64, i64) },
}

fn factor_cached(
    factors: &mut HashMap<FactorKey, Rc<SparseLu>>,
    key: FactorKey,
    build: impl FnOnce() -> Csr,
) -> Result<Rc<SparseLu>, SolveError> {
    if let Some(f) = factors.get(&key) {
        return Ok(Rc::clone(f));
    }
    let lu = Rc::new(SparseLu::factor(&build())?);
    factors.insert(key, Rc::clone(&lu));
    Ok(lu)
}

/// Puts ones on the diagonal of constrained rows so eliminated systems stay
/// regular; states remain zero there for zero right-hand sides.
fn with_dirichlet_identity(m: Csr, dirichlet: &[usize], n: usize, blocks: usize) -> Csr {
    let mut t = linalg::Triplets::new(n * blocks, n * blocks);
    t.add_csr(0, 0, 1.0, &m);
    for b in 0..blocks {
        for &d in dirichlet {
            t.push(b * n + d, b * n + d, 1.0);
        }
    }
    t.to_csr()
}

/// Sweep driver bound to one mesh/operator/partition triple. Caches one
/// sparse factorization per distinct micro step size.
pub struct FormsContext<'a> {
    pub mesh: &'a SpaceMesh,
    pub ops: &'a OperatorSet,
    pub partition: &'a TimePartition,
    factors: HashMap<FactorKey, Rc<SparseLu>>,
}

impl<'a> FormsContext<'a> {
    pub fn new(mesh: &'a SpaceMesh, ops: &'a OperatorSet, partition: &'a TimePartition) -> Self {
        Self {
            mesh,
            ops,
            partition,
            factors: HashMap::new(),
        }
    }

    /// Number of distinct micro-step factorizations currently cached.
    pub fn cached_factor_count(&self) -> usize {
        self.factors.len()
    }

    /// Runs the `M_n` sequential micro steps of the fluid subproblem on macro
    /// interval `n`, using the two solid endpoint traces for the interface
    /// data. Returns the states at the micro nodes after the start node.
    ///
    /// `extra_velocity_loads`, when given, adds one load vector per micro
    /// step to the heat equation right-hand side.
    pub fn fluid_macro_sweep(
        &mut self,
        n: usize,
        start: &FieldPair,
        solid_prev: &InterfaceTrace,
        solid_next: &InterfaceTrace,
        extra_velocity_loads: Option<&[Vec<f64>]>,
    ) -> Result<Vec<FieldPair>, SolveError> {
        let ops = self.ops;
        let mesh = self.mesh;
        let partition = self.partition;
        let pen = ops.params.penalty();
        let grid_range = partition.fluid.intervals_of_macro(n);

        let sp_full = solid_prev.expand(mesh);
        let sn_full = solid_next.expand(mesh);
        // precompute interface forcing at the macro endpoints
        let gu_prev = ops.iface_mass_fs.mul_vec(&sp_full.u);
        let gv_prev = ops.iface_mass_fs.mul_vec(&sp_full.v);
        let gu_next = ops.iface_mass_fs.mul_vec(&sn_full.u);
        let gv_next = ops.iface_mass_fs.mul_vec(&sn_full.v);

        let mut states = Vec::with_capacity(grid_range.len());
        let mut prev = start.clone();
        let mut alpha_prev = partition.left_weight(n, Subdomain::Fluid, grid_range.start);
        for (local, i) in grid_range.clone().enumerate() {
            let k = partition.fluid.step(i);
            let t_m = partition.fluid.node_times[i + 1];
            let alpha = partition.left_weight(n, Subdomain::Fluid, i + 1);
            let key_frac = partition.fluid.step_frac(i);
            let key = (key_frac.numer(), key_frac.denom());

            // displacement equation: Fu u_m = -Fu u_prev + pen * Gfs(u_s at both ends)
            let lu_u = factor_cached(&mut self.factors, FactorKey::FluidU { step: key }, || {
                with_dirichlet_identity(
                    ops.fluid_u_op.clone(),
                    &mesh.fluid.dirichlet,
                    ops.n_fluid,
                    1,
                )
            })?;
            let mut rhs_u = vec![0.0; ops.n_fluid];
            ops.fluid_u_op.mul_vec_add(-1.0, &prev.u, &mut rhs_u);
            linalg::axpy(&mut rhs_u, pen * (alpha + alpha_prev), &gu_prev);
            linalg::axpy(&mut rhs_u, pen * (2.0 - alpha - alpha_prev), &gu_next);
            let u_m = lu_u.solve(&rhs_u);

            // heat equation: (M + k/2 Fv) v_m = M v_prev - k/2 Fv v_prev + coupling + source
            let lu_v = factor_cached(&mut self.factors, FactorKey::FluidV { step: key }, || {
                let m = Csr::linear_combination(&[(1.0, &ops.mass_f), (0.5 * k, &ops.fluid_v_op)]);
                with_dirichlet_identity(m, &mesh.fluid.dirichlet, ops.n_fluid, 1)
            })?;
            let mut rhs_v = ops.mass_f.mul_vec(&prev.v);
            ops.fluid_v_op.mul_vec_add(-0.5 * k, &prev.v, &mut rhs_v);
            linalg::axpy(&mut rhs_v, 0.5 * k * pen * (alpha + alpha_prev), &gv_prev);
            linalg::axpy(&mut rhs_v, 0.5 * k * pen * (2.0 - alpha - alpha_prev), &gv_next);
            if ops.source == SourceConfig::Fluid {
                let s = source_time_integral(t_m - k, t_m)?;
                linalg::axpy(&mut rhs_v, s, &ops.load_f);
            }
            if let Some(extra) = extra_velocity_loads {
                linalg::axpy(&mut rhs_v, 1.0, &extra[local]);
            }
            let v_m = lu_v.solve(&rhs_v);

            let state = FieldPair { u: u_m, v: v_m };
            prev = state.clone();
            states.push(state);
            alpha_prev = alpha;
        }
        Ok(states)
    }

    /// Runs the `L_n` sequential micro steps of the wave subproblem on macro
    /// interval `n`. The fluid heat flux enters through the two endpoint
    /// velocity fields, interpolated linearly across the macro interval; the
    /// displacement update and velocity equation are solved as one coupled
    /// two-field system.
    pub fn solid_macro_sweep(
        &mut self,
        n: usize,
        start: &FieldPair,
        fluid_v_prev: &[f64],
        fluid_v_next: &[f64],
        extra_velocity_loads: Option<&[Vec<f64>]>,
    ) -> Result<Vec<FieldPair>, SolveError> {
        let ops = self.ops;
        let mesh = self.mesh;
        let partition = self.partition;
        let ns = ops.n_solid;
        let nu = ops.params.nu;
        let lambda = ops.params.lambda;
        let grid_range = partition.solid.intervals_of_macro(n);

        let flux_prev = ops.flux_sf.mul_vec(fluid_v_prev);
        let flux_next = ops.flux_sf.mul_vec(fluid_v_next);

        let mut states = Vec::with_capacity(grid_range.len());
        let mut prev = start.clone();
        let mut alpha_prev = partition.left_weight(n, Subdomain::Solid, grid_range.start);
        for (local, i) in grid_range.clone().enumerate() {
            let k = partition.solid.step(i);
            let t_l = partition.solid.node_times[i + 1];
            let alpha = partition.left_weight(n, Subdomain::Solid, i + 1);
            let key_frac = partition.solid.step_frac(i);
            let key = (key_frac.numer(), key_frac.denom());

            // coupled two-field system on (u, v)
            let lu = factor_cached(&mut self.factors, FactorKey::Solid { step: key }, || {
                let mut t = linalg::Triplets::new(2 * ns, 2 * ns);
                t.add_csr(0, 0, 1.0, &ops.mass_s);
                t.add_csr(0, ns, -0.5 * k, &ops.mass_s);
                t.add_csr(ns, 0, 0.5 * k * lambda, &ops.stiff_s);
                t.add_csr(ns, ns, 1.0, &ops.mass_s);
                t.add_csr(ns, ns, 0.5 * k, &ops.solid_v_op);
                for b in 0..2 {
                    for &d in &mesh.solid.dirichlet {
                        t.push(b * ns + d, b * ns + d, 1.0);
                    }
                }
                t.to_csr()
            })?;

            let mut rhs = vec![0.0; 2 * ns];
            {
                let (rhs_u, rhs_v) = rhs.split_at_mut(ns);
                ops.mass_s.mul_vec_add(1.0, &prev.u, rhs_u);
                ops.mass_s.mul_vec_add(0.5 * k, &prev.v, rhs_u);
                ops.mass_s.mul_vec_add(1.0, &prev.v, rhs_v);
                ops.stiff_s.mul_vec_add(-0.5 * k * lambda, &prev.u, rhs_v);
                ops.solid_v_op.mul_vec_add(-0.5 * k, &prev.v, rhs_v);
                linalg::axpy(rhs_v, -0.5 * k * nu * (alpha + alpha_prev), &flux_prev);
                linalg::axpy(rhs_v, -0.5 * k * nu * (2.0 - alpha - alpha_prev), &flux_next);
                if ops.source == SourceConfig::Solid {
                    let s = source_time_integral(t_l - k, t_l)?;
                    linalg::axpy(rhs_v, s, &ops.load_s);
                }
                if let Some(extra) = extra_velocity_loads {
                    linalg::axpy(rhs_v, 1.0, &extra[local]);
                }
            }
            let x = lu.solve(&rhs);
            let state = FieldPair {
                u: x[..ns].to_vec(),
                v: x[ns..].to_vec(),
            };
            prev = state.clone();
            states.push(state);
            alpha_prev = alpha;
        }
        Ok(states)
    }
}

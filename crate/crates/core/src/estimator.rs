//! Localized temporal error indicators built from primal and adjoint
//! residuals weighted with reconstruction differences.
//!
//! The primal weight is a piecewise-linear extrapolation of the
//! piecewise-constant adjoint through neighboring interval midpoints; the
//! adjoint weight is a patchwise-quadratic interpolation of the
//! piecewise-linear primal. All residual time integrals are evaluated
//! exactly: 2-point Gauss per micro interval for the polynomial parts
//! (degree <= 3), analytic overlap integrals for the source window, and
//! midpoint sums per sub-segment for the cross-mesh coupling terms.

use crate::adjoint::{AdjointTrajectory, GoalFunctional, GoalKind};
use crate::error::SolveError;
use crate::forms::{gauss2, source_weighted_integral, FieldPair, PrimalTrajectory};
use crate::linalg;
use crate::operators::{OperatorSet, SourceConfig};
use crate::timegrid::{MicroMesh, Patch, TimePartition};
use crate::Subdomain;

/// Time-dependent weight for one subdomain, stored per micro interval as a
/// quadratic through samples at the left endpoint, midpoint and right
/// endpoint, plus the values at the initial node for the initial terms.
///
/// Component convention as in [`FieldPair`]: `u` weights displacement-tested
/// equations, `v` weights velocity-tested equations.
#[derive(Debug, Clone)]
pub struct IntervalWeight {
    pub u: Vec<[Vec<f64>; 3]>,
    pub v: Vec<[Vec<f64>; 3]>,
    pub initial_u: Vec<f64>,
    pub initial_v: Vec<f64>,
}

fn lagrange3(xi: f64) -> [f64; 3] {
    [
        2.0 * xi * xi - 3.0 * xi + 1.0,
        4.0 * xi - 4.0 * xi * xi,
        2.0 * xi * xi - xi,
    ]
}

fn combine3(samples: &[Vec<f64>; 3], basis: [f64; 3]) -> Vec<f64> {
    let n = samples[0].len();
    let mut out = vec![0.0; n];
    for (b, s) in basis.iter().zip(samples) {
        linalg::axpy(&mut out, *b, s);
    }
    out
}

impl IntervalWeight {
    pub fn intervals(&self) -> usize {
        self.u.len()
    }

    /// Weight value inside interval `i` at relative position `xi` in [0, 1].
    pub fn eval_u(&self, i: usize, xi: f64) -> Vec<f64> {
        combine3(&self.u[i], lagrange3(xi))
    }

    pub fn eval_v(&self, i: usize, xi: f64) -> Vec<f64> {
        combine3(&self.v[i], lagrange3(xi))
    }

    /// Nodal value for continuous weights: the left sample of the interval
    /// starting at the node, or the right sample of the last interval.
    pub fn node_u(&self, node: usize) -> &[f64] {
        if node < self.u.len() {
            &self.u[node][0]
        } else {
            &self.u[self.u.len() - 1][2]
        }
    }

    pub fn node_v(&self, node: usize) -> &[f64] {
        if node < self.v.len() {
            &self.v[node][0]
        } else {
            &self.v[self.v.len() - 1][2]
        }
    }

    /// Pointwise difference `self - other`.
    pub fn sub(&self, other: &IntervalWeight) -> IntervalWeight {
        let diff3 = |a: &[ [Vec<f64>; 3] ], b: &[ [Vec<f64>; 3] ]| {
            a.iter()
                .zip(b)
                .map(|(x, y)| {
                    [
                        linalg::sub(&x[0], &y[0]),
                        linalg::sub(&x[1], &y[1]),
                        linalg::sub(&x[2], &y[2]),
                    ]
                })
                .collect()
        };
        IntervalWeight {
            u: diff3(&self.u, &other.u),
            v: diff3(&self.v, &other.v),
            initial_u: linalg::sub(&self.initial_u, &other.initial_u),
            initial_v: linalg::sub(&self.initial_v, &other.initial_v),
        }
    }

    /// Piecewise-constant weight from per-interval states plus initial-node
    /// values.
    pub fn from_piecewise_constant(states: &[FieldPair], initial: &FieldPair) -> IntervalWeight {
        IntervalWeight {
            u: states
                .iter()
                .map(|s| [s.u.clone(), s.u.clone(), s.u.clone()])
                .collect(),
            v: states
                .iter()
                .map(|s| [s.v.clone(), s.v.clone(), s.v.clone()])
                .collect(),
            initial_u: initial.u.clone(),
            initial_v: initial.v.clone(),
        }
    }

    /// Continuous piecewise-linear weight through nodal states.
    pub fn from_nodal(states: &[FieldPair]) -> IntervalWeight {
        let mid = |a: &[f64], b: &[f64]| -> Vec<f64> {
            a.iter().zip(b).map(|(x, y)| 0.5 * (x + y)).collect()
        };
        let n_int = states.len() - 1;
        IntervalWeight {
            u: (0..n_int)
                .map(|i| {
                    [
                        states[i].u.clone(),
                        mid(&states[i].u, &states[i + 1].u),
                        states[i + 1].u.clone(),
                    ]
                })
                .collect(),
            v: (0..n_int)
                .map(|i| {
                    [
                        states[i].v.clone(),
                        mid(&states[i].v, &states[i + 1].v),
                        states[i + 1].v.clone(),
                    ]
                })
                .collect(),
            initial_u: states[0].u.clone(),
            initial_v: states[0].v.clone(),
        }
    }
}

/// Linear extrapolation of the piecewise-constant adjoint: on interval `i`
/// the line through the neighboring interval values anchored at their
/// midpoints; boundary intervals use the two nearest midpoints one-sidedly.
pub fn reconstruct_adjoint(mesh: &MicroMesh, states: &[FieldPair]) -> IntervalWeight {
    let count = mesh.interval_count();
    assert_eq!(states.len(), count);
    let mut u = Vec::with_capacity(count);
    let mut v = Vec::with_capacity(count);
    let anchors = |i: usize| -> (usize, usize) {
        if count == 1 {
            (0, 0)
        } else if i == 0 {
            (0, 1)
        } else if i == count - 1 {
            (count - 2, count - 1)
        } else {
            (i - 1, i + 1)
        }
    };
    for i in 0..count {
        let (lo, hi) = anchors(i);
        let (t_lo, t_hi) = (mesh.interval_midpoint(lo), mesh.interval_midpoint(hi));
        let line = |field: fn(&FieldPair) -> &Vec<f64>, t: f64| -> Vec<f64> {
            if lo == hi {
                return field(&states[lo]).clone();
            }
            let c = (t - t_lo) / (t_hi - t_lo);
            field(&states[lo])
                .iter()
                .zip(field(&states[hi]))
                .map(|(a, b)| (1.0 - c) * a + c * b)
                .collect()
        };
        let (a, b) = (mesh.node_times[i], mesh.node_times[i + 1]);
        let tm = 0.5 * (a + b);
        u.push([
            line(|s| &s.u, a),
            line(|s| &s.u, tm),
            line(|s| &s.u, b),
        ]);
        v.push([
            line(|s| &s.v, a),
            line(|s| &s.v, tm),
            line(|s| &s.v, b),
        ]);
    }
    let initial_u = u[0][0].clone();
    let initial_v = v[0][0].clone();
    IntervalWeight {
        u,
        v,
        initial_u,
        initial_v,
    }
}

/// Patchwise-quadratic interpolation of the piecewise-linear primal: on each
/// patch the unique quadratic through the three nodal states. A trailing
/// singleton patch borrows the nearest three nodes; a mesh with fewer than
/// three nodes degenerates to the linear interpolant.
pub fn reconstruct_primal(mesh: &MicroMesh, states: &[FieldPair]) -> IntervalWeight {
    let count = mesh.interval_count();
    assert_eq!(states.len(), count + 1);
    let mut u = Vec::with_capacity(count);
    let mut v = Vec::with_capacity(count);
    for i in 0..count {
        let patch = mesh.patches[mesh.patch_of(i)];
        // the three supporting nodes of the quadratic
        let base = match patch {
            Patch::Pair(first) => first,
            Patch::Tail(first) => first.saturating_sub(1),
        };
        let nodes = [base, base + 1, (base + 2).min(count)];
        let eval = |field: fn(&FieldPair) -> &Vec<f64>, t: f64| -> Vec<f64> {
            if nodes[1] == nodes[2] {
                // fewer than three nodes: fall back to the nodal interpolant
                let (a, b) = (mesh.node_times[i], mesh.node_times[i + 1]);
                let c = (t - a) / (b - a);
                return field(&states[i])
                    .iter()
                    .zip(field(&states[i + 1]))
                    .map(|(p, q)| (1.0 - c) * p + c * q)
                    .collect();
            }
            let ts = nodes.map(|j| mesh.node_times[j]);
            let l0 = (t - ts[1]) * (t - ts[2]) / ((ts[0] - ts[1]) * (ts[0] - ts[2]));
            let l1 = (t - ts[0]) * (t - ts[2]) / ((ts[1] - ts[0]) * (ts[1] - ts[2]));
            let l2 = (t - ts[0]) * (t - ts[1]) / ((ts[2] - ts[0]) * (ts[2] - ts[1]));
            let mut out = vec![0.0; field(&states[0]).len()];
            linalg::axpy(&mut out, l0, field(&states[nodes[0]]));
            linalg::axpy(&mut out, l1, field(&states[nodes[1]]));
            linalg::axpy(&mut out, l2, field(&states[nodes[2]]));
            out
        };
        let (a, b) = (mesh.node_times[i], mesh.node_times[i + 1]);
        let tm = 0.5 * (a + b);
        u.push([eval(|s| &s.u, a), eval(|s| &s.u, tm), eval(|s| &s.u, b)]);
        v.push([eval(|s| &s.v, a), eval(|s| &s.v, tm), eval(|s| &s.v, b)]);
    }
    let initial_u = u[0][0].clone();
    let initial_v = v[0][0].clone();
    IntervalWeight {
        u,
        v,
        initial_u,
        initial_v,
    }
}

/// Localized indicators of one estimator evaluation.
#[derive(Debug, Clone)]
pub struct ErrorBreakdown {
    /// Primal indicators per fluid / solid micro interval.
    pub theta_f: Vec<f64>,
    pub theta_s: Vec<f64>,
    /// Adjoint indicators per fluid / solid micro interval.
    pub vartheta_f: Vec<f64>,
    pub vartheta_s: Vec<f64>,
}

impl ErrorBreakdown {
    pub fn theta_f_total(&self) -> f64 {
        self.theta_f.iter().sum()
    }
    pub fn theta_s_total(&self) -> f64 {
        self.theta_s.iter().sum()
    }
    pub fn vartheta_f_total(&self) -> f64 {
        self.vartheta_f.iter().sum()
    }
    pub fn vartheta_s_total(&self) -> f64 {
        self.vartheta_s.iter().sum()
    }
}

/// Signed total estimate: the sum of the four indicator totals.
pub fn total_estimate(bd: &ErrorBreakdown) -> f64 {
    bd.theta_f_total() + bd.theta_s_total() + bd.vartheta_f_total() + bd.vartheta_s_total()
}

/// Absolute-value average with the 1/(2M) and 1/(2L) weights; the marking
/// threshold.
pub fn indicator_average(bd: &ErrorBreakdown) -> f64 {
    let m = bd.theta_f.len() as f64;
    let l = bd.theta_s.len() as f64;
    let fluid: f64 = bd
        .theta_f
        .iter()
        .zip(&bd.vartheta_f)
        .map(|(t, v)| t.abs() + v.abs())
        .sum();
    let solid: f64 = bd
        .theta_s
        .iter()
        .zip(&bd.vartheta_s)
        .map(|(t, v)| t.abs() + v.abs())
        .sum();
    fluid / (2.0 * m) + solid / (2.0 * l)
}

/// Estimator effectivity `sigma / (J_ref - J)`.
pub fn effectivity(sigma: f64, j_ref: f64, j_value: f64) -> Result<f64, SolveError> {
    let denom = j_ref - j_value;
    if denom == 0.0 {
        return Err(SolveError::ZeroErrorDenominator);
    }
    Ok(sigma / denom)
}

/// Reference value from three goal values on nested uniform meshes with step
/// ratio 2, ordered coarse to fine.
#[derive(Debug, Clone, Copy)]
pub struct Extrapolation {
    pub j_ref: f64,
    pub rate: f64,
    /// True when the rate solve was ill-conditioned and the fixed
    /// second-order fallback was used.
    pub fell_back: bool,
}

pub fn extrapolate_reference(coarse: f64, mid: f64, fine: f64) -> Extrapolation {
    let d1 = mid - coarse;
    let d2 = fine - mid;
    let ratio = d1 / d2;
    if ratio.is_finite() && ratio > 1.0 {
        Extrapolation {
            j_ref: fine + d2 / (ratio - 1.0),
            rate: ratio.log2(),
            fell_back: false,
        }
    } else {
        Extrapolation {
            j_ref: fine + d2 / 3.0,
            rate: 2.0,
            fell_back: true,
        }
    }
}

struct Blend<'a> {
    prev: &'a [f64],
    next: &'a [f64],
}

impl Blend<'_> {
    fn at(&self, alpha: f64) -> Vec<f64> {
        self.prev
            .iter()
            .zip(self.next)
            .map(|(p, q)| alpha * p + (1.0 - alpha) * q)
            .collect()
    }
}

/// Shared geometry helpers for one subdomain's localized residual loop.
struct SubdomainCtx<'a> {
    partition: &'a TimePartition,
    mesh: &'a MicroMesh,
    macro_of: Vec<usize>,
}

impl<'a> SubdomainCtx<'a> {
    fn new(partition: &'a TimePartition, s: Subdomain) -> Self {
        let mesh = partition.mesh(s);
        let mut macro_of = vec![0; mesh.interval_count()];
        for n in 0..partition.n_macro() {
            for i in mesh.intervals_of_macro(n) {
                macro_of[i] = n;
            }
        }
        Self {
            partition,
            mesh,
            macro_of,
        }
    }

    /// Left macro-endpoint interpolation weight at an arbitrary time.
    fn alpha(&self, n: usize, t: f64) -> f64 {
        let (a, b) = (self.partition.macro_times[n], self.partition.macro_times[n + 1]);
        (b - t) / (b - a)
    }

    /// Sub-segments of `(a, b)` split at interior nodes of the other mesh,
    /// with the index of the other-mesh interval containing each segment.
    fn foreign_segments(&self, other: &MicroMesh, a_frac: crate::timegrid::TimeFrac, b_frac: crate::timegrid::TimeFrac) -> Vec<(f64, f64, usize)> {
        let lo = other.node_fracs.partition_point(|f| *f <= a_frac);
        let hi = other.node_fracs.partition_point(|f| *f < b_frac);
        let horizon = self.partition.horizon;
        let mut cuts = vec![a_frac.to_f64() * horizon];
        for f in &other.node_fracs[lo..hi] {
            cuts.push(f.to_f64() * horizon);
        }
        cuts.push(b_frac.to_f64() * horizon);
        // the other-mesh interval holding the first segment
        let mut idx = lo.saturating_sub(1).min(other.interval_count() - 1);
        let mut segments = Vec::with_capacity(cuts.len() - 1);
        for w in cuts.windows(2) {
            segments.push((w[0], w[1], idx));
            idx = (idx + 1).min(other.interval_count() - 1);
        }
        segments
    }
}

/// Localized primal residual against per-subdomain weights: the fluid and
/// solid residual parts restricted to each micro interval.
pub fn primal_residual_localized(
    ops: &OperatorSet,
    partition: &TimePartition,
    u: &PrimalTrajectory,
    weight_f: &IntervalWeight,
    weight_s: &IntervalWeight,
) -> Result<(Vec<f64>, Vec<f64>), SolveError> {
    let pen = ops.params.penalty();
    let nu = ops.params.nu;
    let lambda = ops.params.lambda;

    // fluid residual per fluid interval
    let ctx = SubdomainCtx::new(partition, Subdomain::Fluid);
    let mut rho_f = vec![0.0; ctx.mesh.interval_count()];
    for i in 0..ctx.mesh.interval_count() {
        let n = ctx.macro_of[i];
        let (a, b) = (ctx.mesh.node_times[i], ctx.mesh.node_times[i + 1]);
        let k = ctx.mesh.step(i);
        let mut acc = 0.0;

        // forcing paired with the velocity weight
        if ops.source == SourceConfig::Fluid {
            let wa = linalg::dot(&ops.load_f, &weight_f.eval_v(i, 0.0));
            let wm = linalg::dot(&ops.load_f, &weight_f.eval_v(i, 0.5));
            let wb = linalg::dot(&ops.load_f, &weight_f.eval_v(i, 1.0));
            // quadratic weight: split at the midpoint so each half is
            // resolved by the linear overlap rule exactly when the weight is
            // linear; Simpson-style sampling keeps quadratics exact too
            acc += source_quadratic_integral(a, b, wa, wm, wb)?;
        }

        // time derivative of the velocity against the weight average
        let dv = linalg::sub(&u.fluid[i + 1].v, &u.fluid[i].v);
        let wavg = simpson_average(&weight_f.v[i]);
        acc -= linalg::dot(&ops.mass_f.mul_vec(&dv), &wavg);

        // stiffness-type terms at the two Gauss points
        let solid_prev = &u.solid[partition.solid.macro_index[n]];
        let solid_next = &u.solid[partition.solid.macro_index[n + 1]];
        let alpha_a = partition.left_weight(n, Subdomain::Fluid, i);
        let alpha_b = partition.left_weight(n, Subdomain::Fluid, i + 1);
        for g in gauss2(a, b) {
            let xi = (g - a) / k;
            let c1 = xi;
            let uf: Vec<f64> = u.fluid[i]
                .u
                .iter()
                .zip(&u.fluid[i + 1].u)
                .map(|(p, q)| (1.0 - c1) * p + c1 * q)
                .collect();
            let vf: Vec<f64> = u.fluid[i]
                .v
                .iter()
                .zip(&u.fluid[i + 1].v)
                .map(|(p, q)| (1.0 - c1) * p + c1 * q)
                .collect();
            let alpha = (1.0 - xi) * alpha_a + xi * alpha_b;
            let us = Blend { prev: &solid_prev.u, next: &solid_next.u }.at(alpha);
            let vs = Blend { prev: &solid_prev.v, next: &solid_next.v }.at(alpha);

            let mut row_v = ops.fluid_v_op.mul_vec(&vf);
            ops.iface_mass_fs.mul_vec_add(-pen, &vs, &mut row_v);
            let mut row_u = ops.fluid_u_op.mul_vec(&uf);
            ops.iface_mass_fs.mul_vec_add(-pen, &us, &mut row_u);
            acc -= 0.5
                * k
                * (linalg::dot(&row_v, &weight_f.eval_v(i, xi))
                    + linalg::dot(&row_u, &weight_f.eval_u(i, xi)));
        }

        // initial term, attributed to the first interval
        if i == 0 {
            acc -= linalg::dot(&ops.mass_f.mul_vec(&u.fluid[0].v), &weight_f.initial_v);
        }
        rho_f[i] = acc;
    }

    // solid residual per solid interval
    let ctx = SubdomainCtx::new(partition, Subdomain::Solid);
    let mut rho_s = vec![0.0; ctx.mesh.interval_count()];
    for i in 0..ctx.mesh.interval_count() {
        let n = ctx.macro_of[i];
        let (a, b) = (ctx.mesh.node_times[i], ctx.mesh.node_times[i + 1]);
        let k = ctx.mesh.step(i);
        let mut acc = 0.0;

        if ops.source == SourceConfig::Solid {
            let wa = linalg::dot(&ops.load_s, &weight_s.eval_v(i, 0.0));
            let wm = linalg::dot(&ops.load_s, &weight_s.eval_v(i, 0.5));
            let wb = linalg::dot(&ops.load_s, &weight_s.eval_v(i, 1.0));
            acc += source_quadratic_integral(a, b, wa, wm, wb)?;
        }

        let dv = linalg::sub(&u.solid[i + 1].v, &u.solid[i].v);
        let du = linalg::sub(&u.solid[i + 1].u, &u.solid[i].u);
        acc -= linalg::dot(&ops.mass_s.mul_vec(&dv), &simpson_average(&weight_s.v[i]));
        acc -= linalg::dot(&ops.mass_s.mul_vec(&du), &simpson_average(&weight_s.u[i]));

        let fluid_prev = &u.fluid[partition.fluid.macro_index[n]];
        let fluid_next = &u.fluid[partition.fluid.macro_index[n + 1]];
        let alpha_a = partition.left_weight(n, Subdomain::Solid, i);
        let alpha_b = partition.left_weight(n, Subdomain::Solid, i + 1);
        for g in gauss2(a, b) {
            let xi = (g - a) / k;
            let us: Vec<f64> = u.solid[i]
                .u
                .iter()
                .zip(&u.solid[i + 1].u)
                .map(|(p, q)| (1.0 - xi) * p + xi * q)
                .collect();
            let vs: Vec<f64> = u.solid[i]
                .v
                .iter()
                .zip(&u.solid[i + 1].v)
                .map(|(p, q)| (1.0 - xi) * p + xi * q)
                .collect();
            let alpha = (1.0 - xi) * alpha_a + xi * alpha_b;
            let vf = Blend { prev: &fluid_prev.v, next: &fluid_next.v }.at(alpha);

            let mut row_v = ops.stiff_s.mul_vec(&us);
            linalg::scale(&mut row_v, lambda);
            ops.solid_v_op.mul_vec_add(1.0, &vs, &mut row_v);
            ops.flux_sf.mul_vec_add(nu, &vf, &mut row_v);
            let mut row_u = ops.mass_s.mul_vec(&vs);
            linalg::scale(&mut row_u, -1.0);
            acc -= 0.5
                * k
                * (linalg::dot(&row_v, &weight_s.eval_v(i, xi))
                    + linalg::dot(&row_u, &weight_s.eval_u(i, xi)));
        }

        if i == 0 {
            acc -= linalg::dot(&ops.mass_s.mul_vec(&u.solid[0].v), &weight_s.initial_v);
            acc -= linalg::dot(&ops.mass_s.mul_vec(&u.solid[0].u), &weight_s.initial_u);
        }
        rho_s[i] = acc;
    }
    Ok((rho_f, rho_s))
}

/// Integral over the interval average of a quadratic from its three samples
/// (Simpson weights), exact for polynomials up to degree 3.
fn simpson_average(samples: &[Vec<f64>; 3]) -> Vec<f64> {
    let n = samples[0].len();
    let mut out = vec![0.0; n];
    linalg::axpy(&mut out, 1.0 / 6.0, &samples[0]);
    linalg::axpy(&mut out, 4.0 / 6.0, &samples[1]);
    linalg::axpy(&mut out, 1.0 / 6.0, &samples[2]);
    out
}

/// Exact integral of the source indicator against a quadratic weight given
/// by its endpoint and midpoint values: the quadratic is integrated as two
/// linear halves plus the bubble correction, each handled analytically.
fn source_quadratic_integral(a: f64, b: f64, wa: f64, wm: f64, wb: f64) -> Result<f64, SolveError> {
    // decompose w = linear(wa..wb) + bubble * (wm - (wa+wb)/2), where the
    // bubble is 4 xi (1-xi); integrate the bubble part exactly as well by
    // splitting it into two linear halves on [a, mid] and [mid, b]
    let linear = source_weighted_integral(a, b, wa, wb)?;
    let c = wm - 0.5 * (wa + wb);
    if c == 0.0 {
        return Ok(linear);
    }
    // bubble(t) restricted to each half-interval is quadratic again; use
    // recursive bisection down to a tolerance on the window boundaries
    let bubble = source_bubble_integral(a, b, a, b, c, 0);
    Ok(linear + bubble)
}

/// Integral of `c * bubble(t)` over `[lo, hi]` where the bubble is
/// `4 xi (1 - xi)` on the enclosing interval `[a, b]`, against the source
/// indicator. The indicator is constant except at multiples of 1 and
/// `floor + 0.1`; bisect until each piece sees a constant indicator, then
/// integrate the quadratic exactly.
fn source_bubble_integral(a: f64, b: f64, lo: f64, hi: f64, c: f64, depth: usize) -> f64 {
    let active = |t: f64| -> bool { t - t.floor() < 0.1 };
    let window_edge_inside = hi - lo > 0.9 || {
        let fl = lo.floor();
        let edges = [fl, fl + 0.1, fl + 1.0, fl + 1.1];
        edges.iter().any(|&e| lo < e && e < hi)
    };
    if !window_edge_inside || depth > 60 {
        if !active(0.5 * (lo + hi)) {
            return 0.0;
        }
        // exact integral of the bubble over [lo, hi]
        let xi = |t: f64| (t - a) / (b - a);
        let anti = |t: f64| {
            let x = xi(t);
            (b - a) * (2.0 * x * x - 4.0 * x * x * x / 3.0)
        };
        return c * (anti(hi) - anti(lo));
    }
    let mid = 0.5 * (lo + hi);
    source_bubble_integral(a, b, lo, mid, c, depth + 1) + source_bubble_integral(a, b, mid, hi, c, depth + 1)
}

/// Localized adjoint residual against per-subdomain weights: the fluid and
/// solid parts of `J'(weight) - B(weight)(Z)` restricted to each micro
/// interval.
pub fn adjoint_residual_localized(
    ops: &OperatorSet,
    partition: &TimePartition,
    u: &PrimalTrajectory,
    z: &AdjointTrajectory,
    goal: &GoalFunctional,
    weight_f: &IntervalWeight,
    weight_s: &IntervalWeight,
) -> Result<(Vec<f64>, Vec<f64>), SolveError> {
    let pen = ops.params.penalty();
    let nu = ops.params.nu;
    let lambda = ops.params.lambda;
    let coef = goal.coefficient(&ops.params);

    // fluid part per fluid interval
    let ctx = SubdomainCtx::new(partition, Subdomain::Fluid);
    let mut rho_f = vec![0.0; ctx.mesh.interval_count()];
    for i in 0..ctx.mesh.interval_count() {
        let n = ctx.macro_of[i];
        let (a, b) = (ctx.mesh.node_times[i], ctx.mesh.node_times[i + 1]);
        let k = ctx.mesh.step(i);
        let mut acc = 0.0;

        // goal derivative part
        if goal.kind == GoalKind::FluidVelocityGradient {
            for g in gauss2(a, b) {
                let xi = (g - a) / k;
                let vf: Vec<f64> = u.fluid[i]
                    .v
                    .iter()
                    .zip(&u.fluid[i + 1].v)
                    .map(|(p, q)| (1.0 - xi) * p + xi * q)
                    .collect();
                let wv = ops.goal_stiff_f.mul_vec(&vf);
                acc += 0.5 * k * 2.0 * coef * linalg::dot(&wv, &weight_f.eval_v(i, xi));
            }
        }

        // jump of the weight against the interval dual value
        let dwv = linalg::sub(&weight_f.eval_v(i, 1.0), &weight_f.eval_v(i, 0.0));
        acc -= linalg::dot(&ops.mass_f.mul_vec(&dwv), &z.fluid[i].v);

        // stiffness-type terms: trial weight against the constant dual
        for g in gauss2(a, b) {
            let xi = (g - a) / k;
            let row_v = ops.fluid_v_op.mul_vec(&weight_f.eval_v(i, xi));
            let row_u = ops.fluid_u_op.mul_vec(&weight_f.eval_u(i, xi));
            acc -= 0.5
                * k
                * (linalg::dot(&row_v, &z.fluid[i].v) + linalg::dot(&row_u, &z.fluid[i].u));
        }

        // flux coupling living on the solid mesh, restricted to this interval
        let eta_prev = weight_f.node_v(partition.fluid.macro_index[n]);
        let eta_next = weight_f.node_v(partition.fluid.macro_index[n + 1]);
        let blend = Blend { prev: eta_prev, next: eta_next };
        for (lo, hi, j) in ctx.foreign_segments(
            &partition.solid,
            ctx.mesh.node_fracs[i],
            ctx.mesh.node_fracs[i + 1],
        ) {
            let alpha = ctx.alpha(n, 0.5 * (lo + hi));
            let eta = blend.at(alpha);
            let flux = ops.flux_sf.mul_vec(&eta);
            acc -= (hi - lo) * nu * linalg::dot(&flux, &z.solid[j].v);
        }

        if i == 0 {
            acc -= linalg::dot(
                &ops.mass_f.mul_vec(&weight_f.initial_v),
                &z.initial_fluid.v,
            );
        }
        rho_f[i] = acc;
    }

    // solid part per solid interval
    let ctx = SubdomainCtx::new(partition, Subdomain::Solid);
    let mut rho_s = vec![0.0; ctx.mesh.interval_count()];
    for i in 0..ctx.mesh.interval_count() {
        let n = ctx.macro_of[i];
        let (a, b) = (ctx.mesh.node_times[i], ctx.mesh.node_times[i + 1]);
        let k = ctx.mesh.step(i);
        let mut acc = 0.0;

        if goal.kind == GoalKind::SolidDisplacementGradient {
            for g in gauss2(a, b) {
                let xi = (g - a) / k;
                let us: Vec<f64> = u.solid[i]
                    .u
                    .iter()
                    .zip(&u.solid[i + 1].u)
                    .map(|(p, q)| (1.0 - xi) * p + xi * q)
                    .collect();
                let wu = ops.goal_stiff_s.mul_vec(&us);
                acc += 0.5 * k * 2.0 * coef * linalg::dot(&wu, &weight_s.eval_u(i, xi));
            }
        }

        let dwv = linalg::sub(&weight_s.eval_v(i, 1.0), &weight_s.eval_v(i, 0.0));
        let dwu = linalg::sub(&weight_s.eval_u(i, 1.0), &weight_s.eval_u(i, 0.0));
        acc -= linalg::dot(&ops.mass_s.mul_vec(&dwv), &z.solid[i].v);
        acc -= linalg::dot(&ops.mass_s.mul_vec(&dwu), &z.solid[i].u);

        for g in gauss2(a, b) {
            let xi = (g - a) / k;
            let wu = weight_s.eval_u(i, xi);
            let wv = weight_s.eval_v(i, xi);
            let mut row_v = ops.stiff_s.mul_vec(&wu);
            linalg::scale(&mut row_v, lambda);
            ops.solid_v_op.mul_vec_add(1.0, &wv, &mut row_v);
            let mut row_u = ops.mass_s.mul_vec(&wv);
            linalg::scale(&mut row_u, -1.0);
            acc -= 0.5
                * k
                * (linalg::dot(&row_v, &z.solid[i].v) + linalg::dot(&row_u, &z.solid[i].u));
        }

        // penalty coupling living on the fluid mesh, restricted here
        let xi_prev = weight_s.node_u(partition.solid.macro_index[n]);
        let xi_next = weight_s.node_u(partition.solid.macro_index[n + 1]);
        let eta_prev = weight_s.node_v(partition.solid.macro_index[n]);
        let eta_next = weight_s.node_v(partition.solid.macro_index[n + 1]);
        let blend_u = Blend { prev: xi_prev, next: xi_next };
        let blend_v = Blend { prev: eta_prev, next: eta_next };
        for (lo, hi, j) in ctx.foreign_segments(
            &partition.fluid,
            ctx.mesh.node_fracs[i],
            ctx.mesh.node_fracs[i + 1],
        ) {
            let alpha = ctx.alpha(n, 0.5 * (lo + hi));
            let gu = ops.iface_mass_fs.mul_vec(&blend_u.at(alpha));
            let gv = ops.iface_mass_fs.mul_vec(&blend_v.at(alpha));
            acc += (hi - lo)
                * pen
                * (linalg::dot(&gu, &z.fluid[j].u) + linalg::dot(&gv, &z.fluid[j].v));
        }

        if i == 0 {
            acc -= linalg::dot(
                &ops.mass_s.mul_vec(&weight_s.initial_v),
                &z.initial_solid.v,
            );
            acc -= linalg::dot(
                &ops.mass_s.mul_vec(&weight_s.initial_u),
                &z.initial_solid.u,
            );
        }
        rho_s[i] = acc;
    }
    Ok((rho_f, rho_s))
}

/// Primal indicators: half the localized primal residual weighted with the
/// reconstruction difference of the adjoint.
pub fn primal_indicators(
    ops: &OperatorSet,
    partition: &TimePartition,
    u: &PrimalTrajectory,
    z: &AdjointTrajectory,
) -> Result<(Vec<f64>, Vec<f64>), SolveError> {
    let wf = reconstruct_adjoint(&partition.fluid, &z.fluid)
        .sub(&IntervalWeight::from_piecewise_constant(&z.fluid, &z.initial_fluid));
    let ws = reconstruct_adjoint(&partition.solid, &z.solid)
        .sub(&IntervalWeight::from_piecewise_constant(&z.solid, &z.initial_solid));
    let (mut f, mut s) = primal_residual_localized(ops, partition, u, &wf, &ws)?;
    for x in f.iter_mut().chain(s.iter_mut()) {
        *x *= 0.5;
    }
    Ok((f, s))
}

/// Adjoint indicators: half the localized adjoint residual weighted with the
/// reconstruction difference of the primal.
pub fn adjoint_indicators(
    ops: &OperatorSet,
    partition: &TimePartition,
    u: &PrimalTrajectory,
    z: &AdjointTrajectory,
    goal: &GoalFunctional,
) -> Result<(Vec<f64>, Vec<f64>), SolveError> {
    let wf = reconstruct_primal(&partition.fluid, &u.fluid)
        .sub(&IntervalWeight::from_nodal(&u.fluid));
    let ws = reconstruct_primal(&partition.solid, &u.solid)
        .sub(&IntervalWeight::from_nodal(&u.solid));
    let (mut f, mut s) = adjoint_residual_localized(ops, partition, u, z, goal, &wf, &ws)?;
    for x in f.iter_mut().chain(s.iter_mut()) {
        *x *= 0.5;
    }
    Ok((f, s))
}

/// Full estimator evaluation.
pub fn estimate(
    ops: &OperatorSet,
    partition: &TimePartition,
    u: &PrimalTrajectory,
    z: &AdjointTrajectory,
    goal: &GoalFunctional,
) -> Result<ErrorBreakdown, SolveError> {
    let (theta_f, theta_s) = primal_indicators(ops, partition, u, z)?;
    let (vartheta_f, vartheta_s) = adjoint_indicators(ops, partition, u, z, goal)?;
    Ok(ErrorBreakdown {
        theta_f,
        theta_s,
        vartheta_f,
        vartheta_s,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adjoint::{goal_derivative_load, solve_adjoint, AdjointCoupling};
    use crate::mesh::{build_domain_mesh, SpaceMesh};
    use crate::operators::assemble_operators;
    use crate::params::PhysicalParams;
    use crate::primal::{CoupledState, DecouplerConfig, DecouplingMethod, PrimalSolver};
    use crate::timegrid::uniform_partition;

    fn setup(h: f64, source: SourceConfig) -> (SpaceMesh, OperatorSet) {
        let mesh = build_domain_mesh(h).unwrap();
        let p = PhysicalParams { h, ..Default::default() };
        let ops = assemble_operators(&mesh, &p, source);
        (mesh, ops)
    }

    fn pseudo_random(seed: u64, n: usize) -> Vec<f64> {
        let mut state = seed.wrapping_mul(0x9e3779b97f4a7c15).wrapping_add(7);
        (0..n)
            .map(|_| {
                state ^= state << 13;
                state ^= state >> 7;
                state ^= state << 17;
                (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
            })
            .collect()
    }

    fn random_pair(mesh: &SpaceMesh, s: Subdomain, seed: u64) -> FieldPair {
        let grid = mesh.grid(s);
        let mut p = FieldPair {
            u: pseudo_random(seed, grid.n_nodes()),
            v: pseudo_random(seed + 1, grid.n_nodes()),
        };
        for &d in &grid.dirichlet {
            p.u[d] = 0.0;
            p.v[d] = 0.0;
        }
        p
    }

    // synthetic single-component meshes for the reconstruction examples
    fn line_mesh(times: &[f64], patches: Vec<Patch>) -> MicroMesh {
        let horizon = *times.last().unwrap();
        MicroMesh {
            horizon,
            node_fracs: times
                .iter()
                .map(|t| crate::timegrid::TimeFrac::new((t * 840.0).round() as i64, (840.0 * horizon).round() as i64))
                .collect(),
            node_times: times.to_vec(),
            macro_index: vec![0, times.len() - 1],
            patches,
        }
    }

    fn scalar_states(values: &[f64]) -> Vec<FieldPair> {
        values
            .iter()
            .map(|&v| FieldPair {
                u: vec![v],
                v: vec![v],
            })
            .collect()
    }

    #[test]
    fn adjoint_reconstruction_of_constants_is_constant() {
        let mesh = line_mesh(&[0.0, 0.5, 1.0, 1.5, 2.0], vec![Patch::Pair(0), Patch::Pair(2)]);
        let z = scalar_states(&[3.0, 3.0, 3.0, 3.0]);
        let r = reconstruct_adjoint(&mesh, &z);
        for i in 0..4 {
            for s in 0..3 {
                assert!((r.v[i][s][0] - 3.0).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn adjoint_reconstruction_reproduces_linear_midpoint_samples() {
        // z_i sampled from 2t + 1 at interval midpoints 0.25, 0.75, ...
        let times = [0.0, 0.5, 1.0, 1.5, 2.0];
        let mesh = line_mesh(&times, vec![Patch::Pair(0), Patch::Pair(2)]);
        let f = |t: f64| 2.0 * t + 1.0;
        let z = scalar_states(&[f(0.25), f(0.75), f(1.25), f(1.75)]);
        let r = reconstruct_adjoint(&mesh, &z);
        for i in 1..3 {
            // interior intervals reproduce the line exactly
            let (a, b) = (times[i], times[i + 1]);
            assert!((r.v[i][0][0] - f(a)).abs() < 1e-13);
            assert!((r.v[i][1][0] - f(0.5 * (a + b))).abs() < 1e-13);
            assert!((r.v[i][2][0] - f(b)).abs() < 1e-13);
        }
        // midpoint of an interior interval is the mean of the neighbors
        let mean = 0.5 * (z[0].v[0] + z[2].v[0]);
        assert!((r.v[1][1][0] - mean).abs() < 1e-13);
    }

    #[test]
    fn primal_reconstruction_parabola_bulge() {
        // nodes at 0, 1, 2 with values 0, 1, 0: the quadratic is t(2 - t)
        let mesh = line_mesh(&[0.0, 1.0, 2.0], vec![Patch::Pair(0)]);
        let u = scalar_states(&[0.0, 1.0, 0.0]);
        let r = reconstruct_primal(&mesh, &u);
        // at t = 0.5 the quadratic gives 0.75 against the linear 0.5
        assert!((r.v[0][1][0] - 0.75).abs() < 1e-14);
        let w = r.sub(&IntervalWeight::from_nodal(&u));
        assert!((w.v[0][1][0] - 0.25).abs() < 1e-14);
        // nodal values are interpolated, so the difference vanishes there
        assert!(w.v[0][0][0].abs() < 1e-14 && w.v[0][2][0].abs() < 1e-14);
    }

    #[test]
    fn primal_reconstruction_is_exact_for_quadratics() {
        // u(t) = t^2 sampled at nodes; reconstruction must reproduce it and
        // the difference to the nodal interpolant is -k^2/4 at midpoints
        let times = [0.0, 0.5, 1.0, 1.5, 2.0];
        let mesh = line_mesh(&times, vec![Patch::Pair(0), Patch::Pair(2)]);
        let u = scalar_states(&times.map(|t| t * t));
        let r = reconstruct_primal(&mesh, &u);
        for i in 0..4 {
            let tm = 0.5 * (times[i] + times[i + 1]);
            assert!((r.v[i][1][0] - tm * tm).abs() < 1e-13);
        }
        let w = r.sub(&IntervalWeight::from_nodal(&u));
        let k = 0.5;
        for i in 0..4 {
            assert!((w.v[i][1][0] - (-k * k / 4.0)).abs() < 1e-13);
        }
        // linear data: reconstruction equals the interpolant
        let ul = scalar_states(&times.map(|t| 3.0 * t - 1.0));
        let rl = reconstruct_primal(&mesh, &ul);
        let wl = rl.sub(&IntervalWeight::from_nodal(&ul));
        for i in 0..4 {
            for s in 0..3 {
                assert!(wl.v[i][s][0].abs() < 1e-13);
            }
        }
    }

    #[test]
    fn zero_problem_has_zero_indicators() {
        let (mesh, mut ops) = setup(0.5, SourceConfig::Fluid);
        ops.load_f = vec![0.0; ops.n_fluid];
        let partition = uniform_partition(0.2, 2, 2, 1).unwrap();
        let u = PrimalTrajectory::zeros(&partition, ops.n_fluid, ops.n_solid);
        let mut solver = PrimalSolver::new(&mesh, &ops, &partition);
        let z = solve_adjoint(&mut solver, &GoalFunctional::fluid(), &u, &AdjointCoupling::Monolithic).unwrap();
        let bd = estimate(&ops, &partition, &u, &z, &GoalFunctional::fluid()).unwrap();
        assert_eq!(total_estimate(&bd), 0.0);
        assert!(bd.theta_f.iter().all(|&x| x == 0.0));
        assert!(bd.vartheta_s.iter().all(|&x| x == 0.0));
    }

    /// packs interval values of a piecewise-constant weight into block rows
    fn pack_weight_block(
        layout: &crate::primal::MacroLayout,
        partition: &TimePartition,
        wf: &[FieldPair],
        ws: &[FieldPair],
        n: usize,
    ) -> Vec<f64> {
        let mut x = vec![0.0; layout.size()];
        for (m, i) in (1..=layout.m_n).zip(partition.fluid.intervals_of_macro(n)) {
            x[layout.fluid_u(m)..layout.fluid_u(m) + layout.nf].copy_from_slice(&wf[i].u);
            x[layout.fluid_v(m)..layout.fluid_v(m) + layout.nf].copy_from_slice(&wf[i].v);
        }
        for (l, i) in (1..=layout.l_n).zip(partition.solid.intervals_of_macro(n)) {
            x[layout.solid_u(l)..layout.solid_u(l) + layout.ns].copy_from_slice(&ws[i].u);
            x[layout.solid_v(l)..layout.solid_v(l) + layout.ns].copy_from_slice(&ws[i].v);
        }
        x
    }

    fn pack_states_block(
        layout: &crate::primal::MacroLayout,
        partition: &TimePartition,
        traj: &PrimalTrajectory,
        n: usize,
    ) -> Vec<f64> {
        let mut x = vec![0.0; layout.size()];
        let fr = partition.fluid.intervals_of_macro(n);
        for (m, node) in (1..=layout.m_n).zip(fr.start + 1..=fr.end) {
            x[layout.fluid_u(m)..layout.fluid_u(m) + layout.nf].copy_from_slice(&traj.fluid[node].u);
            x[layout.fluid_v(m)..layout.fluid_v(m) + layout.nf].copy_from_slice(&traj.fluid[node].v);
        }
        let sr = partition.solid.intervals_of_macro(n);
        for (l, node) in (1..=layout.l_n).zip(sr.start + 1..=sr.end) {
            x[layout.solid_u(l)..layout.solid_u(l) + layout.ns].copy_from_slice(&traj.solid[node].u);
            x[layout.solid_v(l)..layout.solid_v(l) + layout.ns].copy_from_slice(&traj.solid[node].v);
        }
        x
    }

    #[test]
    fn localized_primal_residual_sums_to_the_assembled_pairing() {
        // random (non-solution) trajectory and random piecewise-constant
        // weight: the quadrature route must match the matrix route
        let (mesh, ops) = setup(0.5, SourceConfig::Fluid);
        let partition = uniform_partition(0.3, 3, 2, 3).unwrap();
        let mut u = PrimalTrajectory::zeros(&partition, ops.n_fluid, ops.n_solid);
        for (k, s) in u.fluid.iter_mut().enumerate() {
            *s = random_pair(&mesh, Subdomain::Fluid, 1000 + 2 * k as u64);
        }
        for (k, s) in u.solid.iter_mut().enumerate() {
            *s = random_pair(&mesh, Subdomain::Solid, 2000 + 2 * k as u64);
        }
        let wf_states: Vec<FieldPair> = (0..partition.fluid.interval_count())
            .map(|k| random_pair(&mesh, Subdomain::Fluid, 3000 + 2 * k as u64))
            .collect();
        let ws_states: Vec<FieldPair> = (0..partition.solid.interval_count())
            .map(|k| random_pair(&mesh, Subdomain::Solid, 4000 + 2 * k as u64))
            .collect();
        let wf_init = random_pair(&mesh, Subdomain::Fluid, 5000);
        let ws_init = random_pair(&mesh, Subdomain::Solid, 5002);
        let wf = IntervalWeight::from_piecewise_constant(&wf_states, &wf_init);
        let ws = IntervalWeight::from_piecewise_constant(&ws_states, &ws_init);

        let (rho_f, rho_s) = primal_residual_localized(&ops, &partition, &u, &wf, &ws).unwrap();
        let localized: f64 = rho_f.iter().chain(&rho_s).sum();

        // matrix route
        let mut solver = PrimalSolver::new(&mesh, &ops, &partition);
        let mut global = 0.0;
        let mut scale = 0.0;
        for n in 0..partition.n_macro() {
            let sys = solver.macro_system(n).unwrap();
            let phi = pack_weight_block(&sys.layout, &partition, &wf_states, &ws_states, n);
            let x_n = pack_states_block(&sys.layout, &partition, &u, n);
            let x_prev = sys.layout.pack_prev(&CoupledState {
                fluid: u.fluid[partition.fluid.macro_index[n]].clone(),
                solid: u.solid[partition.solid.macro_index[n]].clone(),
            });
            let mut r = solver.macro_source(n, &sys.layout).unwrap();
            sys.matrix.mul_vec_add(-1.0, &x_n, &mut r);
            sys.coupling_prev.mul_vec_add(-1.0, &x_prev, &mut r);
            global += linalg::dot(&phi, &r);
            scale += linalg::dot(&phi, &r).abs();
        }
        // initial rows: residual of the weak initial conditions
        global -= linalg::dot(&ops.mass_f.mul_vec(&u.fluid[0].v), &wf_init.v);
        global -= linalg::dot(&ops.mass_s.mul_vec(&u.solid[0].v), &ws_init.v);
        global -= linalg::dot(&ops.mass_s.mul_vec(&u.solid[0].u), &ws_init.u);

        let tol = 1e-12 * scale.max(localized.abs()).max(1.0);
        assert!(
            (localized - global).abs() <= tol,
            "localized {localized:.15e} vs assembled {global:.15e}"
        );
    }

    #[test]
    fn localized_adjoint_residual_sums_to_the_assembled_pairing() {
        let (mesh, ops) = setup(0.5, SourceConfig::Fluid);
        let partition = uniform_partition(0.3, 3, 2, 3).unwrap();
        let goal = GoalFunctional::fluid();
        // random primal (drives the goal load), random dual, random nodal weight
        let mut u = PrimalTrajectory::zeros(&partition, ops.n_fluid, ops.n_solid);
        for (k, s) in u.fluid.iter_mut().enumerate() {
            *s = random_pair(&mesh, Subdomain::Fluid, 6000 + 2 * k as u64);
        }
        for (k, s) in u.solid.iter_mut().enumerate() {
            *s = random_pair(&mesh, Subdomain::Solid, 7000 + 2 * k as u64);
        }
        let zf: Vec<FieldPair> = (0..partition.fluid.interval_count())
            .map(|k| random_pair(&mesh, Subdomain::Fluid, 8000 + 2 * k as u64))
            .collect();
        let zs: Vec<FieldPair> = (0..partition.solid.interval_count())
            .map(|k| random_pair(&mesh, Subdomain::Solid, 9000 + 2 * k as u64))
            .collect();
        let z = crate::adjoint::AdjointTrajectory {
            fluid: zf.clone(),
            solid: zs.clone(),
            initial_fluid: random_pair(&mesh, Subdomain::Fluid, 9990),
            initial_solid: random_pair(&mesh, Subdomain::Solid, 9992),
        };
        // nodal weight; the fluid displacement direction at t_0 is data
        let mut xf: Vec<FieldPair> = (0..=partition.fluid.interval_count())
            .map(|k| random_pair(&mesh, Subdomain::Fluid, 11000 + 2 * k as u64))
            .collect();
        xf[0].u = vec![0.0; ops.n_fluid];
        let xs: Vec<FieldPair> = (0..=partition.solid.interval_count())
            .map(|k| random_pair(&mesh, Subdomain::Solid, 12000 + 2 * k as u64))
            .collect();
        let wf = IntervalWeight::from_nodal(&xf);
        let ws = IntervalWeight::from_nodal(&xs);

        let (rho_f, rho_s) =
            adjoint_residual_localized(&ops, &partition, &u, &z, &goal, &wf, &ws).unwrap();
        let localized: f64 = rho_f.iter().chain(&rho_s).sum();

        // matrix route: J'(Xi) - B(Xi)(Z)
        let loads = goal_derivative_load(&ops, &partition, &goal, &u);
        let mut jprime = 0.0;
        for node in 0..xf.len() {
            jprime += linalg::dot(loads.node(node), &xf[node].v);
        }
        let xi_traj = PrimalTrajectory {
            fluid: xf.clone(),
            solid: xs.clone(),
        };
        let mut solver = PrimalSolver::new(&mesh, &ops, &partition);
        let mut b_pairing = 0.0;
        for n in 0..partition.n_macro() {
            let sys = solver.macro_system(n).unwrap();
            let lam = pack_weight_block(&sys.layout, &partition, &zf, &zs, n);
            let xi_n = pack_states_block(&sys.layout, &partition, &xi_traj, n);
            let xi_prev = sys.layout.pack_prev(&CoupledState {
                fluid: xi_traj.fluid[partition.fluid.macro_index[n]].clone(),
                solid: xi_traj.solid[partition.solid.macro_index[n]].clone(),
            });
            let mut ax = vec![0.0; sys.layout.size()];
            sys.matrix.mul_vec_add(1.0, &xi_n, &mut ax);
            sys.coupling_prev.mul_vec_add(1.0, &xi_prev, &mut ax);
            b_pairing += linalg::dot(&lam, &ax);
        }
        b_pairing += linalg::dot(&ops.mass_f.mul_vec(&xf[0].v), &z.initial_fluid.v);
        b_pairing += linalg::dot(&ops.mass_s.mul_vec(&xs[0].v), &z.initial_solid.v);
        b_pairing += linalg::dot(&ops.mass_s.mul_vec(&xs[0].u), &z.initial_solid.u);

        let global = jprime - b_pairing;
        let scale = jprime.abs() + b_pairing.abs() + 1.0;
        assert!(
            (localized - global).abs() <= 1e-12 * scale,
            "localized {localized:.15e} vs assembled {global:.15e}"
        );
    }

    #[test]
    fn galerkin_orthogonality_of_the_solved_problem() {
        let (mesh, ops) = setup(0.5, SourceConfig::Fluid);
        let partition = uniform_partition(0.3, 3, 2, 3).unwrap();
        let goal = GoalFunctional::fluid();
        let mut solver = PrimalSolver::new(&mesh, &ops, &partition);
        let u = solver
            .solve_primal(&DecouplerConfig::with_method(DecouplingMethod::Monolithic))
            .unwrap()
            .trajectory;
        let z = solve_adjoint(&mut solver, &goal, &u, &AdjointCoupling::Monolithic).unwrap();

        // scale: the residual against the reconstruction weights, with the
        // random test functions normalized to the same weight magnitude
        let bd = estimate(&ops, &partition, &u, &z, &goal).unwrap();
        let scale_primal: f64 = bd.theta_f.iter().chain(&bd.theta_s).map(|x| x.abs()).sum();
        let scale_adjoint: f64 = bd
            .vartheta_f
            .iter()
            .chain(&bd.vartheta_s)
            .map(|x| x.abs())
            .sum();
        let weight_norm = |w: &IntervalWeight| -> f64 {
            w.u.iter()
                .chain(&w.v)
                .flat_map(|s| s.iter())
                .map(|v| linalg::norm_inf(v))
                .fold(0.0, f64::max)
        };
        let rec_f = reconstruct_adjoint(&partition.fluid, &z.fluid)
            .sub(&IntervalWeight::from_piecewise_constant(&z.fluid, &z.initial_fluid));
        let rec_u = reconstruct_primal(&partition.fluid, &u.fluid)
            .sub(&IntervalWeight::from_nodal(&u.fluid));
        let amp_primal = weight_norm(&rec_f);
        let amp_adjoint = weight_norm(&rec_u);
        let rescale = |p: &mut FieldPair, amp: f64| {
            linalg::scale(&mut p.u, amp);
            linalg::scale(&mut p.v, amp);
        };

        for trial in 0..20 {
            let seed = 40_000 + 100 * trial as u64;
            // primal: random piecewise-constant test function
            let wf_states: Vec<FieldPair> = (0..partition.fluid.interval_count())
                .map(|k| {
                    let mut p = random_pair(&mesh, Subdomain::Fluid, seed + 2 * k as u64);
                    rescale(&mut p, amp_primal);
                    p
                })
                .collect();
            let ws_states: Vec<FieldPair> = (0..partition.solid.interval_count())
                .map(|k| {
                    let mut p = random_pair(&mesh, Subdomain::Solid, seed + 40 + 2 * k as u64);
                    rescale(&mut p, amp_primal);
                    p
                })
                .collect();
            let mut init_f = random_pair(&mesh, Subdomain::Fluid, seed + 80);
            let mut init_s = random_pair(&mesh, Subdomain::Solid, seed + 82);
            rescale(&mut init_f, amp_primal);
            rescale(&mut init_s, amp_primal);
            let wf = IntervalWeight::from_piecewise_constant(&wf_states, &init_f);
            let ws = IntervalWeight::from_piecewise_constant(&ws_states, &init_s);
            let (rf, rs) = primal_residual_localized(&ops, &partition, &u, &wf, &ws).unwrap();
            let total: f64 = rf.iter().chain(&rs).sum();
            assert!(
                total.abs() <= 1e-10 * scale_primal.max(1e-300),
                "primal orthogonality violated: {total:.3e} vs scale {scale_primal:.3e}"
            );

            // adjoint: random continuous piecewise-linear test function
            let mut xf: Vec<FieldPair> = (0..=partition.fluid.interval_count())
                .map(|k| {
                    let mut p = random_pair(&mesh, Subdomain::Fluid, seed + 300 + 2 * k as u64);
                    rescale(&mut p, amp_adjoint);
                    p
                })
                .collect();
            xf[0].u = vec![0.0; ops.n_fluid];
            let xs: Vec<FieldPair> = (0..=partition.solid.interval_count())
                .map(|k| {
                    let mut p = random_pair(&mesh, Subdomain::Solid, seed + 400 + 2 * k as u64);
                    rescale(&mut p, amp_adjoint);
                    p
                })
                .collect();
            let wf = IntervalWeight::from_nodal(&xf);
            let ws = IntervalWeight::from_nodal(&xs);
            let (rf, rs) =
                adjoint_residual_localized(&ops, &partition, &u, &z, &goal, &wf, &ws).unwrap();
            let total: f64 = rf.iter().chain(&rs).sum();
            assert!(
                total.abs() <= 1e-10 * scale_adjoint.max(1e-300),
                "adjoint orthogonality violated: {total:.3e} vs scale {scale_adjoint:.3e}"
            );
        }
    }

    #[test]
    fn average_closed_forms() {
        // all indicators equal c: average is 2c and nothing can be marked
        let c = 0.37;
        let bd = ErrorBreakdown {
            theta_f: vec![c; 6],
            theta_s: vec![c; 4],
            vartheta_f: vec![c; 6],
            vartheta_s: vec![c; 4],
        };
        assert!((indicator_average(&bd) - 2.0 * c).abs() < 1e-15);

        // single nonzero fluid indicator with M = L = 1
        let bd = ErrorBreakdown {
            theta_f: vec![c],
            theta_s: vec![0.0],
            vartheta_f: vec![0.0],
            vartheta_s: vec![0.0],
        };
        assert!((indicator_average(&bd) - c / 2.0).abs() < 1e-15);
        assert!((total_estimate(&bd) - c).abs() < 1e-15);
    }

    #[test]
    fn effectivity_examples() {
        // sigma equal to the true error gives one
        assert!((effectivity(2.0e-8, 3.0e-8, 1.0e-8).unwrap() - 1.0).abs() < 1e-14);
        // published-style ratios
        let eff = effectivity(1.99e-8, 6.029469e-5, 6.029469e-5 - 2.05e-8).unwrap();
        assert!((eff - 0.97).abs() < 0.005, "{eff}");
        let eff = effectivity(1.30e-5, 3.458826e-4, 3.458826e-4 - 2.49e-5).unwrap();
        assert!((eff - 0.52).abs() < 0.005, "{eff}");
        assert!(effectivity(1.0, 2.0, 2.0).is_err());
    }

    #[test]
    fn extrapolation_recovers_exact_model_and_published_references() {
        // J(k) = 1 + k^2 at k in {0.04, 0.02, 0.01}
        let j = |k: f64| 1.0 + k * k;
        let e = extrapolate_reference(j(0.04), j(0.02), j(0.01));
        assert!(!e.fell_back);
        assert!((e.j_ref - 1.0).abs() < 1e-12);
        assert!((e.rate - 2.0).abs() < 1e-10);

        // published fluid study: goal values recovered from the reference
        // minus the error column at N = 200, 400, 800
        let j_ref = 6.029469e-5;
        let e = extrapolate_reference(j_ref - 5.22e-9, j_ref - 1.31e-9, j_ref - 3.28e-10);
        assert!((e.j_ref - j_ref).abs() <= 1e-6 * j_ref, "{:.6e}", e.j_ref);

        // published solid study
        let j_ref = 3.458826e-4;
        let e = extrapolate_reference(j_ref - 9.80e-7, j_ref - 2.23e-7, j_ref - 5.07e-8);
        assert!((e.j_ref - j_ref).abs() <= 1e-5 * j_ref, "{:.6e}", e.j_ref);

        // non-monotone input falls back to the fixed rate
        let e = extrapolate_reference(1.0, 1.1, 1.05);
        assert!(e.fell_back);
        assert_eq!(e.rate, 2.0);
    }
}

//! Assembly of all time-independent spatial operators.
//!
//! Bilinear (Q1) elements on the structured quad grids with tensor-product
//! 2x2 Gauss quadrature per cell and 2-point Gauss per interface edge. All
//! interface conditions are realized weakly: penalty mass blocks scaled by
//! `gamma/h`, consistency trace terms with the discrete normal derivative,
//! and the flux coupling that feeds the heat flux into the wave equation.
//!
//! Dirichlet rows and columns are eliminated symmetrically at assembly time;
//! states are kept identically zero on constrained nodes throughout.

use crate::linalg::{Csr, Triplets};
use crate::mesh::{SpaceMesh, SubdomainGrid};
use crate::params::PhysicalParams;
use crate::Subdomain;

/// Which of the two forcing configurations is active: a Gaussian source in
/// the heat domain or in the wave domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceConfig {
    /// Source centered at (1/2, 1/2) in the fluid; solid unforced.
    Fluid,
    /// Source centered at (1/2, -1/2) in the solid; fluid unforced.
    Solid,
}

impl SourceConfig {
    pub fn from_id(id: u8) -> Option<Self> {
        match id {
            1 => Some(SourceConfig::Fluid),
            2 => Some(SourceConfig::Solid),
            _ => None,
        }
    }

    pub fn id(self) -> u8 {
        match self {
            SourceConfig::Fluid => 1,
            SourceConfig::Solid => 2,
        }
    }
}

/// All assembled spatial matrices and load vectors. Immutable once built.
#[derive(Debug, Clone)]
pub struct OperatorSet {
    pub params: PhysicalParams,
    pub source: SourceConfig,
    pub n_fluid: usize,
    pub n_solid: usize,

    pub mass_f: Csr,
    pub stiff_f: Csr,
    pub conv_f: Csr,
    pub mass_s: Csr,
    pub stiff_s: Csr,

    /// Interface mass of fluid traces.
    pub iface_mass_ff: Csr,
    /// Interface mass pairing solid trial traces with fluid tests.
    pub iface_mass_fs: Csr,
    /// Fluid normal-derivative trace against fluid tests.
    pub trace_f: Csr,
    /// Solid normal-derivative trace against solid tests.
    pub trace_s: Csr,
    /// Fluid normal-derivative trace against solid tests (flux coupling).
    pub flux_sf: Csr,

    /// Stiffness restricted to the right half of each subdomain, for the
    /// goal functionals.
    pub goal_stiff_f: Csr,
    pub goal_stiff_s: Csr,

    /// Spatial source components, one per subdomain; exactly one is nonzero.
    pub load_f: Vec<f64>,
    pub load_s: Vec<f64>,

    /// Operator acting on the fluid displacement in its elliptic row:
    /// `stiff - trace + (gamma/h) iface_mass`.
    pub fluid_u_op: Csr,
    /// Operator acting on the fluid velocity in the heat row:
    /// `nu stiff + conv - nu trace + (gamma/h) iface_mass`.
    pub fluid_v_op: Csr,
    /// Operator acting on the solid velocity in the wave row:
    /// `delta (stiff - trace)`.
    pub solid_v_op: Csr,
}

impl OperatorSet {
    pub fn grid_size(&self, s: Subdomain) -> usize {
        match s {
            Subdomain::Fluid => self.n_fluid,
            Subdomain::Solid => self.n_solid,
        }
    }

    pub fn load(&self, s: Subdomain) -> &[f64] {
        match s {
            Subdomain::Fluid => &self.load_f,
            Subdomain::Solid => &self.load_s,
        }
    }
}

const GAUSS_1D: [f64; 2] = [-0.577_350_269_189_625_76, 0.577_350_269_189_625_76];

fn shape(xi: f64, eta: f64) -> [f64; 4] {
    [
        0.25 * (1.0 - xi) * (1.0 - eta),
        0.25 * (1.0 + xi) * (1.0 - eta),
        0.25 * (1.0 + xi) * (1.0 + eta),
        0.25 * (1.0 - xi) * (1.0 + eta),
    ]
}

fn shape_grad(xi: f64, eta: f64) -> [[f64; 2]; 4] {
    [
        [-0.25 * (1.0 - eta), -0.25 * (1.0 - xi)],
        [0.25 * (1.0 - eta), -0.25 * (1.0 + xi)],
        [0.25 * (1.0 + eta), 0.25 * (1.0 + xi)],
        [-0.25 * (1.0 + eta), 0.25 * (1.0 - xi)],
    ]
}

struct CellMatrices {
    mass: [[f64; 4]; 4],
    stiff: [[f64; 4]; 4],
    conv: [[f64; 4]; 4],
}

/// Element matrices on a square cell of width `h`; exact for Q1 products.
fn cell_matrices(h: f64, beta: [f64; 2]) -> CellMatrices {
    let jac = 0.5 * h; // dx/dxi
    let det = jac * jac;
    let mut mass = [[0.0; 4]; 4];
    let mut stiff = [[0.0; 4]; 4];
    let mut conv = [[0.0; 4]; 4];
    for &xi in &GAUSS_1D {
        for &eta in &GAUSS_1D {
            let n = shape(xi, eta);
            let g = shape_grad(xi, eta);
            for i in 0..4 {
                for j in 0..4 {
                    let gi = [g[i][0] / jac, g[i][1] / jac];
                    let gj = [g[j][0] / jac, g[j][1] / jac];
                    mass[i][j] += n[i] * n[j] * det;
                    stiff[i][j] += (gi[0] * gj[0] + gi[1] * gj[1]) * det;
                    conv[i][j] += (beta[0] * gj[0] + beta[1] * gj[1]) * n[i] * det;
                }
            }
        }
    }
    CellMatrices { mass, stiff, conv }
}

fn scatter(
    t: &mut Triplets,
    grid_rows: &SubdomainGrid,
    grid_cols: &SubdomainGrid,
    rows: &[usize],
    cols: &[usize],
    local: impl Fn(usize, usize) -> f64,
) {
    for (a, &i) in rows.iter().enumerate() {
        if grid_rows.is_dirichlet[i] {
            continue;
        }
        for (b, &j) in cols.iter().enumerate() {
            if grid_cols.is_dirichlet[j] {
                continue;
            }
            t.push(i, j, local(a, b));
        }
    }
}

/// Assembles the raw (unconstrained, interface-free) mass and stiffness of
/// one subdomain. Diagnostic path used by consistency checks.
pub fn assemble_unconstrained(mesh: &SpaceMesh, s: Subdomain) -> (Csr, Csr) {
    let grid = mesh.grid(s);
    let n = grid.n_nodes();
    let cm = cell_matrices(mesh.h, [0.0, 0.0]);
    let mut mass = Triplets::new(n, n);
    let mut stiff = Triplets::new(n, n);
    for cell in &grid.cells {
        for a in 0..4 {
            for b in 0..4 {
                mass.push(cell[a], cell[b], cm.mass[a][b]);
                stiff.push(cell[a], cell[b], cm.stiff[a][b]);
            }
        }
    }
    (mass.to_csr(), stiff.to_csr())
}

/// Assembles every operator for the given mesh, parameters and forcing
/// configuration.
pub fn assemble_operators(mesh: &SpaceMesh, p: &PhysicalParams, source: SourceConfig) -> OperatorSet {
    let fluid = &mesh.fluid;
    let solid = &mesh.solid;
    let (nf, ns) = (fluid.n_nodes(), solid.n_nodes());
    let h = mesh.h;
    let cm = cell_matrices(h, p.beta);

    let mut mass_f = Triplets::new(nf, nf);
    let mut stiff_f = Triplets::new(nf, nf);
    let mut conv_f = Triplets::new(nf, nf);
    let mut goal_f = Triplets::new(nf, nf);
    let mut mass_s = Triplets::new(ns, ns);
    let mut stiff_s = Triplets::new(ns, ns);
    let mut goal_s = Triplets::new(ns, ns);

    let half = mesh.nx / 2;
    for (c, cell) in fluid.cells.iter().enumerate() {
        let in_goal = (c % mesh.nx) >= half;
        scatter(&mut mass_f, fluid, fluid, cell, cell, |a, b| cm.mass[a][b]);
        scatter(&mut stiff_f, fluid, fluid, cell, cell, |a, b| cm.stiff[a][b]);
        scatter(&mut conv_f, fluid, fluid, cell, cell, |a, b| cm.conv[a][b]);
        if in_goal {
            scatter(&mut goal_f, fluid, fluid, cell, cell, |a, b| cm.stiff[a][b]);
        }
    }
    for (c, cell) in solid.cells.iter().enumerate() {
        let in_goal = (c % mesh.nx) >= half;
        scatter(&mut mass_s, solid, solid, cell, cell, |a, b| cm.mass[a][b]);
        scatter(&mut stiff_s, solid, solid, cell, cell, |a, b| cm.stiff[a][b]);
        if in_goal {
            scatter(&mut goal_s, solid, solid, cell, cell, |a, b| cm.stiff[a][b]);
        }
    }

    // interface edge terms; 2-point Gauss along each edge
    let mut iface_ff = Triplets::new(nf, nf);
    let mut iface_fs = Triplets::new(nf, ns);
    let mut trace_f = Triplets::new(nf, nf);
    let mut trace_s = Triplets::new(ns, ns);
    let mut flux_sf = Triplets::new(ns, nf);

    // fluid cells touching the interface sit in the bottom row (local edge
    // nodes 0-1); solid cells in the top row (local edge nodes 3-2)
    for ci in 0..mesh.nx {
        let fcell = fluid.cells[ci];
        let scell = solid.cells[(mesh.ny - 1) * mesh.nx + ci];
        // edge nodes ordered by ascending x on both sides
        let f_edge = [fcell[0], fcell[1]];
        let s_edge = [scell[3], scell[2]];

        let mut emass = [[0.0; 2]; 2];
        // trace of the normal derivative of each cell node along the edge:
        // edge test index a (2), cell trial node b (4)
        let mut etrace_f = [[0.0; 4]; 2];
        let mut etrace_s = [[0.0; 4]; 2];
        for &xi in &GAUSS_1D {
            let w = 0.5 * h; // 1D jacobian
            let e = [0.5 * (1.0 - xi), 0.5 * (1.0 + xi)];
            for a in 0..2 {
                for b in 0..2 {
                    emass[a][b] += e[a] * e[b] * w;
                }
            }
            // fluid: interface at eta = -1, outward normal (0,-1)
            let gf = shape_grad(xi, -1.0);
            // solid: interface at eta = +1, outward normal (0,+1)
            let gs = shape_grad(xi, 1.0);
            for a in 0..2 {
                for b in 0..4 {
                    etrace_f[a][b] += -(gf[b][1] / (0.5 * h)) * e[a] * w;
                    etrace_s[a][b] += (gs[b][1] / (0.5 * h)) * e[a] * w;
                }
            }
        }

        scatter(&mut iface_ff, fluid, fluid, &f_edge, &f_edge, |a, b| emass[a][b]);
        scatter(&mut iface_fs, fluid, solid, &f_edge, &s_edge, |a, b| emass[a][b]);
        scatter(&mut trace_f, fluid, fluid, &f_edge, &fcell, |a, b| etrace_f[a][b]);
        scatter(&mut trace_s, solid, solid, &s_edge, &scell, |a, b| etrace_s[a][b]);
        scatter(&mut flux_sf, solid, fluid, &s_edge, &fcell, |a, b| etrace_f[a][b]);
    }

    let gaussian_load = |grid: &SubdomainGrid, center: [f64; 2], active: bool| -> Vec<f64> {
        let mut load = vec![0.0; grid.n_nodes()];
        if !active {
            return load;
        }
        for cell in &grid.cells {
            let x0 = grid.coords[cell[0]];
            for &xi in &GAUSS_1D {
                for &eta in &GAUSS_1D {
                    let n = shape(xi, eta);
                    let x = x0[0] + 0.5 * (xi + 1.0) * h;
                    let y = x0[1] + 0.5 * (eta + 1.0) * h;
                    let dx = x - center[0];
                    let dy = y - center[1];
                    let g = (-(dx * dx + dy * dy)).exp();
                    let det = 0.25 * h * h;
                    for a in 0..4 {
                        if !grid.is_dirichlet[cell[a]] {
                            load[cell[a]] += g * n[a] * det;
                        }
                    }
                }
            }
        }
        load
    };
    let load_f = gaussian_load(fluid, [0.5, 0.5], source == SourceConfig::Fluid);
    let load_s = gaussian_load(solid, [0.5, -0.5], source == SourceConfig::Solid);

    let mass_f = mass_f.to_csr();
    let stiff_f = stiff_f.to_csr();
    let conv_f = conv_f.to_csr();
    let mass_s = mass_s.to_csr();
    let stiff_s = stiff_s.to_csr();
    let iface_mass_ff = iface_ff.to_csr();
    let iface_mass_fs = iface_fs.to_csr();
    let trace_f = trace_f.to_csr();
    let trace_s = trace_s.to_csr();
    let flux_sf = flux_sf.to_csr();

    let pen = p.penalty();
    let fluid_u_op = Csr::linear_combination(&[
        (1.0, &stiff_f),
        (-1.0, &trace_f),
        (pen, &iface_mass_ff),
    ]);
    let fluid_v_op = Csr::linear_combination(&[
        (p.nu, &stiff_f),
        (1.0, &conv_f),
        (-p.nu, &trace_f),
        (pen, &iface_mass_ff),
    ]);
    let solid_v_op = Csr::linear_combination(&[(p.delta, &stiff_s), (-p.delta, &trace_s)]);

    OperatorSet {
        params: *p,
        source,
        n_fluid: nf,
        n_solid: ns,
        mass_f,
        stiff_f,
        conv_f,
        mass_s,
        stiff_s,
        iface_mass_ff,
        iface_mass_fs,
        trace_f,
        trace_s,
        flux_sf,
        goal_stiff_f: goal_f.to_csr(),
        goal_stiff_s: goal_s.to_csr(),
        load_f,
        load_s,
        fluid_u_op,
        fluid_v_op,
        solid_v_op,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_domain_mesh;

    fn setup(h: f64, source: SourceConfig) -> (SpaceMesh, OperatorSet) {
        let mesh = build_domain_mesh(h).unwrap();
        let p = PhysicalParams { h, ..Default::default() };
        let ops = assemble_operators(&mesh, &p, source);
        (mesh, ops)
    }

    #[test]
    fn raw_mass_sums_to_domain_area() {
        let mesh = build_domain_mesh(0.25).unwrap();
        let (mass, _) = assemble_unconstrained(&mesh, Subdomain::Fluid);
        let total: f64 = mass.vals.iter().sum();
        assert!((total - 4.0).abs() < 1e-12, "got {total}");
    }

    #[test]
    fn raw_stiffness_annihilates_constants() {
        let mesh = build_domain_mesh(0.25).unwrap();
        for s in [Subdomain::Fluid, Subdomain::Solid] {
            let (_, stiff) = assemble_unconstrained(&mesh, s);
            let ones = vec![1.0; mesh.grid(s).n_nodes()];
            let r = stiff.mul_vec(&ones);
            assert!(crate::linalg::norm_inf(&r) < 1e-12);
        }
    }

    #[test]
    fn convection_matches_reference_cell_quadrature() {
        // independent oracle: direct 2x2 Gauss evaluation of
        // (beta . grad phi_j, phi_i) on one physical cell [0,h]^2
        let h = 0.25;
        let beta = [2.0, 0.0];
        let phi = |a: usize, s: f64, t: f64| -> f64 {
            match a {
                0 => (1.0 - s) * (1.0 - t),
                1 => s * (1.0 - t),
                2 => s * t,
                _ => (1.0 - s) * t,
            }
        };
        let dphi = |a: usize, s: f64, t: f64| -> [f64; 2] {
            match a {
                0 => [-(1.0 - t), -(1.0 - s)],
                1 => [1.0 - t, -s],
                2 => [t, s],
                _ => [-t, 1.0 - s],
            }
        };
        let gp = [0.5 - 0.5 / 3.0_f64.sqrt(), 0.5 + 0.5 / 3.0_f64.sqrt()];
        let mut oracle = [[0.0; 4]; 4];
        for &s in &gp {
            for &t in &gp {
                for i in 0..4 {
                    for j in 0..4 {
                        let g = dphi(j, s, t);
                        // d/dx = (1/h) d/ds on the physical cell, dA = h^2/4 per point
                        oracle[i][j] +=
                            (beta[0] * g[0] / h + beta[1] * g[1] / h) * phi(i, s, t) * h * h / 4.0;
                    }
                }
            }
        }
        let cm = cell_matrices(h, beta);
        for i in 0..4 {
            for j in 0..4 {
                assert!(
                    (cm.conv[i][j] - oracle[i][j]).abs() < 1e-14,
                    "({i},{j}): {} vs {}",
                    cm.conv[i][j],
                    oracle[i][j]
                );
            }
        }
    }

    #[test]
    fn mass_and_stiffness_are_symmetric() {
        let (_, ops) = setup(0.25, SourceConfig::Fluid);
        for m in [&ops.mass_f, &ops.stiff_f, &ops.mass_s, &ops.stiff_s] {
            let mt = m.transpose();
            assert_eq!(m.row_ptr, mt.row_ptr);
            assert_eq!(m.col_idx, mt.col_idx);
            for (a, b) in m.vals.iter().zip(&mt.vals) {
                assert!((a - b).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn penalty_block_scales_linearly_in_gamma() {
        let mesh = build_domain_mesh(0.25).unwrap();
        let p1 = PhysicalParams { h: 0.25, ..Default::default() };
        let p2 = PhysicalParams { gamma: 2.0 * p1.gamma, ..p1 };
        let a = assemble_operators(&mesh, &p1, SourceConfig::Fluid);
        let b = assemble_operators(&mesh, &p2, SourceConfig::Fluid);
        // doubling gamma doubles exactly the penalty part of the operators
        let diff_a = Csr::linear_combination(&[(1.0, &a.fluid_u_op), (-1.0, &a.stiff_f), (1.0, &a.trace_f)]);
        let diff_b = Csr::linear_combination(&[(1.0, &b.fluid_u_op), (-1.0, &b.stiff_f), (1.0, &b.trace_f)]);
        for (x, y) in diff_a.vals.iter().zip(&diff_b.vals) {
            assert!((2.0 * x - y).abs() <= 1e-9 * x.abs().max(1e-30));
        }
    }

    #[test]
    fn load_vectors_follow_the_source_configuration() {
        let (mesh, ops) = setup(0.25, SourceConfig::Fluid);
        for (n, &v) in ops.load_f.iter().enumerate() {
            if !mesh.fluid.is_dirichlet[n] {
                assert!(v > 0.0, "node {n} has load {v}");
            } else {
                assert_eq!(v, 0.0);
            }
        }
        assert!(ops.load_s.iter().all(|&v| v == 0.0));

        let (mesh, ops) = setup(0.25, SourceConfig::Solid);
        assert!(ops.load_f.iter().all(|&v| v == 0.0));
        for (n, &v) in ops.load_s.iter().enumerate() {
            if !mesh.solid.is_dirichlet[n] {
                assert!(v > 0.0);
            }
        }
    }

    #[test]
    fn goal_stiffness_only_sees_the_right_half() {
        let (mesh, ops) = setup(0.25, SourceConfig::Fluid);
        // a nodal function supported strictly in x < 2 pairs to zero
        let mut left = vec![0.0; ops.n_fluid];
        for (n, c) in mesh.fluid.coords.iter().enumerate() {
            if c[0] < 2.0 - 1e-12 && !mesh.fluid.is_dirichlet[n] {
                left[n] = 1.0 + c[0];
            }
        }
        // zero out nodes at x >= 2 so the support misses the subregion cells
        for (n, c) in mesh.fluid.coords.iter().enumerate() {
            if c[0] >= 2.0 - 1e-12 {
                left[n] = 0.0;
            }
        }
        let v = ops.goal_stiff_f.pair(&left, &left);
        assert_eq!(v, 0.0);
    }
}

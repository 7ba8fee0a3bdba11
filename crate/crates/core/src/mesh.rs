//! Structured spatial grids for the two rectangular subdomains.
//!
//! The upper rectangle (0,4) x (0,1) carries the heat equation, the lower
//! rectangle (0,4) x (-1,0) the wave equation; they meet along y = 0. Both
//! grids are uniform quadrilaterals of width `h` with interface nodes built
//! from the same integer lattice, so matching nodes compare bitwise equal.

use crate::error::MeshError;
use crate::Subdomain;

pub(crate) fn divides_evenly(length: f64, h: f64) -> bool {
    if h <= 0.0 {
        return false;
    }
    let n = (length / h).round();
    n >= 1.0 && (n * h - length).abs() <= 1e-12 * length
}

/// Uniform grid of one subdomain.
#[derive(Debug, Clone)]
pub struct SubdomainGrid {
    /// Node coordinates, numbered row-major with x fastest.
    pub coords: Vec<[f64; 2]>,
    /// Quadrilateral connectivity: (x0,y0), (x1,y0), (x1,y1), (x0,y1).
    pub cells: Vec<[usize; 4]>,
    /// Nodes carrying homogeneous Dirichlet conditions, ascending.
    pub dirichlet: Vec<usize>,
    /// Per-node Dirichlet flag.
    pub is_dirichlet: Vec<bool>,
    /// Interface nodes ordered by ascending x.
    pub interface: Vec<usize>,
}

impl SubdomainGrid {
    pub fn n_nodes(&self) -> usize {
        self.coords.len()
    }
}

/// The full two-domain mesh.
#[derive(Debug, Clone)]
pub struct SpaceMesh {
    pub h: f64,
    /// Cells along x (4/h).
    pub nx: usize,
    /// Cells along y in each subdomain (1/h).
    pub ny: usize,
    pub fluid: SubdomainGrid,
    pub solid: SubdomainGrid,
}

impl SpaceMesh {
    pub fn grid(&self, s: Subdomain) -> &SubdomainGrid {
        match s {
            Subdomain::Fluid => &self.fluid,
            Subdomain::Solid => &self.solid,
        }
    }

    pub fn n_interface(&self) -> usize {
        self.nx + 1
    }
}

/// Builds both subdomain grids for cell width `h`.
pub fn build_domain_mesh(h: f64) -> Result<SpaceMesh, MeshError> {
    if !divides_evenly(4.0, h) || !divides_evenly(1.0, h) {
        return Err(MeshError::NonDivisibleWidth { h });
    }
    let nx = (4.0 / h).round() as usize;
    let ny = (1.0 / h).round() as usize;

    let fluid = build_grid(nx, ny, h, Subdomain::Fluid);
    let solid = build_grid(nx, ny, h, Subdomain::Solid);
    Ok(SpaceMesh {
        h,
        nx,
        ny,
        fluid,
        solid,
    })
}

fn build_grid(nx: usize, ny: usize, h: f64, s: Subdomain) -> SubdomainGrid {
    let idx = |i: usize, j: usize| j * (nx + 1) + i;
    let mut coords = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            let x = i as f64 * h;
            // both grids count rows away from the interface at y = 0 so the
            // interface coordinate is exactly 0.0 on each side
            let y = match s {
                Subdomain::Fluid => j as f64 * h,
                Subdomain::Solid => (j as f64 - ny as f64) * h,
            };
            coords.push([x, y]);
        }
    }
    let mut cells = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            cells.push([idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1)]);
        }
    }
    let mut is_dirichlet = vec![false; coords.len()];
    match s {
        // heat equation: clamped along the top edge only
        Subdomain::Fluid => {
            for i in 0..=nx {
                is_dirichlet[idx(i, ny)] = true;
            }
        }
        // wave equation: clamped along both vertical sides, including the
        // corners shared with the interface
        Subdomain::Solid => {
            for j in 0..=ny {
                is_dirichlet[idx(0, j)] = true;
                is_dirichlet[idx(nx, j)] = true;
            }
        }
    }
    let dirichlet: Vec<usize> = (0..coords.len()).filter(|&n| is_dirichlet[n]).collect();
    let interface_row = match s {
        Subdomain::Fluid => 0,
        Subdomain::Solid => ny,
    };
    let interface = (0..=nx).map(|i| idx(i, interface_row)).collect();
    SubdomainGrid {
        coords,
        cells,
        dirichlet,
        is_dirichlet,
        interface,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_for_coarse_meshes() {
        let m = build_domain_mesh(1.0).unwrap();
        assert_eq!(m.fluid.n_nodes(), 10);
        assert_eq!(m.solid.n_nodes(), 10);
        assert_eq!(m.fluid.interface.len(), 5);

        let m = build_domain_mesh(0.25).unwrap();
        assert_eq!(m.fluid.n_nodes(), 17 * 5);
        assert_eq!(m.fluid.interface.len(), 17);
    }

    #[test]
    fn non_divisible_width_rejected() {
        assert!(matches!(
            build_domain_mesh(0.3),
            Err(MeshError::NonDivisibleWidth { .. })
        ));
        assert!(build_domain_mesh(-0.25).is_err());
    }

    #[test]
    fn interface_nodes_align_bitwise() {
        let m = build_domain_mesh(0.25).unwrap();
        assert_eq!(m.fluid.interface.len(), m.solid.interface.len());
        for (fi, si) in m.fluid.interface.iter().zip(&m.solid.interface) {
            let [fx, fy] = m.fluid.coords[*fi];
            let [sx, sy] = m.solid.coords[*si];
            assert!(fx.to_bits() == sx.to_bits() && fy.to_bits() == sy.to_bits());
            assert_eq!(fy, 0.0);
        }
        // ascending x
        let xs: Vec<f64> = m.fluid.interface.iter().map(|&n| m.fluid.coords[n][0]).collect();
        assert!(xs.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn dirichlet_sets_respect_corner_rule() {
        let m = build_domain_mesh(0.5).unwrap();
        // fluid: top row only, disjoint from the interface
        for &n in &m.fluid.dirichlet {
            assert_eq!(m.fluid.coords[n][1], 1.0);
        }
        for &n in &m.fluid.interface {
            assert!(!m.fluid.is_dirichlet[n]);
        }
        // solid: both side columns, so the interface corners are constrained
        let first = m.solid.interface[0];
        let last = *m.solid.interface.last().unwrap();
        assert!(m.solid.is_dirichlet[first]);
        assert!(m.solid.is_dirichlet[last]);
        for &n in &m.solid.dirichlet {
            let x = m.solid.coords[n][0];
            assert!(x == 0.0 || x == 4.0);
        }
    }
}

//! Two-level time partition: a macro mesh shared by both subdomains plus an
//! independent micro mesh per subdomain, with a patch structure pairing
//! adjacent equal-length micro intervals.
//!
//! All node coordinates are exact rationals in units of the horizon, so that
//! the coincidence test behind macro splitting never suffers from floating
//! round-off.

use crate::error::PartitionError;
use crate::Subdomain;
use std::collections::BTreeSet;
use std::fmt::Write as _;

/// Exact fraction of the time horizon, reduced, with positive denominator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TimeFrac {
    num: i64,
    den: i64,
}

fn gcd(mut a: i64, mut b: i64) -> i64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a.abs()
}

impl TimeFrac {
    pub const ZERO: TimeFrac = TimeFrac { num: 0, den: 1 };
    pub const ONE: TimeFrac = TimeFrac { num: 1, den: 1 };

    pub fn new(num: i64, den: i64) -> Self {
        assert!(den != 0, "zero denominator");
        let g = gcd(num, den).max(1);
        let sign = if den < 0 { -1 } else { 1 };
        Self {
            num: sign * num / g,
            den: sign * den / g,
        }
    }

    pub fn to_f64(self) -> f64 {
        self.num as f64 / self.den as f64
    }

    pub fn midpoint(a: TimeFrac, b: TimeFrac) -> TimeFrac {
        // (a + b) / 2 with i128 intermediates
        let num = a.num as i128 * b.den as i128 + b.num as i128 * a.den as i128;
        let den = 2i128 * a.den as i128 * b.den as i128;
        Self::from_i128(num, den)
    }

    pub fn sub(a: TimeFrac, b: TimeFrac) -> TimeFrac {
        let num = a.num as i128 * b.den as i128 - b.num as i128 * a.den as i128;
        let den = a.den as i128 * b.den as i128;
        Self::from_i128(num, den)
    }

    fn from_i128(num: i128, den: i128) -> Self {
        fn gcd128(mut a: i128, mut b: i128) -> i128 {
            while b != 0 {
                (a, b) = (b, a % b);
            }
            a.abs()
        }
        let g = gcd128(num, den).max(1);
        let (num, den) = (num / g, den / g);
        let (num, den) = if den < 0 { (-num, -den) } else { (num, den) };
        assert!(
            num.abs() <= i64::MAX as i128 && den <= i64::MAX as i128,
            "time fraction overflow"
        );
        Self {
            num: num as i64,
            den: den as i64,
        }
    }

    pub fn numer(self) -> i64 {
        self.num
    }

    pub fn denom(self) -> i64 {
        self.den
    }

    /// a / b evaluated in floating point from the exact integer parts, so the
    /// result depends only on the relative structure, not on absolute times.
    pub fn div(a: TimeFrac, b: TimeFrac) -> f64 {
        (a.num as f64 * b.den as f64) / (a.den as f64 * b.num as f64)
    }
}

impl PartialOrd for TimeFrac {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for TimeFrac {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.num as i128 * other.den as i128).cmp(&(other.num as i128 * self.den as i128))
    }
}

/// A reconstruction patch: two adjacent equal-length micro intervals, or a
/// trailing singleton when the global interval count is odd.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Patch {
    Pair(usize),
    Tail(usize),
}

impl Patch {
    pub fn first(self) -> usize {
        match self {
            Patch::Pair(i) | Patch::Tail(i) => i,
        }
    }

    pub fn len(self) -> usize {
        match self {
            Patch::Pair(_) => 2,
            Patch::Tail(_) => 1,
        }
    }
}

/// Global micro mesh of one subdomain.
#[derive(Debug, Clone)]
pub struct MicroMesh {
    /// Horizon length in seconds.
    pub horizon: f64,
    /// Strictly increasing node fractions, from 0 to 1.
    pub node_fracs: Vec<TimeFrac>,
    /// Node times in seconds (horizon times fraction), same length.
    pub node_times: Vec<f64>,
    /// Index into `node_fracs` of each macro node.
    pub macro_index: Vec<usize>,
    /// Patches in ascending order; they tile the interval range.
    pub patches: Vec<Patch>,
}

impl MicroMesh {
    pub fn interval_count(&self) -> usize {
        self.node_fracs.len() - 1
    }

    /// Step size of interval `i` (seconds), computed from the exact rational
    /// length so that structurally identical intervals at different absolute
    /// positions produce bit-identical sizes.
    pub fn step(&self, i: usize) -> f64 {
        self.step_frac(i).to_f64() * self.horizon
    }

    pub fn step_frac(&self, i: usize) -> TimeFrac {
        TimeFrac::sub(self.node_fracs[i + 1], self.node_fracs[i])
    }

    /// Midpoint of interval `i` (seconds).
    pub fn interval_midpoint(&self, i: usize) -> f64 {
        0.5 * (self.node_times[i] + self.node_times[i + 1])
    }

    /// Global interval range `start..end` inside macro interval `n`.
    pub fn intervals_of_macro(&self, n: usize) -> std::ops::Range<usize> {
        self.macro_index[n]..self.macro_index[n + 1]
    }

    /// Micro interval count of macro interval `n`.
    pub fn count_in_macro(&self, n: usize) -> usize {
        self.macro_index[n + 1] - self.macro_index[n]
    }

    /// Patch id of interval `i`.
    pub fn patch_of(&self, i: usize) -> usize {
        // patches tile the intervals in order, so binary search works
        match self
            .patches
            .binary_search_by(|p| p.first().cmp(&i))
        {
            Ok(k) => k,
            Err(k) => k - 1,
        }
    }

    fn tile_patches(count: usize) -> Vec<Patch> {
        let mut patches: Vec<Patch> = (0..count / 2).map(|k| Patch::Pair(2 * k)).collect();
        if count % 2 == 1 {
            patches.push(Patch::Tail(count - 1));
        }
        patches
    }
}

/// Macro mesh plus fluid and solid micro meshes.
#[derive(Debug, Clone)]
pub struct TimePartition {
    pub horizon: f64,
    pub macro_fracs: Vec<TimeFrac>,
    pub macro_times: Vec<f64>,
    pub fluid: MicroMesh,
    pub solid: MicroMesh,
}

/// Micro intervals flagged for refinement, by global interval index.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MarkSet {
    pub fluid: BTreeSet<usize>,
    pub solid: BTreeSet<usize>,
}

impl MarkSet {
    pub fn is_empty(&self) -> bool {
        self.fluid.is_empty() && self.solid.is_empty()
    }

    pub fn counts(&self) -> (usize, usize) {
        (self.fluid.len(), self.solid.len())
    }
}

/// One violated partition invariant, with its location.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NonIncreasingNodes { subdomain: Option<Subdomain>, index: usize },
    MacroEndpointMissing { subdomain: Subdomain, macro_node: usize },
    SharedInteriorNode { macro_interval: usize, frac: TimeFrac },
    UnequalPatchLengths { subdomain: Subdomain, patch: usize },
    PatchTilingBroken { subdomain: Subdomain, patch: usize },
    HorizonMismatch { subdomain: Subdomain },
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::NonIncreasingNodes { subdomain, index } => match subdomain {
                Some(s) => write!(f, "{} nodes not strictly increasing at index {index}", s.label()),
                None => write!(f, "macro nodes not strictly increasing at index {index}"),
            },
            Violation::MacroEndpointMissing { subdomain, macro_node } => write!(
                f,
                "macro node {macro_node} is not a {} micro node",
                subdomain.label()
            ),
            Violation::SharedInteriorNode { macro_interval, frac } => write!(
                f,
                "shared interior node {}/{} in macro interval {macro_interval}",
                frac.numer(),
                frac.denom()
            ),
            Violation::UnequalPatchLengths { subdomain, patch } => {
                write!(f, "unequal patch lengths in {} patch {patch}", subdomain.label())
            }
            Violation::PatchTilingBroken { subdomain, patch } => {
                write!(f, "{} patch {patch} breaks the tiling", subdomain.label())
            }
            Violation::HorizonMismatch { subdomain } => {
                write!(f, "{} micro mesh does not span the horizon", subdomain.label())
            }
        }
    }
}

/// Builds the uniform partition with `n_macro` macro steps and `m_fluid` /
/// `l_solid` micro steps per macro step.
///
/// Wherever the two nominal micro meshes would share an interior node (any
/// common divisor of the per-macro counts), the macro step is split there so
/// the shared node becomes a macro node, keeping interior node sets disjoint.
pub fn uniform_partition(
    horizon: f64,
    n_macro: usize,
    m_fluid: usize,
    l_solid: usize,
) -> Result<TimePartition, PartitionError> {
    if horizon <= 0.0 {
        return Err(PartitionError::NonPositiveHorizon(horizon));
    }
    if n_macro == 0 || m_fluid == 0 || l_solid == 0 {
        return Err(PartitionError::ZeroCount {
            n: n_macro,
            m: m_fluid,
            l: l_solid,
        });
    }
    let g = gcd(m_fluid as i64, l_solid as i64) as usize;
    let macro_fracs: Vec<TimeFrac> = (0..=n_macro * g)
        .map(|j| TimeFrac::new(j as i64, (n_macro * g) as i64))
        .collect();
    let fluid_fracs: Vec<TimeFrac> = (0..=n_macro * m_fluid)
        .map(|j| TimeFrac::new(j as i64, (n_macro * m_fluid) as i64))
        .collect();
    let solid_fracs: Vec<TimeFrac> = (0..=n_macro * l_solid)
        .map(|j| TimeFrac::new(j as i64, (n_macro * l_solid) as i64))
        .collect();
    let fluid = build_micro(horizon, fluid_fracs, &macro_fracs);
    let solid = build_micro(horizon, solid_fracs, &macro_fracs);
    let macro_times = macro_fracs.iter().map(|f| f.to_f64() * horizon).collect();
    let p = TimePartition {
        horizon,
        macro_fracs,
        macro_times,
        fluid,
        solid,
    };
    debug_assert!(p.validate().is_empty(), "uniform partition invalid");
    Ok(p)
}

fn build_micro(horizon: f64, node_fracs: Vec<TimeFrac>, macro_fracs: &[TimeFrac]) -> MicroMesh {
    let macro_index = macro_fracs
        .iter()
        .map(|mf| {
            node_fracs
                .binary_search(mf)
                .expect("macro node must be a micro node")
        })
        .collect();
    let node_times = node_fracs.iter().map(|f| f.to_f64() * horizon).collect();
    let patches = MicroMesh::tile_patches(node_fracs.len() - 1);
    MicroMesh {
        horizon,
        node_fracs,
        node_times,
        macro_index,
        patches,
    }
}

impl TimePartition {
    pub fn n_macro(&self) -> usize {
        self.macro_fracs.len() - 1
    }

    pub fn mesh(&self, s: Subdomain) -> &MicroMesh {
        match s {
            Subdomain::Fluid => &self.fluid,
            Subdomain::Solid => &self.solid,
        }
    }

    /// Macro step size of interval `n` (seconds).
    pub fn macro_step(&self, n: usize) -> f64 {
        self.macro_times[n + 1] - self.macro_times[n]
    }

    /// Interpolation weight of the left macro endpoint for micro node
    /// `node_idx` of subdomain `s` inside macro interval `n`, computed from
    /// the exact rational coordinates: `(t_n - t) / k_n`.
    pub fn left_weight(&self, n: usize, s: Subdomain, node_idx: usize) -> f64 {
        let mesh = self.mesh(s);
        let num = TimeFrac::sub(self.macro_fracs[n + 1], mesh.node_fracs[node_idx]);
        let den = TimeFrac::sub(self.macro_fracs[n + 1], self.macro_fracs[n]);
        TimeFrac::div(num, den)
    }

    /// Checks every structural invariant; an empty list means the partition
    /// is well formed.
    pub fn validate(&self) -> Vec<Violation> {
        let mut violations = Vec::new();
        for (i, w) in self.macro_fracs.windows(2).enumerate() {
            if w[0] >= w[1] {
                violations.push(Violation::NonIncreasingNodes {
                    subdomain: None,
                    index: i + 1,
                });
            }
        }
        for s in [Subdomain::Fluid, Subdomain::Solid] {
            let mesh = self.mesh(s);
            for (i, w) in mesh.node_fracs.windows(2).enumerate() {
                if w[0] >= w[1] {
                    violations.push(Violation::NonIncreasingNodes {
                        subdomain: Some(s),
                        index: i + 1,
                    });
                }
            }
            if mesh.node_fracs.first() != Some(&TimeFrac::ZERO)
                || mesh.node_fracs.last() != Some(&TimeFrac::ONE)
            {
                violations.push(Violation::HorizonMismatch { subdomain: s });
            }
            for (n, mf) in self.macro_fracs.iter().enumerate() {
                match mesh.node_fracs.binary_search(mf) {
                    Ok(idx) if mesh.macro_index.get(n) == Some(&idx) => {}
                    _ => violations.push(Violation::MacroEndpointMissing {
                        subdomain: s,
                        macro_node: n,
                    }),
                }
            }
            // patch tiling: consecutive, disjoint, covering; pairs equal length
            let mut cursor = 0usize;
            for (k, patch) in mesh.patches.iter().enumerate() {
                if patch.first() != cursor {
                    violations.push(Violation::PatchTilingBroken { subdomain: s, patch: k });
                }
                if let Patch::Pair(i) = *patch {
                    if i + 1 >= mesh.interval_count()
                        || mesh.step_frac(i) != mesh.step_frac(i + 1)
                    {
                        violations.push(Violation::UnequalPatchLengths { subdomain: s, patch: k });
                    }
                }
                if matches!(patch, Patch::Tail(_)) && k + 1 != mesh.patches.len() {
                    violations.push(Violation::PatchTilingBroken { subdomain: s, patch: k });
                }
                cursor = patch.first() + patch.len();
            }
            if cursor != mesh.interval_count() {
                violations.push(Violation::PatchTilingBroken {
                    subdomain: s,
                    patch: mesh.patches.len(),
                });
            }
        }
        // no shared interior nodes within any macro interval
        for n in 0..self.n_macro() {
            let fr = self.fluid.intervals_of_macro(n);
            let sr = self.solid.intervals_of_macro(n);
            let f_interior: BTreeSet<TimeFrac> = self.fluid.node_fracs
                [fr.start + 1..fr.end]
                .iter()
                .copied()
                .collect();
            for frac in &self.solid.node_fracs[sr.start + 1..sr.end] {
                if f_interior.contains(frac) {
                    violations.push(Violation::SharedInteriorNode {
                        macro_interval: n,
                        frac: *frac,
                    });
                }
            }
        }
        violations
    }

    /// Refines every marked micro interval by bisection.
    ///
    /// Marks are first closed under patch pairing, each marked interval is
    /// bisected at its midpoint, sibling pairs become new patches, and macro
    /// intervals are split wherever a fluid and a solid micro node now
    /// coincide in their interior. Refinement is nested: every old node
    /// persists.
    pub fn refine(&self, marks: &MarkSet) -> Result<TimePartition, PartitionError> {
        for (s, set, count) in [
            (Subdomain::Fluid, &marks.fluid, self.fluid.interval_count()),
            (Subdomain::Solid, &marks.solid, self.solid.interval_count()),
        ] {
            if let Some(&bad) = set.iter().find(|&&i| i >= count) {
                return Err(PartitionError::InvalidMark {
                    subdomain: s,
                    index: bad,
                    count,
                });
            }
        }

        let fluid = refine_micro(&self.fluid, &marks.fluid, self.horizon);
        let solid = refine_micro(&self.solid, &marks.solid, self.horizon);

        // macro splitting: any interior coincidence becomes a macro node
        let mut macro_fracs: BTreeSet<TimeFrac> = self.macro_fracs.iter().copied().collect();
        let fluid_set: BTreeSet<TimeFrac> = fluid.node_fracs.iter().copied().collect();
        for frac in &solid.node_fracs {
            if fluid_set.contains(frac) {
                macro_fracs.insert(*frac);
            }
        }
        let macro_fracs: Vec<TimeFrac> = macro_fracs.into_iter().collect();
        let macro_times: Vec<f64> = macro_fracs.iter().map(|f| f.to_f64() * self.horizon).collect();

        let fluid = reindex_macro(fluid, &macro_fracs);
        let solid = reindex_macro(solid, &macro_fracs);
        Ok(TimePartition {
            horizon: self.horizon,
            macro_fracs,
            macro_times,
            fluid,
            solid,
        })
    }

    /// Line-oriented text form: one line per macro interval holding the macro
    /// endpoints, the fluid micro nodes and the solid micro nodes.
    pub fn to_text_lines(&self) -> String {
        let mut out = String::new();
        for n in 0..self.n_macro() {
            write!(out, "{:.16e} {:.16e} |", self.macro_times[n], self.macro_times[n + 1]).unwrap();
            let fr = self.fluid.intervals_of_macro(n);
            for t in &self.fluid.node_times[fr.start..=fr.end] {
                write!(out, " {t:.16e}").unwrap();
            }
            out.push_str(" |");
            let sr = self.solid.intervals_of_macro(n);
            for t in &self.solid.node_times[sr.start..=sr.end] {
                write!(out, " {t:.16e}").unwrap();
            }
            out.push('\n');
        }
        out
    }
}

fn refine_micro(mesh: &MicroMesh, marked: &BTreeSet<usize>, horizon: f64) -> MicroMesh {
    // close marks under patch pairing
    let mut closed = marked.clone();
    for patch in &mesh.patches {
        if let Patch::Pair(i) = *patch {
            if closed.contains(&i) || closed.contains(&(i + 1)) {
                closed.insert(i);
                closed.insert(i + 1);
            }
        }
    }

    let mut node_fracs = Vec::with_capacity(mesh.node_fracs.len() + closed.len());
    node_fracs.push(mesh.node_fracs[0]);
    for i in 0..mesh.interval_count() {
        if closed.contains(&i) {
            node_fracs.push(TimeFrac::midpoint(mesh.node_fracs[i], mesh.node_fracs[i + 1]));
        }
        node_fracs.push(mesh.node_fracs[i + 1]);
    }

    // rebuild the tiling patch by patch; bisected siblings pair up
    let mut patches = Vec::with_capacity(mesh.patches.len());
    let mut cursor = 0usize;
    for patch in &mesh.patches {
        match *patch {
            Patch::Pair(i) if closed.contains(&i) => {
                patches.push(Patch::Pair(cursor));
                patches.push(Patch::Pair(cursor + 2));
                cursor += 4;
            }
            Patch::Pair(_) => {
                patches.push(Patch::Pair(cursor));
                cursor += 2;
            }
            Patch::Tail(i) if closed.contains(&i) => {
                patches.push(Patch::Pair(cursor));
                cursor += 2;
            }
            Patch::Tail(_) => {
                patches.push(Patch::Tail(cursor));
                cursor += 1;
            }
        }
    }
    debug_assert_eq!(cursor, node_fracs.len() - 1);

    let node_times = node_fracs.iter().map(|f| f.to_f64() * horizon).collect();
    MicroMesh {
        horizon,
        node_fracs,
        node_times,
        macro_index: Vec::new(), // filled by reindex_macro
        patches,
    }
}

fn reindex_macro(mut mesh: MicroMesh, macro_fracs: &[TimeFrac]) -> MicroMesh {
    mesh.macro_index = macro_fracs
        .iter()
        .map(|mf| {
            mesh.node_fracs
                .binary_search(mf)
                .expect("macro node must be a micro node after refinement")
        })
        .collect();
    mesh
}

//! Boundary curvature, corner classification, and the exact integer
//! feasibility count for the number of interior foliation zeros.
//!
//! Each boundary vertex carries the discrete geodesic curvature
//! `c = pi - (sum of incident triangle angles)`.  Corners are classified into
//! integer turning classes `n` by brackets of width `pi/3`, half-open so every
//! curvature lands in exactly one class:
//!
//! * `n = 1`  (convex corner)      for `c` in `(pi/3, +inf)`
//! * `n = 0`  (smooth)             for `c` in `(-pi/3, pi/3]`
//! * `n = -1` (reflex corner)      for `c` in `(-2*pi/3, -pi/3]`
//! * `n = -2` (deep reflex corner) for `c` in `(-inf, -2*pi/3]`
//!
//! A quad mesh whose boundary turns by `n * pi/2` at each corner exists only
//! if the combinatorial Gauss-Bonnet budget closes: with `lambda` the Euler
//! characteristic of the surface, the deficit `q = (4*lambda - sum(n)) / 2`
//! must be a non-positive integer, and `-q` is then the required number of
//! index `-1/2` zeros of the foliation (each, on the doubled surface, a
//! valence-3 irregular vertex pair).

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::math;
use crate::mesh::TriMesh;

/// Classifies a boundary-vertex curvature into a turning class in `-2..=1`.
pub fn classify_corner(curvature: f64) -> i8 {
    let third = core::f64::consts::FRAC_PI_3;
    if curvature > third {
        1
    } else if curvature > -third {
        0
    } else if curvature > -2.0 * third {
        -1
    } else {
        -2
    }
}

/// Per-vertex curvature and turning class for every boundary loop.
#[derive(Debug, Clone)]
pub struct BoundaryLabels {
    loops: Vec<LoopLabels>,
    class_by_vertex: BTreeMap<usize, i8>,
}

#[derive(Debug, Clone)]
struct LoopLabels {
    vertices: Vec<usize>,
    curvatures: Vec<f64>,
    classes: Vec<i8>,
}

impl BoundaryLabels {
    /// Computes curvature and class for every boundary vertex of `mesh`.
    pub fn classify(mesh: &TriMesh) -> BoundaryLabels {
        let mut loops = Vec::new();
        let mut class_by_vertex = BTreeMap::new();
        for l in 0..mesh.boundary_loops().len() {
            let vertices = mesh.boundary_loop_vertices(l);
            let curvatures: Vec<f64> = vertices
                .iter()
                .map(|&v| core::f64::consts::PI - mesh.angle_sum(v))
                .collect();
            let classes: Vec<i8> = curvatures.iter().map(|&c| classify_corner(c)).collect();
            for (&v, &n) in vertices.iter().zip(&classes) {
                class_by_vertex.insert(v, n);
            }
            loops.push(LoopLabels {
                vertices,
                curvatures,
                classes,
            });
        }
        BoundaryLabels {
            loops,
            class_by_vertex,
        }
    }

    pub fn loop_count(&self) -> usize {
        self.loops.len()
    }

    /// Boundary vertices of loop `l` in walk order.
    pub fn loop_vertices(&self, l: usize) -> &[usize] {
        &self.loops[l].vertices
    }

    /// Curvatures aligned with [`Self::loop_vertices`].
    pub fn loop_curvatures(&self, l: usize) -> &[f64] {
        &self.loops[l].curvatures
    }

    /// Turning classes aligned with [`Self::loop_vertices`].
    pub fn loop_classes(&self, l: usize) -> &[i8] {
        &self.loops[l].classes
    }

    /// Walk-order indices of the corners (class != 0) of loop `l`.
    pub fn corner_indices(&self, l: usize) -> Vec<usize> {
        self.loops[l]
            .classes
            .iter()
            .enumerate()
            .filter(|&(_, &n)| n != 0)
            .map(|(i, _)| i)
            .collect()
    }

    /// Turning class of a boundary vertex; `None` for interior vertices.
    pub fn class_of(&self, vertex: usize) -> Option<i8> {
        self.class_by_vertex.get(&vertex).copied()
    }

    /// All corner vertices (class != 0) over all loops.
    pub fn corner_vertices(&self) -> Vec<usize> {
        self.class_by_vertex
            .iter()
            .filter(|&(_, &n)| n != 0)
            .map(|(&v, _)| v)
            .collect()
    }

    /// Sum of turning classes over all boundary vertices.
    pub fn class_sum(&self) -> i64 {
        self.class_by_vertex.values().map(|&n| n as i64).sum()
    }
}

/// The surface is outside the method's scope.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BoundaryError {
    /// The method is defined for genus-0 surfaces only.
    GenusNotZero { genus: i64 },
}

impl core::fmt::Display for BoundaryError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            BoundaryError::GenusNotZero { genus } => {
                write!(f, "input surface has genus {genus}; only genus 0 is supported")
            }
        }
    }
}

impl core::error::Error for BoundaryError {}

/// Outcome of the exact zero-count computation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeasibilityReport {
    /// Euler characteristic of the input surface.
    pub euler: i64,
    /// Genus (always 0 on success) and boundary loop count.
    pub genus: i64,
    pub boundaries: usize,
    /// Corner counts by class: convex (+1), smooth (0), reflex (-1),
    /// deep reflex (-2).
    pub n_convex: usize,
    pub n_smooth: usize,
    pub n_reflex: usize,
    pub n_deep_reflex: usize,
    /// Sum of all turning classes.
    pub class_sum: i64,
    /// Reduced fraction `(4*euler - class_sum) / 2`.
    pub quotient_num: i64,
    pub quotient_den: i64,
    /// True when the quotient is a non-positive integer.
    pub feasible: bool,
    /// Number of required interior zeros on the input surface
    /// (`-quotient`); zero when infeasible.
    pub zero_count: i64,
}

fn fraction_string(num: i64, den: i64) -> String {
    let g = math::gcd_i64(num, den).max(1);
    let (num, den) = (num / g, den / g);
    if den == 1 {
        format!("{num}")
    } else {
        format!("{num}/{den}")
    }
}

impl FeasibilityReport {
    /// The quotient as a human-readable fraction, e.g. `"0"`, `"-2"`,
    /// or `"-1/2"`.
    pub fn quotient_string(&self) -> String {
        fraction_string(self.quotient_num, self.quotient_den)
    }

    /// Total target boundary curvature divided by pi, as a fraction: the
    /// corner classes each stand for a turn of `n * pi/2`.
    pub fn boundary_curvature_over_pi(&self) -> String {
        fraction_string(self.class_sum, 2)
    }
}

/// Evaluates the corner budget of a classified surface.
pub fn feasibility(
    mesh: &TriMesh,
    labels: &BoundaryLabels,
) -> Result<FeasibilityReport, BoundaryError> {
    let topo = mesh.topology();
    if topo.genus != 0 {
        return Err(BoundaryError::GenusNotZero { genus: topo.genus });
    }
    let euler = topo.euler;
    let mut counts = [0usize; 4];
    for l in 0..labels.loop_count() {
        for &n in labels.loop_classes(l) {
            let slot = match n {
                1 => 0,
                0 => 1,
                -1 => 2,
                _ => 3,
            };
            counts[slot] += 1;
        }
    }
    let class_sum = labels.class_sum();
    let raw_num = 4 * euler - class_sum;
    let g = math::gcd_i64(raw_num, 2).max(1);
    let quotient_num = raw_num / g;
    let quotient_den = 2 / g;
    let feasible = quotient_den == 1 && quotient_num <= 0;
    Ok(FeasibilityReport {
        euler,
        genus: topo.genus,
        boundaries: topo.boundary_count,
        n_convex: counts[0],
        n_smooth: counts[1],
        n_reflex: counts[2],
        n_deep_reflex: counts[3],
        class_sum,
        quotient_num,
        quotient_den,
        feasible,
        zero_count: if feasible { -quotient_num } else { 0 },
    })
}

/// Same budget computation with every boundary vertex treated as smooth —
/// the feasibility test of the plain boundary-aligned pipeline, which never
/// puts irregular vertices on the boundary.  The quotient reduces to
/// `2 * euler`, so only surfaces with non-positive Euler characteristic
/// (two or more boundaries) pass.
pub fn feasibility_all_smooth(mesh: &TriMesh) -> Result<FeasibilityReport, BoundaryError> {
    let topo = mesh.topology();
    if topo.genus != 0 {
        return Err(BoundaryError::GenusNotZero { genus: topo.genus });
    }
    let euler = topo.euler;
    let n_smooth: usize = (0..mesh.boundary_loops().len())
        .map(|l| mesh.boundary_loops()[l].len())
        .sum();
    let quotient_num = 2 * euler;
    let feasible = quotient_num <= 0;
    Ok(FeasibilityReport {
        euler,
        genus: topo.genus,
        boundaries: topo.boundary_count,
        n_convex: 0,
        n_smooth,
        n_reflex: 0,
        n_deep_reflex: 0,
        class_sum: 0,
        quotient_num,
        quotient_den: 1,
        feasible,
        zero_count: if feasible { -quotient_num } else { 0 },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    const PI: f64 = core::f64::consts::PI;

    #[test]
    fn classification_brackets_are_half_open() {
        let third = core::f64::consts::FRAC_PI_3;
        assert_eq!(classify_corner(PI / 2.0), 1);
        assert_eq!(classify_corner(third + 1e-9), 1);
        assert_eq!(classify_corner(third), 0); // upper bracket end included
        assert_eq!(classify_corner(0.0), 0);
        assert_eq!(classify_corner(-third), -1); // lower end excluded from 0
        assert_eq!(classify_corner(-third - 1e-9), -1);
        assert_eq!(classify_corner(-2.0 * third), -2);
        assert_eq!(classify_corner(-2.0 * third + 1e-9), -1);
        assert_eq!(classify_corner(-PI), -2);
    }

    #[test]
    fn square_disk_has_four_convex_corners() {
        let m = fixtures::square_disk(9);
        let labels = BoundaryLabels::classify(&m);
        assert_eq!(labels.loop_count(), 1);
        let r = feasibility(&m, &labels).unwrap();
        assert_eq!(r.euler, 1);
        assert_eq!(r.n_convex, 4);
        assert_eq!(r.n_smooth, 28);
        assert_eq!(r.class_sum, 4);
        assert_eq!((r.quotient_num, r.quotient_den), (0, 1));
        assert!(r.feasible);
        assert_eq!(r.zero_count, 0);
        assert_eq!(r.quotient_string(), "0");
    }

    #[test]
    fn annulus_needs_two_zeros() {
        let m = fixtures::square_annulus(24, 5);
        let labels = BoundaryLabels::classify(&m);
        let r = feasibility(&m, &labels).unwrap();
        assert_eq!(r.euler, 0);
        assert_eq!(r.n_convex, 4);
        assert_eq!(r.n_reflex + r.n_deep_reflex, 0);
        assert_eq!((r.quotient_num, r.quotient_den), (-2, 1));
        assert!(r.feasible);
        assert_eq!(r.zero_count, 2);
    }

    #[test]
    fn two_hole_plate_needs_four_zeros() {
        let m = fixtures::two_hole_plate(4, 4);
        let labels = BoundaryLabels::classify(&m);
        let r = feasibility(&m, &labels).unwrap();
        assert_eq!(r.euler, -1);
        assert_eq!(r.n_convex, 4);
        assert_eq!((r.quotient_num, r.quotient_den), (-4, 1));
        assert!(r.feasible);
        assert_eq!(r.zero_count, 4);
    }

    #[test]
    fn pentagon_is_infeasible_by_half() {
        let m = fixtures::pentagon_disk(3, 4);
        let labels = BoundaryLabels::classify(&m);
        let r = feasibility(&m, &labels).unwrap();
        assert_eq!(r.n_convex, 5);
        assert_eq!((r.quotient_num, r.quotient_den), (-1, 2));
        assert!(!r.feasible);
        assert_eq!(r.zero_count, 0);
        assert_eq!(r.quotient_string(), "-1/2");
    }

    #[test]
    fn triangle_is_infeasible_by_half() {
        let m = fixtures::triangle_disk(6);
        let labels = BoundaryLabels::classify(&m);
        let r = feasibility(&m, &labels).unwrap();
        assert_eq!(r.n_convex, 3);
        assert_eq!((r.quotient_num, r.quotient_den), (1, 2));
        assert!(!r.feasible);
    }

    #[test]
    fn l_disk_budget_closes_with_reflex_corner() {
        let m = fixtures::l_disk(9);
        let labels = BoundaryLabels::classify(&m);
        let r = feasibility(&m, &labels).unwrap();
        assert_eq!(r.n_convex, 5);
        assert_eq!(r.n_reflex, 1);
        assert_eq!(r.class_sum, 4);
        assert_eq!((r.quotient_num, r.quotient_den), (0, 1));
        assert!(r.feasible);
        assert_eq!(r.zero_count, 0);
    }

    #[test]
    fn tube_is_corner_free_and_feasible() {
        let m = fixtures::tube(12, 6);
        let labels = BoundaryLabels::classify(&m);
        let r = feasibility(&m, &labels).unwrap();
        assert_eq!(r.n_convex + r.n_reflex + r.n_deep_reflex, 0);
        assert_eq!((r.quotient_num, r.quotient_den), (0, 1));
        assert!(r.feasible);
        assert_eq!(r.zero_count, 0);
    }

    #[test]
    fn genus_one_surface_is_rejected() {
        let m = fixtures::torus_with_hole(10, 10);
        let labels = BoundaryLabels::classify(&m);
        assert_eq!(
            feasibility(&m, &labels),
            Err(BoundaryError::GenusNotZero { genus: 1 })
        );
        assert_eq!(
            feasibility_all_smooth(&m),
            Err(BoundaryError::GenusNotZero { genus: 1 })
        );
    }

    #[test]
    fn all_smooth_budget_matches_plain_pipeline_scope() {
        // A disk cannot be meshed without boundary irregularities...
        let sq = fixtures::square_disk(9);
        let r = feasibility_all_smooth(&sq).unwrap();
        assert_eq!((r.quotient_num, r.quotient_den), (2, 1));
        assert!(!r.feasible);
        // ...while multi-boundary surfaces can.
        let ann = fixtures::square_annulus(24, 5);
        let r = feasibility_all_smooth(&ann).unwrap();
        assert_eq!(r.quotient_num, 0);
        assert!(r.feasible);
        assert_eq!(r.zero_count, 0);
        let plate = fixtures::two_hole_plate(4, 4);
        let r = feasibility_all_smooth(&plate).unwrap();
        assert_eq!(r.quotient_num, -2);
        assert!(r.feasible);
        assert_eq!(r.zero_count, 2);
    }

    #[test]
    fn curvature_strings_are_reduced_fractions() {
        let m = fixtures::pentagon_disk(3, 4);
        let labels = BoundaryLabels::classify(&m);
        let r = feasibility(&m, &labels).unwrap();
        assert_eq!(r.boundary_curvature_over_pi(), "5/2");
        let m = fixtures::square_disk(9);
        let labels = BoundaryLabels::classify(&m);
        let r = feasibility(&m, &labels).unwrap();
        assert_eq!(r.boundary_curvature_over_pi(), "2");
    }

    #[test]
    fn discrete_gauss_bonnet_holds_on_fixtures() {
        for kind in [
            fixtures::FixtureKind::SquareDisk,
            fixtures::FixtureKind::SquareAnnulus,
            fixtures::FixtureKind::TwoHolePlate,
            fixtures::FixtureKind::PentagonDisk,
            fixtures::FixtureKind::LDisk,
            fixtures::FixtureKind::Tube,
        ] {
            let m = fixtures::generate(kind, 12);
            let mut total = 0.0;
            for v in 0..m.n_vertices() {
                let target = if m.is_boundary_vertex(v) { PI } else { 2.0 * PI };
                total += target - m.angle_sum(v);
            }
            let expect = 2.0 * PI * m.topology().euler as f64;
            assert!(
                (total - expect).abs() < 1e-8,
                "{}: angle defect {total} vs 2*pi*euler {expect}",
                kind.name()
            );
        }
    }

    #[test]
    fn corner_lookup_matches_loop_classes() {
        let m = fixtures::l_disk(9);
        let labels = BoundaryLabels::classify(&m);
        let corners = labels.corner_vertices();
        assert_eq!(corners.len(), 6);
        for v in corners {
            assert_ne!(labels.class_of(v), Some(0));
            assert!(m.is_boundary_vertex(v));
        }
        // Interior vertices have no class.
        let interior = (0..m.n_vertices())
            .find(|&v| !m.is_boundary_vertex(v))
            .unwrap();
        assert_eq!(labels.class_of(interior), None);
    }
}

//! Built-in test surfaces.
//!
//! Every generator is pure arithmetic over one `resolution` knob, so the test
//! suite and the command line produce bit-identical meshes.  All planar
//! fixtures live in the z = 0 plane, which keeps corner angle sums exact:
//! a square corner really sums to pi/2 up to rounding.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::math;
use crate::mesh::TriMesh;

/// The named fixture surfaces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FixtureKind {
    /// Unit square disk on a regular grid; 4 convex corners.
    SquareDisk,
    /// Unit square plate with one circular hole; 4 convex corners, one
    /// smooth interior boundary.
    SquareAnnulus,
    /// Unit square plate with two circular holes; 4 convex corners, two
    /// smooth interior boundaries.
    TwoHolePlate,
    /// Regular pentagon disk; 5 convex corners (infeasible on purpose).
    PentagonDisk,
    /// L-shaped disk; 5 convex corners plus 1 reflex corner.
    LDisk,
    /// Equilateral triangle disk; 3 convex corners (odd corner parity).
    TriangleDisk,
    /// Open circular tube; two smooth boundaries, intrinsically flat.
    Tube,
    /// Torus with one triangular puncture; genus 1 (invalid input).
    TorusWithHole,
}

impl FixtureKind {
    pub const ALL: [FixtureKind; 8] = [
        FixtureKind::SquareDisk,
        FixtureKind::SquareAnnulus,
        FixtureKind::TwoHolePlate,
        FixtureKind::PentagonDisk,
        FixtureKind::LDisk,
        FixtureKind::TriangleDisk,
        FixtureKind::Tube,
        FixtureKind::TorusWithHole,
    ];

    /// Short name used by the command line and file stems.
    pub fn name(self) -> &'static str {
        match self {
            FixtureKind::SquareDisk => "sq",
            FixtureKind::SquareAnnulus => "ann",
            FixtureKind::TwoHolePlate => "3b",
            FixtureKind::PentagonDisk => "pent",
            FixtureKind::LDisk => "l",
            FixtureKind::TriangleDisk => "tri",
            FixtureKind::Tube => "cyl",
            FixtureKind::TorusWithHole => "torus",
        }
    }

    pub fn from_name(name: &str) -> Option<FixtureKind> {
        FixtureKind::ALL.iter().copied().find(|k| k.name() == name)
    }
}

/// Builds a fixture at the given resolution (clamped to each generator's
/// minimum).  The resolution is roughly "vertices along a characteristic
/// direction"; `square_disk(9)` is the canonical 81-vertex grid.
pub fn generate(kind: FixtureKind, resolution: usize) -> TriMesh {
    match kind {
        FixtureKind::SquareDisk => square_disk(resolution.max(2)),
        FixtureKind::SquareAnnulus => {
            let around = 4 * (resolution / 4).max(3);
            square_annulus(around, (resolution / 4).max(2))
        }
        FixtureKind::TwoHolePlate => {
            two_hole_plate((resolution / 6).max(2), (resolution / 6).max(2))
        }
        FixtureKind::PentagonDisk => {
            pentagon_disk((resolution / 5).max(2), (resolution / 3).max(2))
        }
        FixtureKind::LDisk => l_disk((resolution | 1).max(3)),
        FixtureKind::TriangleDisk => triangle_disk(resolution.max(2)),
        FixtureKind::Tube => tube(resolution.max(8), (resolution / 2).max(4)),
        FixtureKind::TorusWithHole => torus_with_hole(resolution.max(8), resolution.max(8)),
    }
}

/// Regular grid on the unit square, `res` vertices per side, every cell split
/// along the same diagonal.
pub fn square_disk(res: usize) -> TriMesh {
    let res = res.max(2);
    let n = res - 1;
    let mut positions = Vec::with_capacity(res * res);
    for j in 0..res {
        for i in 0..res {
            positions.push([i as f64 / n as f64, j as f64 / n as f64, 0.0]);
        }
    }
    let at = |i: usize, j: usize| j * res + i;
    let mut tris = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            tris.push([at(i, j), at(i + 1, j), at(i + 1, j + 1)]);
            tris.push([at(i, j), at(i + 1, j + 1), at(i, j + 1)]);
        }
    }
    TriMesh::build(positions, &tris).expect("square grid is manifold")
}

/// Point on the unit-square perimeter at parameter `s` in `[0, 4)`,
/// counter-clockwise from the origin corner.
fn square_perimeter(s: f64) -> [f64; 3] {
    if s < 1.0 {
        [s, 0.0, 0.0]
    } else if s < 2.0 {
        [1.0, s - 1.0, 0.0]
    } else if s < 3.0 {
        [3.0 - s, 1.0, 0.0]
    } else {
        [0.0, 4.0 - s, 0.0]
    }
}

/// Triangulates the band between two same-length vertex rings.  `outer` runs
/// counter-clockwise; `inner` lies inside it with matching indices.
fn band(tris: &mut Vec<[usize; 3]>, outer: &[usize], inner: &[usize], wrap: bool) {
    let n = outer.len();
    let last = if wrap { n } else { n - 1 };
    for k in 0..last {
        let k1 = (k + 1) % n;
        tris.push([outer[k], outer[k1], inner[k1]]);
        tris.push([outer[k], inner[k1], inner[k]]);
    }
}

/// Unit square plate with a circular hole of radius 0.25 at the centre.
/// `around` must be a multiple of 4 so the square corners are samples.
pub fn square_annulus(around: usize, radial: usize) -> TriMesh {
    let around = 4 * (around / 4).max(2);
    let radial = radial.max(1);
    let centre = [0.5, 0.5, 0.0];
    let outer: Vec<[f64; 3]> = (0..around)
        .map(|k| square_perimeter(4.0 * k as f64 / around as f64))
        .collect();
    let inner: Vec<[f64; 3]> = outer
        .iter()
        .map(|&p| math::add(centre, math::scale(math::normalize(math::sub(p, centre)), 0.25)))
        .collect();

    let mut positions = Vec::new();
    let mut rings: Vec<Vec<usize>> = Vec::new();
    for i in 0..=radial {
        let t = i as f64 / radial as f64;
        let ring = (0..around)
            .map(|k| {
                positions.push(math::lerp(outer[k], inner[k], t));
                positions.len() - 1
            })
            .collect();
        rings.push(ring);
    }
    let mut tris = Vec::new();
    for i in 0..radial {
        band(&mut tris, &rings[i], &rings[i + 1], true);
    }
    TriMesh::build(positions, &tris).expect("square annulus is manifold")
}

/// Unit square plate with two circular holes (radius 0.15 at x = 0.25 and
/// x = 0.75), built as two mirror-image half plates merged along x = 0.5.
pub fn two_hole_plate(m: usize, radial: usize) -> TriMesh {
    let m = m.max(2);
    let radial = radial.max(2);

    // Canonical sample list for the shared x = 0.5 edge, bottom to top, so
    // both halves reference bit-identical coordinates.
    let shared: Vec<[f64; 3]> = (0..=2 * m)
        .map(|j| [0.5, j as f64 / (2 * m) as f64, 0.0])
        .collect();

    // Perimeter of one half plate, counter-clockwise from its lower-left
    // corner.  Sides: bottom (m), outer vertical (2m), top (m), shared
    // vertical (2m).
    let half_perimeter = |left: f64, hole_x: f64, mirrored: bool| -> (Vec<[f64; 3]>, Vec<[f64; 3]>) {
        let right = left + 0.5;
        let mut outer: Vec<[f64; 3]> = Vec::with_capacity(6 * m);
        if !mirrored {
            // Left half: shared edge is the right side, walked upward.
            for k in 0..m {
                outer.push([left + 0.5 * k as f64 / m as f64, 0.0, 0.0]);
            }
            for k in 0..2 * m {
                outer.push(shared[k]);
            }
            for k in 0..m {
                outer.push([right - 0.5 * k as f64 / m as f64, 1.0, 0.0]);
            }
            for k in 0..2 * m {
                outer.push([left, 1.0 - k as f64 / (2 * m) as f64, 0.0]);
            }
        } else {
            // Right half: shared edge is the left side, walked downward.
            for k in 0..m {
                outer.push([left + 0.5 * k as f64 / m as f64, 0.0, 0.0]);
            }
            for k in 0..2 * m {
                outer.push([right, k as f64 / (2 * m) as f64, 0.0]);
            }
            for k in 0..m {
                outer.push([right - 0.5 * k as f64 / m as f64, 1.0, 0.0]);
            }
            for k in 0..2 * m {
                outer.push(shared[2 * m - k]);
            }
        }
        let centre = [hole_x, 0.5, 0.0];
        let inner = outer
            .iter()
            .map(|&p| math::add(centre, math::scale(math::normalize(math::sub(p, centre)), 0.15)))
            .collect();
        (outer, inner)
    };

    let mut positions: Vec<[f64; 3]> = Vec::new();
    let mut index: BTreeMap<[u64; 3], usize> = BTreeMap::new();
    let mut tris: Vec<[usize; 3]> = Vec::new();
    let mut intern = |positions: &mut Vec<[f64; 3]>, p: [f64; 3]| -> usize {
        let key = [p[0].to_bits(), p[1].to_bits(), p[2].to_bits()];
        *index.entry(key).or_insert_with(|| {
            positions.push(p);
            positions.len() - 1
        })
    };

    for (left, hole_x, mirrored) in [(0.0, 0.25, false), (0.5, 0.75, true)] {
        let (outer, inner) = half_perimeter(left, hole_x, mirrored);
        let mut rings: Vec<Vec<usize>> = Vec::new();
        for i in 0..=radial {
            let t = i as f64 / radial as f64;
            let ring = (0..outer.len())
                .map(|k| intern(&mut positions, math::lerp(outer[k], inner[k], t)))
                .collect();
            rings.push(ring);
        }
        for i in 0..radial {
            band(&mut tris, &rings[i], &rings[i + 1], true);
        }
    }
    TriMesh::build(positions, &tris).expect("two-hole plate is manifold")
}

/// Regular pentagon disk (circumradius 1), ring-triangulated to a centre fan.
pub fn pentagon_disk(side_samples: usize, rings: usize) -> TriMesh {
    let m = side_samples.max(2);
    let rings = rings.max(2);
    let corners: Vec<[f64; 3]> = (0..5)
        .map(|k| {
            let a = core::f64::consts::FRAC_PI_2 + 2.0 * core::f64::consts::PI * k as f64 / 5.0;
            [math::cos(a), math::sin(a), 0.0]
        })
        .collect();
    let mut perimeter = Vec::with_capacity(5 * m);
    for k in 0..5 {
        let a = corners[k];
        let b = corners[(k + 1) % 5];
        for j in 0..m {
            perimeter.push(math::lerp(a, b, j as f64 / m as f64));
        }
    }

    let mut positions = Vec::new();
    let mut ring_ids: Vec<Vec<usize>> = Vec::new();
    for i in 0..rings {
        let s = 1.0 - i as f64 / rings as f64;
        let ring = perimeter
            .iter()
            .map(|&p| {
                positions.push(math::scale(p, s));
                positions.len() - 1
            })
            .collect();
        ring_ids.push(ring);
    }
    let centre = positions.len();
    positions.push([0.0, 0.0, 0.0]);

    let mut tris = Vec::new();
    for i in 0..rings - 1 {
        band(&mut tris, &ring_ids[i], &ring_ids[i + 1], true);
    }
    let last = &ring_ids[rings - 1];
    for k in 0..last.len() {
        tris.push([last[k], last[(k + 1) % last.len()], centre]);
    }
    TriMesh::build(positions, &tris).expect("pentagon disk is manifold")
}

/// L-shaped disk: the unit-square grid with the open upper-right quadrant
/// removed.  `res` is forced odd so x = y = 0.5 are grid lines.
pub fn l_disk(res: usize) -> TriMesh {
    let res = (res | 1).max(3);
    let n = res - 1;
    let half = n / 2;
    let mut grid_id = alloc::vec![usize::MAX; res * res];
    let mut positions = Vec::new();
    let mut tris = Vec::new();
    let id_of = |positions: &mut Vec<[f64; 3]>, grid_id: &mut Vec<usize>, i: usize, j: usize| {
        let slot = j * res + i;
        if grid_id[slot] == usize::MAX {
            positions.push([i as f64 / n as f64, j as f64 / n as f64, 0.0]);
            grid_id[slot] = positions.len() - 1;
        }
        grid_id[slot]
    };
    for j in 0..n {
        for i in 0..n {
            if i >= half && j >= half {
                continue;
            }
            let v00 = id_of(&mut positions, &mut grid_id, i, j);
            let v10 = id_of(&mut positions, &mut grid_id, i + 1, j);
            let v11 = id_of(&mut positions, &mut grid_id, i + 1, j + 1);
            let v01 = id_of(&mut positions, &mut grid_id, i, j + 1);
            tris.push([v00, v10, v11]);
            tris.push([v00, v11, v01]);
        }
    }
    TriMesh::build(positions, &tris).expect("L disk is manifold")
}

/// Equilateral triangle disk, regularly subdivided into `n^2` triangles.
pub fn triangle_disk(n: usize) -> TriMesh {
    let n = n.max(2);
    let b = [1.0, 0.0, 0.0];
    let c = [0.5, math::sqrt(3.0) / 2.0, 0.0];
    let mut positions = Vec::new();
    let mut row_start = Vec::with_capacity(n + 1);
    for i in 0..=n {
        row_start.push(positions.len());
        for j in 0..=(n - i) {
            let fi = i as f64 / n as f64;
            let fj = j as f64 / n as f64;
            positions.push(math::add(math::scale(b, fj), math::scale(c, fi)));
        }
    }
    let at = |i: usize, j: usize| row_start[i] + j;
    let mut tris = Vec::new();
    for i in 0..n {
        for j in 0..(n - i) {
            tris.push([at(i, j), at(i, j + 1), at(i + 1, j)]);
            if j + 1 < n - i {
                tris.push([at(i, j + 1), at(i + 1, j + 1), at(i + 1, j)]);
            }
        }
    }
    TriMesh::build(positions, &tris).expect("triangle disk is manifold")
}

/// Open circular tube: radius 0.5, height 1, no caps.  Intrinsically flat,
/// so the relaxed height function is exactly linear.
pub fn tube(around: usize, height_divs: usize) -> TriMesh {
    let around = around.max(3);
    let hd = height_divs.max(1);
    let mut positions = Vec::new();
    for i in 0..=hd {
        for k in 0..around {
            let a = 2.0 * core::f64::consts::PI * k as f64 / around as f64;
            positions.push([0.5 * math::cos(a), 0.5 * math::sin(a), i as f64 / hd as f64]);
        }
    }
    let at = |k: usize, i: usize| i * around + k % around;
    let mut tris = Vec::new();
    for i in 0..hd {
        for k in 0..around {
            tris.push([at(k, i), at(k + 1, i), at(k + 1, i + 1)]);
            tris.push([at(k, i), at(k + 1, i + 1), at(k, i + 1)]);
        }
    }
    TriMesh::build(positions, &tris).expect("tube is manifold")
}

/// Torus (radii 1 and 0.3) with one face removed: genus 1, one boundary.
pub fn torus_with_hole(nu: usize, nv: usize) -> TriMesh {
    let nu = nu.max(8);
    let nv = nv.max(8);
    let mut positions = Vec::new();
    for i in 0..nu {
        for j in 0..nv {
            let u = 2.0 * core::f64::consts::PI * i as f64 / nu as f64;
            let v = 2.0 * core::f64::consts::PI * j as f64 / nv as f64;
            let w = 1.0 + 0.3 * math::cos(v);
            positions.push([w * math::cos(u), w * math::sin(u), 0.3 * math::sin(v)]);
        }
    }
    let at = |i: usize, j: usize| (i % nu) * nv + j % nv;
    let mut tris = Vec::new();
    for i in 0..nu {
        for j in 0..nv {
            tris.push([at(i, j), at(i + 1, j), at(i + 1, j + 1)]);
            tris.push([at(i, j), at(i + 1, j + 1), at(i, j + 1)]);
        }
    }
    tris.remove(0);
    TriMesh::build(positions, &tris).expect("punctured torus is manifold")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_disk_canonical_counts() {
        let m = square_disk(9);
        assert_eq!(m.n_vertices(), 81);
        assert_eq!(m.n_faces(), 128);
        let t = m.topology();
        assert_eq!(t.boundary_count, 1);
        assert_eq!(t.genus, 0);
        assert_eq!(t.euler, 1);
    }

    #[test]
    fn square_annulus_topology() {
        let m = square_annulus(24, 5);
        let t = m.topology();
        assert_eq!(t.boundary_count, 2);
        assert_eq!(t.genus, 0);
        assert_eq!(t.euler, 0);
    }

    #[test]
    fn two_hole_plate_topology() {
        let m = two_hole_plate(4, 4);
        let t = m.topology();
        assert_eq!(t.boundary_count, 3);
        assert_eq!(t.genus, 0);
        assert_eq!(t.euler, -1);
    }

    #[test]
    fn pentagon_disk_topology() {
        let m = pentagon_disk(3, 4);
        let t = m.topology();
        assert_eq!(t.boundary_count, 1);
        assert_eq!(t.genus, 0);
    }

    #[test]
    fn l_disk_topology_and_reflex_corner() {
        let m = l_disk(9);
        let t = m.topology();
        assert_eq!(t.boundary_count, 1);
        assert_eq!(t.genus, 0);
        // The reflex corner (0.5, 0.5) carries angle sum 3*pi/2.
        let v = (0..m.n_vertices())
            .find(|&v| {
                let p = m.position(v);
                p[0] == 0.5 && p[1] == 0.5
            })
            .unwrap();
        assert!((m.angle_sum(v) - 1.5 * core::f64::consts::PI).abs() < 1e-12);
    }

    #[test]
    fn triangle_disk_topology_and_corner_count() {
        let m = triangle_disk(6);
        let t = m.topology();
        assert_eq!(t.boundary_count, 1);
        assert_eq!(t.genus, 0);
        assert_eq!(m.n_faces(), 36);
    }

    #[test]
    fn tube_topology() {
        let m = tube(12, 6);
        let t = m.topology();
        assert_eq!(t.boundary_count, 2);
        assert_eq!(t.genus, 0);
        assert_eq!(t.euler, 0);
    }

    #[test]
    fn torus_with_hole_is_genus_one() {
        let m = torus_with_hole(10, 10);
        let t = m.topology();
        assert_eq!(t.boundary_count, 1);
        assert_eq!(t.genus, 1);
        assert_eq!(t.euler, -1);
    }

    #[test]
    fn generate_matches_named_generators() {
        let m = generate(FixtureKind::SquareDisk, 9);
        assert_eq!(m.n_vertices(), 81);
        for kind in FixtureKind::ALL {
            assert_eq!(FixtureKind::from_name(kind.name()), Some(kind));
            // Every fixture must build at the default-ish resolution.
            let mesh = generate(kind, 12);
            assert!(mesh.n_faces() > 0);
        }
    }
}

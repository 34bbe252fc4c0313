//! Halfedge triangle mesh with explicit boundary halfedges.
//!
//! Every edge carries exactly two halfedges; on boundary edges the outer one
//! has no face and its `next` walks along the boundary loop, so boundary
//! loops are first-class cycles.  Construction validates that the input is a
//! connected, orientable, manifold triangle surface without degenerate or
//! isolated elements — everything downstream relies on those invariants.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use crate::math;

/// Area tolerance: a face is degenerate when its area is below
/// `DEGENERATE_AREA_REL` times the squared bounding-box diagonal.
pub const DEGENERATE_AREA_REL: f64 = 1e-12;


const NONE: usize = usize::MAX;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MeshError {
    /// Fewer than one face, or an index out of range / repeated in a face.
    EmptyMesh,
    /// A face references a vertex index that does not exist.
    InvalidIndex { face: usize, index: usize },
    /// A face lists the same vertex twice.
    RepeatedVertex { face: usize },
    /// Two faces induce the same directed edge, or a vertex joins two fans.
    NonManifold { detail: NonManifoldKind },
    /// A face with (near-)zero area relative to the bounding box.
    DegenerateFace { face: usize },
    /// A vertex not referenced by any face.
    IsolatedVertex { vertex: usize },
    /// The surface has more than one connected component.
    Disconnected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NonManifoldKind {
    /// The same directed edge appears in two faces (also catches
    /// inconsistent orientation).
    DuplicateDirectedEdge { from: usize, to: usize },
    /// A vertex with more than one outgoing boundary halfedge (bowtie).
    BowtieVertex { vertex: usize },
}

impl core::fmt::Display for MeshError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            MeshError::EmptyMesh => write!(f, "mesh has no faces"),
            MeshError::InvalidIndex { face, index } => {
                write!(f, "face {face} references missing vertex {index}")
            }
            MeshError::RepeatedVertex { face } => {
                write!(f, "face {face} lists a vertex twice")
            }
            MeshError::NonManifold { detail } => match detail {
                NonManifoldKind::DuplicateDirectedEdge { from, to } => write!(
                    f,
                    "non-manifold: directed edge {from}->{to} appears in two faces \
                     (duplicate face or inconsistent orientation)"
                ),
                NonManifoldKind::BowtieVertex { vertex } => {
                    write!(f, "non-manifold: vertex {vertex} joins multiple fans")
                }
            },
            MeshError::DegenerateFace { face } => {
                write!(f, "face {face} is degenerate (area below tolerance)")
            }
            MeshError::IsolatedVertex { vertex } => {
                write!(f, "vertex {vertex} is not referenced by any face")
            }
            MeshError::Disconnected => write!(f, "mesh has more than one connected component"),
        }
    }
}

impl core::error::Error for MeshError {}

#[derive(Debug, Clone, Copy)]
struct Halfedge {
    origin: usize,
    twin: usize,
    next: usize,
    prev: usize,
    /// `NONE` for boundary halfedges.
    face: usize,
    edge: usize,
}

/// Aggregate topological counts of a connected surface with boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Topology {
    /// Euler characteristic `V - E + F`.
    pub euler: i64,
    /// Genus, from `euler = 2 - 2*genus - boundary_count`.
    pub genus: i64,
    /// Number of boundary loops.
    pub boundary_count: usize,
}

/// Connected manifold triangle mesh with boundary.
#[derive(Debug, Clone)]
pub struct TriMesh {
    positions: Vec<[f64; 3]>,
    halfedges: Vec<Halfedge>,
    /// face -> one of its interior halfedges
    face_he: Vec<usize>,
    /// vertex -> outgoing halfedge (the boundary one for boundary vertices)
    vertex_he: Vec<usize>,
    /// edge -> the lower-indexed of its two halfedges
    edge_he: Vec<usize>,
    /// boundary loops as cycles of boundary halfedges
    loops: Vec<Vec<usize>>,
    /// vertex -> boundary loop index, or NONE for interior vertices
    vertex_loop: Vec<usize>,
}

impl TriMesh {
    /// Builds the halfedge structure from positions and triangles, checking
    /// all structural invariants.
    pub fn build(positions: Vec<[f64; 3]>, tris: &[[usize; 3]]) -> Result<TriMesh, MeshError> {
        if tris.is_empty() || positions.is_empty() {
            return Err(MeshError::EmptyMesh);
        }
        let nv = positions.len();
        for (fi, t) in tris.iter().enumerate() {
            for &v in t {
                if v >= nv {
                    return Err(MeshError::InvalidIndex { face: fi, index: v });
                }
            }
            if t[0] == t[1] || t[1] == t[2] || t[2] == t[0] {
                return Err(MeshError::RepeatedVertex { face: fi });
            }
        }

        let diag = bbox_diagonal(&positions);
        let area_tol = DEGENERATE_AREA_REL * diag * diag;
        for (fi, t) in tris.iter().enumerate() {
            let a = math::sub(positions[t[1]], positions[t[0]]);
            let b = math::sub(positions[t[2]], positions[t[0]]);
            if 0.5 * math::norm(math::cross(a, b)) < area_tol {
                return Err(MeshError::DegenerateFace { face: fi });
            }
        }

        // Interior halfedges: 3 per face, in face order.
        let mut halfedges: Vec<Halfedge> = Vec::with_capacity(tris.len() * 3);
        let mut face_he = Vec::with_capacity(tris.len());
        let mut directed: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        for (fi, t) in tris.iter().enumerate() {
            let base = halfedges.len();
            face_he.push(base);
            for k in 0..3 {
                let from = t[k];
                let to = t[(k + 1) % 3];
                if directed.insert((from, to), base + k).is_some() {
                    return Err(MeshError::NonManifold {
                        detail: NonManifoldKind::DuplicateDirectedEdge { from, to },
                    });
                }
                halfedges.push(Halfedge {
                    origin: from,
                    twin: NONE,
                    next: base + (k + 1) % 3,
                    prev: base + (k + 2) % 3,
                    face: fi,
                    edge: NONE,
                });
            }
        }

        // Twin linking; unmatched directed edges get a boundary halfedge.
        let n_interior = halfedges.len();
        for h in 0..n_interior {
            if halfedges[h].twin != NONE {
                continue;
            }
            let from = halfedges[h].origin;
            let to = halfedges[halfedges[h].next].origin;
            if let Some(&t) = directed.get(&(to, from)) {
                halfedges[h].twin = t;
                halfedges[t].twin = h;
            } else {
                let b = halfedges.len();
                halfedges.push(Halfedge {
                    origin: to,
                    twin: h,
                    next: NONE,
                    prev: NONE,
                    face: NONE,
                    edge: NONE,
                });
                halfedges[h].twin = b;
            }
        }

        // Boundary `next`: the unique outgoing boundary halfedge at the
        // destination vertex.  Two outgoing boundary halfedges at one vertex
        // mean two fans meet there.
        let mut out_boundary: Vec<usize> = vec![NONE; nv];
        for h in n_interior..halfedges.len() {
            let v = halfedges[h].origin;
            if out_boundary[v] != NONE {
                return Err(MeshError::NonManifold {
                    detail: NonManifoldKind::BowtieVertex { vertex: v },
                });
            }
            out_boundary[v] = h;
        }
        for h in n_interior..halfedges.len() {
            let dest = halfedges[halfedges[h].twin].origin;
            let nxt = out_boundary[dest];
            debug_assert_ne!(nxt, NONE);
            halfedges[h].next = nxt;
            halfedges[nxt].prev = h;
        }

        // Vertex -> outgoing halfedge, preferring the boundary one so that
        // fan walks start and end at the boundary.
        let mut vertex_he = vec![NONE; nv];
        for (h, he) in halfedges.iter().enumerate() {
            let v = he.origin;
            if vertex_he[v] == NONE || he.face == NONE {
                vertex_he[v] = h;
            }
        }
        if let Some(v) = vertex_he.iter().position(|&h| h == NONE) {
            return Err(MeshError::IsolatedVertex { vertex: v });
        }

        // Edge ids: one per twin pair, keyed by the lower halfedge index.
        let mut edge_he = Vec::new();
        for h in 0..halfedges.len() {
            if h < halfedges[h].twin {
                let e = edge_he.len();
                edge_he.push(h);
                halfedges[h].edge = e;
                let t = halfedges[h].twin;
                halfedges[t].edge = e;
            }
        }

        // Boundary loops and the vertex -> loop map.
        let mut loops = Vec::new();
        let mut vertex_loop = vec![NONE; nv];
        let mut seen = vec![false; halfedges.len()];
        for h0 in n_interior..halfedges.len() {
            if seen[h0] {
                continue;
            }
            let li = loops.len();
            let mut cycle = Vec::new();
            let mut h = h0;
            loop {
                seen[h] = true;
                vertex_loop[halfedges[h].origin] = li;
                cycle.push(h);
                h = halfedges[h].next;
                if h == h0 {
                    break;
                }
            }
            loops.push(cycle);
        }

        let mesh = TriMesh {
            positions,
            halfedges,
            face_he,
            vertex_he,
            edge_he,
            loops,
            vertex_loop,
        };

        // Connectivity: breadth-first search over vertex adjacency.
        let mut reached = vec![false; nv];
        let mut queue = vec![0usize];
        reached[0] = true;
        let mut count = 1usize;
        while let Some(v) = queue.pop() {
            for h in mesh.outgoing(v) {
                let w = mesh.dest(h);
                if !reached[w] {
                    reached[w] = true;
                    count += 1;
                    queue.push(w);
                }
            }
        }
        if count != nv {
            return Err(MeshError::Disconnected);
        }

        Ok(mesh)
    }

    pub fn n_vertices(&self) -> usize {
        self.positions.len()
    }

    pub fn n_faces(&self) -> usize {
        self.face_he.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edge_he.len()
    }

    pub fn n_halfedges(&self) -> usize {
        self.halfedges.len()
    }

    pub fn position(&self, v: usize) -> [f64; 3] {
        self.positions[v]
    }

    pub fn positions(&self) -> &[[f64; 3]] {
        &self.positions
    }

    pub fn origin(&self, h: usize) -> usize {
        self.halfedges[h].origin
    }

    pub fn dest(&self, h: usize) -> usize {
        self.halfedges[self.halfedges[h].twin].origin
    }

    pub fn twin(&self, h: usize) -> usize {
        self.halfedges[h].twin
    }

    pub fn next(&self, h: usize) -> usize {
        self.halfedges[h].next
    }

    pub fn prev(&self, h: usize) -> usize {
        self.halfedges[h].prev
    }

    pub fn face_of(&self, h: usize) -> Option<usize> {
        let f = self.halfedges[h].face;
        if f == NONE {
            None
        } else {
            Some(f)
        }
    }

    pub fn edge_of(&self, h: usize) -> usize {
        self.halfedges[h].edge
    }

    pub fn is_boundary_halfedge(&self, h: usize) -> bool {
        self.halfedges[h].face == NONE
    }

    pub fn face_halfedge(&self, f: usize) -> usize {
        self.face_he[f]
    }

    pub fn face_vertices(&self, f: usize) -> [usize; 3] {
        let h0 = self.face_he[f];
        let h1 = self.halfedges[h0].next;
        let h2 = self.halfedges[h1].next;
        [
            self.halfedges[h0].origin,
            self.halfedges[h1].origin,
            self.halfedges[h2].origin,
        ]
    }

    /// One representative halfedge of the edge (the lower-indexed one).
    pub fn edge_halfedge(&self, e: usize) -> usize {
        self.edge_he[e]
    }

    pub fn edge_vertices(&self, e: usize) -> [usize; 2] {
        let h = self.edge_he[e];
        [self.origin(h), self.dest(h)]
    }

    pub fn edge_length(&self, e: usize) -> f64 {
        let [a, b] = self.edge_vertices(e);
        math::dist(self.positions[a], self.positions[b])
    }

    pub fn vertex_halfedge(&self, v: usize) -> usize {
        self.vertex_he[v]
    }

    pub fn is_boundary_vertex(&self, v: usize) -> bool {
        self.vertex_loop[v] != NONE
    }

    /// Boundary loop index of a boundary vertex.
    pub fn boundary_loop_of(&self, v: usize) -> Option<usize> {
        let l = self.vertex_loop[v];
        if l == NONE {
            None
        } else {
            Some(l)
        }
    }

    /// All outgoing halfedges of `v`, starting from the stored one and
    /// rotating through the full fan (the walk closes through the boundary
    /// halfedges for boundary vertices).
    pub fn outgoing(&self, v: usize) -> Vec<usize> {
        let h0 = self.vertex_he[v];
        let mut out = Vec::new();
        let mut h = h0;
        loop {
            out.push(h);
            h = self.halfedges[self.halfedges[h].twin].next;
            if h == h0 {
                break;
            }
        }
        out
    }

    pub fn vertex_neighbors(&self, v: usize) -> Vec<usize> {
        self.outgoing(v).into_iter().map(|h| self.dest(h)).collect()
    }

    pub fn vertex_faces(&self, v: usize) -> Vec<usize> {
        self.outgoing(v)
            .into_iter()
            .filter_map(|h| self.face_of(h))
            .collect()
    }

    /// Boundary loops as cycles of boundary halfedges.
    pub fn boundary_loops(&self) -> &[Vec<usize>] {
        &self.loops
    }

    /// Vertices of boundary loop `l` in cycle order.
    pub fn boundary_loop_vertices(&self, l: usize) -> Vec<usize> {
        self.loops[l].iter().map(|&h| self.origin(h)).collect()
    }

    pub fn boundary_loop_length(&self, l: usize) -> f64 {
        self.loops[l]
            .iter()
            .map(|&h| math::dist(self.positions[self.origin(h)], self.positions[self.dest(h)]))
            .sum()
    }

    pub fn topology(&self) -> Topology {
        let euler =
            self.n_vertices() as i64 - self.n_edges() as i64 + self.n_faces() as i64;
        let b = self.loops.len();
        Topology {
            euler,
            genus: (2 - b as i64 - euler) / 2,
            boundary_count: b,
        }
    }

    /// Interior angle of face `f` at vertex `v`, computed from the three edge
    /// lengths so the three angles of a face sum to pi up to rounding.
    pub fn interior_angle(&self, f: usize, v: usize) -> f64 {
        let [a, b, c] = self.face_vertices(f);
        let (p, q, r) = if v == a {
            (a, b, c)
        } else if v == b {
            (b, c, a)
        } else {
            debug_assert_eq!(v, c);
            (c, a, b)
        };
        let lq = math::dist(self.positions[p], self.positions[q]);
        let lr = math::dist(self.positions[p], self.positions[r]);
        let lqr = math::dist(self.positions[q], self.positions[r]);
        math::acos_clamped((lq * lq + lr * lr - lqr * lqr) / (2.0 * lq * lr))
    }

    /// Sum of incident interior angles at `v`.
    pub fn angle_sum(&self, v: usize) -> f64 {
        self.vertex_faces(v)
            .into_iter()
            .map(|f| self.interior_angle(f, v))
            .sum()
    }

    /// Cotangent weight of edge `e`: the mean of the cotangents of the angles
    /// opposite the edge (one term on boundary edges).  Negative on edges
    /// flanked by sufficiently obtuse triangles; kept unclamped so the
    /// relaxation's fixed points stay exactly the geometric harmonic maps the
    /// flat charts integrate.
    pub fn cotan_weight(&self, e: usize) -> f64 {
        let h = self.edge_he[e];
        let mut sum = 0.0;
        let mut n = 0.0;
        for hh in [h, self.halfedges[h].twin] {
            if self.halfedges[hh].face == NONE {
                continue;
            }
            let opp = self.origin(self.halfedges[hh].prev);
            let a = self.positions[self.origin(hh)];
            let b = self.positions[self.dest(hh)];
            let o = self.positions[opp];
            let u = math::sub(a, o);
            let v = math::sub(b, o);
            let area2 = math::norm(math::cross(u, v));
            if area2 > 0.0 {
                sum += math::dot(u, v) / area2;
            }
            n += 1.0;
        }
        debug_assert!(n > 0.0);
        sum / 2.0
    }

    pub fn face_area(&self, f: usize) -> f64 {
        let [a, b, c] = self.face_vertices(f);
        let u = math::sub(self.positions[b], self.positions[a]);
        let v = math::sub(self.positions[c], self.positions[a]);
        0.5 * math::norm(math::cross(u, v))
    }

    /// Unit normal of face `f` (right-hand rule on the vertex order).
    pub fn face_normal(&self, f: usize) -> [f64; 3] {
        let [a, b, c] = self.face_vertices(f);
        let u = math::sub(self.positions[b], self.positions[a]);
        let v = math::sub(self.positions[c], self.positions[a]);
        math::normalize(math::cross(u, v))
    }

    pub fn bbox(&self) -> ([f64; 3], [f64; 3]) {
        bbox(&self.positions)
    }

    pub fn bbox_diagonal(&self) -> f64 {
        bbox_diagonal(&self.positions)
    }

    /// Faces as index triples (in face order).
    pub fn triangles(&self) -> Vec<[usize; 3]> {
        (0..self.n_faces()).map(|f| self.face_vertices(f)).collect()
    }
}

fn bbox(positions: &[[f64; 3]]) -> ([f64; 3], [f64; 3]) {
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in positions {
        for k in 0..3 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    (lo, hi)
}

fn bbox_diagonal(positions: &[[f64; 3]]) -> f64 {
    let (lo, hi) = bbox(positions);
    math::norm(math::sub(hi, lo))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn two_tris() -> TriMesh {
        // Unit square split along the (0,0)-(1,1) diagonal.
        let positions = vec![
            [0.0, 0.0, 0.0],
            [1.0, 0.0, 0.0],
            [1.0, 1.0, 0.0],
            [0.0, 1.0, 0.0],
        ];
        TriMesh::build(positions, &[[0, 1, 2], [0, 2, 3]]).unwrap()
    }

    #[test]
    fn counts_and_topology() {
        let m = two_tris();
        assert_eq!(m.n_vertices(), 4);
        assert_eq!(m.n_faces(), 2);
        assert_eq!(m.n_edges(), 5);
        let t = m.topology();
        assert_eq!(t.euler, 1);
        assert_eq!(t.genus, 0);
        assert_eq!(t.boundary_count, 1);
    }

    #[test]
    fn boundary_loop_walks_all_four_vertices() {
        let m = two_tris();
        assert_eq!(m.boundary_loops().len(), 1);
        let mut vs = m.boundary_loop_vertices(0);
        vs.sort_unstable();
        assert_eq!(vs, vec![0, 1, 2, 3]);
        for v in 0..4 {
            assert!(m.is_boundary_vertex(v));
        }
    }

    #[test]
    fn fan_walk_closes_through_boundary() {
        let m = two_tris();
        // Vertex 0 touches both faces and two boundary edges.
        let out = m.outgoing(0);
        assert_eq!(out.len(), 3);
        assert_eq!(m.vertex_faces(0).len(), 2);
        let mut nbrs = m.vertex_neighbors(0);
        nbrs.sort_unstable();
        assert_eq!(nbrs, vec![1, 2, 3]);
    }

    #[test]
    fn face_angles_sum_to_pi() {
        let m = two_tris();
        for f in 0..m.n_faces() {
            let s: f64 = m
                .face_vertices(f)
                .into_iter()
                .map(|v| m.interior_angle(f, v))
                .sum();
            assert!((s - core::f64::consts::PI).abs() < 1e-12);
        }
    }

    #[test]
    fn diagonal_edge_weight_vanishes_at_right_angles() {
        let m = two_tris();
        // The diagonal is opposite two right angles: cot(pi/2) = 0 twice.
        let e = (0..m.n_edges())
            .find(|&e| {
                let mut vs = m.edge_vertices(e);
                vs.sort_unstable();
                vs == [0, 2]
            })
            .unwrap();
        assert!(m.cotan_weight(e).abs() < 1e-12);
    }

    #[test]
    fn duplicate_directed_edge_is_rejected() {
        let positions = vec![
            [0.0, 0.0, 0.0],
            [1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
        ];
        let err = TriMesh::build(positions, &[[0, 1, 2], [0, 1, 2]]).unwrap_err();
        assert!(matches!(err, MeshError::NonManifold { .. }));
    }

    #[test]
    fn bowtie_vertex_is_rejected() {
        // Two triangles sharing only vertex 0.
        let positions = vec![
            [0.0, 0.0, 0.0],
            [1.0, 0.0, 0.0],
            [1.0, 1.0, 0.0],
            [-1.0, 0.0, 0.0],
            [-1.0, -1.0, 0.0],
        ];
        let err = TriMesh::build(positions, &[[0, 1, 2], [0, 3, 4]]).unwrap_err();
        assert!(matches!(
            err,
            MeshError::NonManifold {
                detail: NonManifoldKind::BowtieVertex { vertex: 0 }
            }
        ));
    }

    #[test]
    fn degenerate_face_is_rejected() {
        let positions = vec![
            [0.0, 0.0, 0.0],
            [1.0, 0.0, 0.0],
            [2.0, 0.0, 0.0],
        ];
        let err = TriMesh::build(positions, &[[0, 1, 2]]).unwrap_err();
        assert_eq!(err, MeshError::DegenerateFace { face: 0 });
    }

    #[test]
    fn disconnected_mesh_is_rejected() {
        let positions = vec![
            [0.0, 0.0, 0.0],
            [1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [5.0, 0.0, 0.0],
            [6.0, 0.0, 0.0],
            [5.0, 1.0, 0.0],
        ];
        let err = TriMesh::build(positions, &[[0, 1, 2], [3, 4, 5]]).unwrap_err();
        assert_eq!(err, MeshError::Disconnected);
    }

    #[test]
    fn isolated_vertex_is_rejected() {
        let positions = vec![
            [0.0, 0.0, 0.0],
            [1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [9.0, 9.0, 9.0],
        ];
        let err = TriMesh::build(positions, &[[0, 1, 2]]).unwrap_err();
        assert_eq!(err, MeshError::IsolatedVertex { vertex: 3 });
    }

    #[test]
    fn empty_input_is_rejected() {
        assert_eq!(
            TriMesh::build(vec![], &[]).unwrap_err(),
            MeshError::EmptyMesh
        );
    }
}

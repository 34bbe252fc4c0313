//! The modified double cover: gluing the surface to a reflected copy of
//! itself along a selected subset of boundary segments.
//!
//! Boundary loops are split at corners into segments.  A segment is either
//! *tagged* (glued to its mirror image, so it disappears into the interior of
//! the doubled surface) or left free (both copies keep it as boundary).  The
//! selection is forced by the corner classes:
//!
//! * a convex corner (class `+1`) must have exactly one tagged side — the
//!   corner then becomes a smooth boundary point of the cover,
//! * a reflex corner (class `-1` or `-2`) must have both sides tagged — the
//!   corner becomes an interior cone point, later a zero of the foliation,
//! * corner-free loops stay untagged and are covered by two disjoint copies.
//!
//! These rules propagate around each loop; when they conflict (for example
//! five convex corners and one reflex corner) no valid cover exists and the
//! surface is rejected.  When nothing at all is tagged — a corner-free
//! surface — the cover degenerates to the surface itself and the deck
//! transformation to the identity.

use alloc::vec;
use alloc::vec::Vec;

use crate::boundary::BoundaryLabels;
use crate::mesh::TriMesh;

/// A maximal run of boundary edges between two consecutive corners of one
/// loop (or a whole corner-free loop).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    /// Boundary loop this segment belongs to.
    pub loop_id: usize,
    /// Walk index (into the loop's vertex order) of the starting corner.
    pub start: usize,
    /// Walk index of the ending corner; equals `start` for a closed segment.
    pub end: usize,
    /// Boundary halfedges of the segment in walk order.
    pub halfedges: Vec<usize>,
    /// True when the segment is an entire corner-free loop.
    pub closed: bool,
}

/// Why no valid cover exists for a classified surface.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CoverError {
    /// The corner rules around one loop contradict each other (for example
    /// an odd number of convex corners, or a reflex corner whose forced
    /// gluing clashes with the alternation forced by convex corners).
    TaggingConflict { loop_id: usize },
    /// Every boundary segment would be glued, leaving the doubled surface
    /// closed; the foliation needs at least one boundary loop.
    NoBoundary,
    /// An edge that must stay unglued connects two glued vertices, so the
    /// doubled surface would pinch (a chord between seam vertices, or a
    /// one-edge free segment between glued corners).  Refining the input
    /// mesh removes the problem.
    GluedEndpoints { edge: usize },
    /// The gluing selection created a handle.
    NotGenusZero { genus: i64 },
}

impl core::fmt::Display for CoverError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            CoverError::TaggingConflict { loop_id } => write!(
                f,
                "boundary loop {loop_id}: corner classes admit no consistent gluing selection"
            ),
            CoverError::NoBoundary => {
                write!(f, "every boundary segment would be glued; the doubled surface would be closed")
            }
            CoverError::GluedEndpoints { edge } => write!(
                f,
                "edge {edge} joins two seam vertices but must stay unglued; refine the mesh near the boundary"
            ),
            CoverError::NotGenusZero { genus } => {
                write!(f, "doubled surface has genus {genus}; the gluing selection created a handle")
            }
        }
    }
}

impl core::error::Error for CoverError {}

/// Gluing selection, aligned with the segment list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tagging {
    pub tagged: Vec<bool>,
}

impl Tagging {
    pub fn tagged_count(&self) -> usize {
        self.tagged.iter().filter(|&&t| t).count()
    }

    pub fn any_tagged(&self) -> bool {
        self.tagged.iter().any(|&t| t)
    }
}

/// Splits every boundary loop at its corners.  Segments are listed loop by
/// loop in walk order, starting at each loop's first corner.
pub fn split_segments(mesh: &TriMesh, labels: &BoundaryLabels) -> Vec<Segment> {
    let mut segments = Vec::new();
    for l in 0..labels.loop_count() {
        let halfedges = &mesh.boundary_loops()[l];
        let n = halfedges.len();
        let corners = labels.corner_indices(l);
        if corners.is_empty() {
            segments.push(Segment {
                loop_id: l,
                start: 0,
                end: 0,
                halfedges: halfedges.clone(),
                closed: true,
            });
            continue;
        }
        for (i, &start) in corners.iter().enumerate() {
            let end = corners[(i + 1) % corners.len()];
            let len = (end + n - start - 1) % n + 1; // wrap-aware, full loop if end == start
            let hes = (0..len).map(|k| halfedges[(start + k) % n]).collect();
            segments.push(Segment {
                loop_id: l,
                start,
                end,
                halfedges: hes,
                closed: false,
            });
        }
    }
    segments
}

/// Chooses which segments to glue.  Within each loop the corner rules leave
/// at most two valid selections (an alternation phase); the phase tagging the
/// loop's first segment is chosen for determinism.
pub fn select_tagging(
    labels: &BoundaryLabels,
    segments: &[Segment],
) -> Result<Tagging, CoverError> {
    let mut tagged = vec![false; segments.len()];
    for l in 0..labels.loop_count() {
        let idx: Vec<usize> = (0..segments.len())
            .filter(|&s| segments[s].loop_id == l)
            .collect();
        let m = idx.len();
        if m == 1 && segments[idx[0]].closed {
            continue; // corner-free loop stays free
        }
        // Corner at the start of segment idx[i] sits between segments
        // idx[i-1] and idx[i].
        let class_at = |i: usize| labels.loop_classes(l)[segments[idx[i]].start];
        // Seed: a reflex corner forces its successor segment to be glued;
        // otherwise glue the first segment.
        let seed = (0..m).find(|&i| class_at(i) < 0).unwrap_or(0);
        let mut value = vec![false; m];
        value[seed] = true;
        for k in 1..m {
            let i = (seed + k) % m;
            let prev = value[(i + m - 1) % m];
            value[i] = match class_at(i) {
                1 => !prev,
                _ => {
                    // Reflex: both sides glued.
                    if !prev {
                        return Err(CoverError::TaggingConflict { loop_id: l });
                    }
                    true
                }
            };
        }
        // Closing constraint at the seed segment's starting corner.
        let prev = value[(seed + m - 1) % m];
        let ok = match class_at(seed) {
            1 => prev != value[seed],
            _ => prev && value[seed],
        };
        if !ok {
            return Err(CoverError::TaggingConflict { loop_id: l });
        }
        for (i, &s) in idx.iter().enumerate() {
            tagged[s] = value[i];
        }
    }
    Ok(Tagging { tagged })
}

/// The doubled surface with its bookkeeping back to the input.
#[derive(Debug, Clone)]
pub struct CoveredMesh {
    pub mesh: TriMesh,
    /// Cover vertex -> input vertex.
    pub vertex_origin: Vec<usize>,
    /// Cover face -> input face.
    pub face_origin: Vec<usize>,
    /// Sheet of each cover face: `false` original, `true` reflected copy.
    pub face_sheet: Vec<bool>,
    /// Deck transformation (sheet swap) on vertices; an involution whose
    /// fixed points are the seam vertices.
    pub deck_vertex: Vec<usize>,
    /// Deck transformation on faces.
    pub deck_face: Vec<usize>,
    /// Cover boundary loop -> input boundary loop.
    pub loop_origin: Vec<usize>,
    /// Deck transformation on cover boundary loops.
    pub deck_loop: Vec<usize>,
    /// Vertices shared by both sheets, ascending.
    pub seam_vertices: Vec<usize>,
    /// Connected components of the glued boundary set.
    pub gluing_arcs: usize,
    /// True when the cover is the input surface itself (nothing glued).
    pub identity: bool,
}

impl CoveredMesh {
    /// The trivial cover: the surface itself, deck = identity.  Used for
    /// corner-free surfaces and for the single-sheet baseline mode.
    pub fn identity(mesh: &TriMesh) -> CoveredMesh {
        let nv = mesh.n_vertices();
        let nf = mesh.n_faces();
        let nb = mesh.boundary_loops().len();
        CoveredMesh {
            mesh: mesh.clone(),
            vertex_origin: (0..nv).collect(),
            face_origin: (0..nf).collect(),
            face_sheet: vec![false; nf],
            deck_vertex: (0..nv).collect(),
            deck_face: (0..nf).collect(),
            loop_origin: (0..nb).collect(),
            deck_loop: (0..nb).collect(),
            seam_vertices: Vec::new(),
            gluing_arcs: 0,
            identity: true,
        }
    }

    pub fn euler(&self) -> i64 {
        self.mesh.topology().euler
    }

    pub fn is_seam_vertex(&self, v: usize) -> bool {
        !self.identity && self.deck_vertex[v] == v
    }
}

/// Builds the doubled surface for a gluing selection.
pub fn build_cover(
    input: &TriMesh,
    labels: &BoundaryLabels,
    segments: &[Segment],
    tagging: &Tagging,
) -> Result<CoveredMesh, CoverError> {
    assert_eq!(segments.len(), tagging.tagged.len());
    if !tagging.any_tagged() {
        return Ok(CoveredMesh::identity(input));
    }
    if tagging.tagged.iter().all(|&t| t) {
        return Err(CoverError::NoBoundary);
    }

    let n0 = input.n_vertices();
    let f0 = input.n_faces();

    // Seam vertices: everything on a tagged segment, endpoints included.
    let mut shared = vec![false; n0];
    let mut edge_tagged = vec![false; input.n_edges()];
    for (s, &t) in segments.iter().zip(&tagging.tagged) {
        if !t {
            continue;
        }
        for &h in &s.halfedges {
            shared[input.origin(h)] = true;
            shared[input.dest(h)] = true;
            edge_tagged[input.edge_of(h)] = true;
        }
    }

    // An unglued edge between two seam vertices would collapse onto its
    // mirror image and pinch the cover; reject rather than build a
    // non-manifold surface.
    for e in 0..input.n_edges() {
        let [u, v] = input.edge_vertices(e);
        if !edge_tagged[e] && shared[u] && shared[v] {
            return Err(CoverError::GluedEndpoints { edge: e });
        }
    }

    // Mirror vertex ids: seam vertices are reused, the rest are appended.
    let mut mirror = vec![0usize; n0];
    let mut positions = input.positions().to_vec();
    let mut vertex_origin: Vec<usize> = (0..n0).collect();
    for v in 0..n0 {
        if shared[v] {
            mirror[v] = v;
        } else {
            mirror[v] = positions.len();
            positions.push(input.position(v));
            vertex_origin.push(v);
        }
    }

    // Faces: the original sheet, then the orientation-reversed mirror sheet.
    let mut tris = Vec::with_capacity(2 * f0);
    for f in 0..f0 {
        tris.push(input.face_vertices(f));
    }
    for f in 0..f0 {
        let [a, b, c] = input.face_vertices(f);
        tris.push([mirror[a], mirror[c], mirror[b]]);
    }

    let mesh = TriMesh::build(positions, &tris).expect("double cover is manifold");

    let nv = mesh.n_vertices();
    let mut deck_vertex = vec![0usize; nv];
    for v in 0..n0 {
        deck_vertex[v] = mirror[v];
        deck_vertex[mirror[v]] = v;
    }
    let deck_face: Vec<usize> = (0..2 * f0).map(|f| (f + f0) % (2 * f0)).collect();
    let face_origin: Vec<usize> = (0..2 * f0).map(|f| f % f0).collect();
    let face_sheet: Vec<bool> = (0..2 * f0).map(|f| f >= f0).collect();

    // Gluing arcs: components of the glued set.  Within one loop the tagged
    // segments form maximal cyclic runs; a fully tagged loop is one closed
    // component and removes nothing from the Euler count.
    let mut open_arcs = 0usize;
    let mut closed_components = 0usize;
    for l in 0..labels.loop_count() {
        let flags: Vec<bool> = segments
            .iter()
            .zip(&tagging.tagged)
            .filter(|(s, _)| s.loop_id == l)
            .map(|(_, &t)| t)
            .collect();
        if !flags.is_empty() && flags.iter().all(|&t| t) {
            closed_components += 1;
            continue;
        }
        let m = flags.len();
        for i in 0..m {
            if flags[i] && !flags[(i + m - 1) % m] {
                open_arcs += 1;
            }
        }
    }
    let gluing_arcs = open_arcs + closed_components;

    let topo = mesh.topology();
    assert_eq!(
        topo.euler,
        2 * input.topology().euler - open_arcs as i64,
        "double cover Euler count mismatch"
    );
    if topo.boundary_count == 0 {
        return Err(CoverError::NoBoundary);
    }
    if topo.genus != 0 {
        return Err(CoverError::NotGenusZero { genus: topo.genus });
    }

    let nb = mesh.boundary_loops().len();
    let mut loop_origin = vec![0usize; nb];
    let mut deck_loop = vec![0usize; nb];
    for l in 0..nb {
        let rep = mesh.boundary_loop_vertices(l)[0];
        loop_origin[l] = input
            .boundary_loop_of(vertex_origin[rep])
            .expect("cover boundary descends from input boundary");
        let image = deck_vertex[rep];
        deck_loop[l] = mesh
            .boundary_loop_of(image)
            .expect("deck image of a boundary vertex is on the boundary");
    }

    let seam_vertices: Vec<usize> = (0..n0).filter(|&v| shared[v]).collect();

    Ok(CoveredMesh {
        mesh,
        vertex_origin,
        face_origin,
        face_sheet,
        deck_vertex,
        deck_face,
        loop_origin,
        deck_loop,
        seam_vertices,
        gluing_arcs,
        identity: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boundary::BoundaryLabels;
    use crate::fixtures;

    fn pipeline(mesh: &TriMesh) -> (BoundaryLabels, Vec<Segment>) {
        let labels = BoundaryLabels::classify(mesh);
        let segments = split_segments(mesh, &labels);
        (labels, segments)
    }

    #[test]
    fn square_splits_into_four_equal_segments() {
        let m = fixtures::square_disk(9);
        let (_, segments) = pipeline(&m);
        assert_eq!(segments.len(), 4);
        for s in &segments {
            assert_eq!(s.halfedges.len(), 8);
            assert!(!s.closed);
            assert_eq!(s.loop_id, 0);
        }
        // Segments chain: each ends where the next starts.
        for i in 0..4 {
            assert_eq!(segments[i].end, segments[(i + 1) % 4].start);
        }
    }

    #[test]
    fn corner_free_loops_become_closed_segments() {
        let m = fixtures::tube(12, 6);
        let (_, segments) = pipeline(&m);
        assert_eq!(segments.len(), 2);
        assert!(segments.iter().all(|s| s.closed));
        assert_eq!(segments[0].halfedges.len(), 12);
    }

    #[test]
    fn square_tagging_alternates_from_first_segment() {
        let m = fixtures::square_disk(9);
        let (labels, segments) = pipeline(&m);
        let tagging = select_tagging(&labels, &segments).unwrap();
        assert_eq!(tagging.tagged, vec![true, false, true, false]);
    }

    #[test]
    fn annulus_tagging_leaves_inner_loop_free() {
        let m = fixtures::square_annulus(24, 5);
        let (labels, segments) = pipeline(&m);
        let tagging = select_tagging(&labels, &segments).unwrap();
        assert_eq!(segments.len(), 5);
        let outer: Vec<bool> = segments
            .iter()
            .zip(&tagging.tagged)
            .filter(|(s, _)| s.loop_id == segments[0].loop_id)
            .map(|(_, &t)| t)
            .collect();
        assert_eq!(outer.iter().filter(|&&t| t).count(), 2);
        let closed_free = segments
            .iter()
            .zip(&tagging.tagged)
            .any(|(s, &t)| s.closed && !t);
        assert!(closed_free);
    }

    #[test]
    fn odd_convex_corner_count_has_no_tagging() {
        let m = fixtures::pentagon_disk(3, 4);
        let (labels, segments) = pipeline(&m);
        assert_eq!(segments.len(), 5);
        assert_eq!(
            select_tagging(&labels, &segments),
            Err(CoverError::TaggingConflict { loop_id: 0 })
        );
    }

    #[test]
    fn reflex_among_odd_convex_corners_conflicts() {
        let m = fixtures::l_disk(9);
        let (labels, segments) = pipeline(&m);
        assert_eq!(segments.len(), 6);
        assert_eq!(
            select_tagging(&labels, &segments),
            Err(CoverError::TaggingConflict { loop_id: 0 })
        );
    }

    #[test]
    fn square_cover_is_a_cylinder() {
        let m = fixtures::square_disk(9);
        let (labels, segments) = pipeline(&m);
        let tagging = select_tagging(&labels, &segments).unwrap();
        let cover = build_cover(&m, &labels, &segments, &tagging).unwrap();
        assert!(!cover.identity);
        let topo = cover.mesh.topology();
        assert_eq!(topo.euler, 0);
        assert_eq!(topo.genus, 0);
        assert_eq!(topo.boundary_count, 2);
        assert_eq!(cover.mesh.n_vertices(), 2 * 81 - 18);
        assert_eq!(cover.mesh.n_faces(), 256);
        assert_eq!(cover.mesh.n_edges(), 400);
        assert_eq!(cover.seam_vertices.len(), 18);
        assert_eq!(cover.gluing_arcs, 2);
        // Both cover loops contain seam (deck-fixed) vertices, hence map to
        // themselves under the deck transformation.
        assert_eq!(cover.deck_loop, vec![0, 1]);
        assert_eq!(cover.loop_origin, vec![0, 0]);
    }

    #[test]
    fn deck_transformation_is_an_involution() {
        let m = fixtures::square_annulus(24, 5);
        let (labels, segments) = pipeline(&m);
        let tagging = select_tagging(&labels, &segments).unwrap();
        let cover = build_cover(&m, &labels, &segments, &tagging).unwrap();
        for v in 0..cover.mesh.n_vertices() {
            assert_eq!(cover.deck_vertex[cover.deck_vertex[v]], v);
            assert_eq!(
                cover.vertex_origin[cover.deck_vertex[v]],
                cover.vertex_origin[v]
            );
        }
        for f in 0..cover.mesh.n_faces() {
            assert_eq!(cover.deck_face[cover.deck_face[f]], f);
            assert_eq!(cover.face_origin[cover.deck_face[f]], cover.face_origin[f]);
            assert_ne!(cover.face_sheet[cover.deck_face[f]], cover.face_sheet[f]);
        }
    }

    #[test]
    fn annulus_cover_is_a_four_holed_sphere() {
        let m = fixtures::square_annulus(24, 5);
        let (labels, segments) = pipeline(&m);
        let tagging = select_tagging(&labels, &segments).unwrap();
        let cover = build_cover(&m, &labels, &segments, &tagging).unwrap();
        let topo = cover.mesh.topology();
        assert_eq!(topo.euler, -2);
        assert_eq!(topo.genus, 0);
        assert_eq!(topo.boundary_count, 4);
        assert_eq!(cover.gluing_arcs, 2);
        // Two loops descend from the outer square (deck-fixed), two are the
        // swapped copies of the inner circle.
        let fixed: Vec<usize> = (0..4).filter(|&l| cover.deck_loop[l] == l).collect();
        assert_eq!(fixed.len(), 2);
        for &l in &fixed {
            assert_eq!(cover.loop_origin[l], 0);
        }
        let swapped: Vec<usize> = (0..4).filter(|&l| cover.deck_loop[l] != l).collect();
        assert_eq!(swapped.len(), 2);
        assert_eq!(cover.deck_loop[swapped[0]], swapped[1]);
        for &l in &swapped {
            assert_eq!(cover.loop_origin[l], 1);
        }
    }

    #[test]
    fn two_hole_plate_cover_is_a_six_holed_sphere() {
        let m = fixtures::two_hole_plate(4, 4);
        let (labels, segments) = pipeline(&m);
        let tagging = select_tagging(&labels, &segments).unwrap();
        let cover = build_cover(&m, &labels, &segments, &tagging).unwrap();
        let topo = cover.mesh.topology();
        assert_eq!(topo.euler, -4);
        assert_eq!(topo.genus, 0);
        assert_eq!(topo.boundary_count, 6);
        assert_eq!(cover.gluing_arcs, 2);
    }

    #[test]
    fn corner_free_surface_gets_the_identity_cover() {
        let m = fixtures::tube(12, 6);
        let (labels, segments) = pipeline(&m);
        let tagging = select_tagging(&labels, &segments).unwrap();
        assert!(!tagging.any_tagged());
        let cover = build_cover(&m, &labels, &segments, &tagging).unwrap();
        assert!(cover.identity);
        assert_eq!(cover.mesh.n_vertices(), m.n_vertices());
        assert!(cover.seam_vertices.is_empty());
        assert_eq!(cover.deck_loop, vec![0, 1]);
        for v in 0..m.n_vertices() {
            assert_eq!(cover.deck_vertex[v], v);
        }
    }

    #[test]
    fn former_corners_are_smooth_on_the_cover_boundary() {
        let m = fixtures::square_disk(9);
        let (labels, segments) = pipeline(&m);
        let tagging = select_tagging(&labels, &segments).unwrap();
        let cover = build_cover(&m, &labels, &segments, &tagging).unwrap();
        // Each convex corner sits on the seam; its two right angles combine
        // to a straight angle on the cover boundary.
        for v in labels.corner_vertices() {
            assert!(cover.is_seam_vertex(v));
            assert!(cover.mesh.is_boundary_vertex(v));
            let curvature = core::f64::consts::PI - cover.mesh.angle_sum(v);
            assert!(curvature.abs() < 1e-12, "corner curvature {curvature}");
        }
    }

    #[test]
    fn coarse_mesh_with_pinching_free_edge_is_rejected() {
        // At two vertices per side every free side is a single edge whose
        // endpoints are both corners on the seam.
        let m = fixtures::square_disk(2);
        let (labels, segments) = pipeline(&m);
        let tagging = select_tagging(&labels, &segments).unwrap();
        let got = build_cover(&m, &labels, &segments, &tagging);
        assert!(matches!(got, Err(CoverError::GluedEndpoints { .. })));
    }
}

//! Annulus decomposition induced by a converged graph-valued map.
//!
//! A converged map sends almost every face onto a single spoke of the star
//! graph; those faces form one "cylinder" per spoke.  The remaining faces
//! straddle the centre of the star, and the centre pre-image threads through
//! them as a polyline network — the critical graph of the induced foliation.
//! Branch nodes of that network are cone points: a node where `k >= 3` local
//! cylinder sectors meet has cone order `k - 2`, and the orders must sum to
//! `-2 * euler(cover)`, the total cone budget of a flat metric on the cover.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::cover::CoveredMesh;
use crate::foliation::{GraphMap, GraphPoint};
use crate::math;
use crate::mesh::TriMesh;

/// Multiple of the solver's fixed-point error estimate below which a vertex
/// value counts as the graph centre.  Near-converged maps leave centre-line
/// vertices at tiny positive offsets that flip between spokes; snapping
/// collapses them.
const SNAP_ERROR_FACTOR: f64 = 10.0;
/// Absolute snapping floor, relative to the longest spoke.
const SNAP_RELATIVE_FLOOR: f64 = 1e-14;

/// Reasons a map's induced decomposition is unusable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StructureError {
    /// All three vertices of a face map to the centre; the centre pre-image
    /// is two-dimensional there.
    DegenerateFace { face: usize },
    /// A critical-graph node with fewer than two outgoing directions; the
    /// centre pre-image dead-ends, which a converged map cannot produce.
    DanglingCritical { node: usize, degree: usize },
    /// No face maps onto this spoke.
    CylinderEmpty { cylinder: usize },
    /// The faces of one cylinder do not form a connected region.
    CylinderDisconnected { cylinder: usize },
    /// A cylinder's face region is not an annulus.
    CylinderNotAnnulus { cylinder: usize, euler: i64 },
    /// A cylinder does not contain exactly its own boundary loop.
    CylinderBoundary { cylinder: usize, loops: usize },
    /// A critical chain is flanked by different cylinder pairs along its run.
    MixedChainSides { chain: usize },
    /// Cone orders of the branch nodes do not sum to the flat-metric budget.
    ZeroOrderMismatch { total: i64, expected: i64 },
}

impl fmt::Display for StructureError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StructureError::DegenerateFace { face } => {
                write!(f, "face {face} maps entirely to the graph centre")
            }
            StructureError::DanglingCritical { node, degree } => write!(
                f,
                "critical-graph node {node} has degree {degree}; the centre pre-image dead-ends"
            ),
            StructureError::CylinderEmpty { cylinder } => {
                write!(f, "no face maps onto spoke {cylinder}")
            }
            StructureError::CylinderDisconnected { cylinder } => {
                write!(f, "cylinder {cylinder} is not connected")
            }
            StructureError::CylinderNotAnnulus { cylinder, euler } => write!(
                f,
                "cylinder {cylinder} has Euler characteristic {euler}, expected 0 (annulus)"
            ),
            StructureError::CylinderBoundary { cylinder, loops } => write!(
                f,
                "cylinder {cylinder} contains {loops} boundary loops, expected exactly its own"
            ),
            StructureError::MixedChainSides { chain } => {
                write!(f, "critical chain {chain} is flanked by inconsistent cylinder pairs")
            }
            StructureError::ZeroOrderMismatch { total, expected } => write!(
                f,
                "cone orders sum to {total}, expected {expected} for this topology"
            ),
        }
    }
}

impl core::error::Error for StructureError {}

/// Where a critical-graph node sits on the triangle mesh.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NodeKind {
    /// Interior point of a mesh edge whose endpoints map to different
    /// spokes; `lambda` is the fraction from the edge's first canonical
    /// vertex to the centre crossing.
    EdgeCrossing { edge: usize, lambda: f64 },
    /// Mesh vertex mapped exactly to the centre.
    CenterVertex { vertex: usize },
    /// Balance point inside a face whose vertices map to three distinct
    /// spokes.
    FaceJunction { face: usize },
}

#[derive(Debug, Clone, Copy)]
pub struct CriticalNode {
    pub kind: NodeKind,
    pub position: [f64; 3],
}

/// One straight piece of the centre pre-image: either crossing a single face
/// or running along a mesh edge between two centre vertices.
#[derive(Debug, Clone, Copy)]
pub struct CriticalSegment {
    pub nodes: [usize; 2],
    /// The two cylinders flanking the segment, sorted ascending.
    pub sides: [usize; 2],
    pub length: f64,
}

/// Maximal critical path: a free loop (`closed`), or a walk between branch
/// nodes (first and last node coincide for a loop hanging off one branch).
#[derive(Debug, Clone)]
pub struct CriticalChain {
    pub nodes: Vec<usize>,
    pub segments: Vec<usize>,
    pub closed: bool,
    pub sides: [usize; 2],
    pub length: f64,
}

/// Branch node of the critical graph with its cone order (degree minus 2).
#[derive(Debug, Clone, Copy)]
pub struct Zero {
    pub node: usize,
    pub order: usize,
}

#[derive(Debug, Clone)]
pub struct FoliationStructure {
    /// Snapped copy of the map values; all downstream geometry uses these.
    pub points: Vec<GraphPoint>,
    pub snap_epsilon: f64,
    /// `Some(j)` when all three vertices of the face sit on spoke `j` with
    /// positive offset; `None` marks the critical band.
    pub face_cylinder: Vec<Option<usize>>,
    pub cylinder_faces: Vec<Vec<usize>>,
    pub nodes: Vec<CriticalNode>,
    pub segments: Vec<CriticalSegment>,
    pub chains: Vec<CriticalChain>,
    pub zeros: Vec<Zero>,
    /// Image of every chain under the deck transformation (identity when the
    /// cover is trivial).
    pub deck_chain: Vec<usize>,
}

impl FoliationStructure {
    pub fn cylinder_count(&self) -> usize {
        self.cylinder_faces.len()
    }

    pub fn total_zero_order(&self) -> i64 {
        self.zeros.iter().map(|z| z.order as i64).sum()
    }

    pub fn closed_chain_count(&self) -> usize {
        self.chains.iter().filter(|c| c.closed).count()
    }
}

fn snap_threshold(map: &GraphMap) -> f64 {
    let error = if map.error_estimate.is_finite() {
        map.error_estimate
    } else {
        0.0
    };
    SNAP_ERROR_FACTOR * error + SNAP_RELATIVE_FLOOR * map.graph.max_length()
}

fn snapped(points: &[GraphPoint], eps: f64) -> Vec<GraphPoint> {
    points
        .iter()
        .map(|&p| match p {
            GraphPoint::OnEdge { t, .. } if t <= eps => GraphPoint::Center,
            other => other,
        })
        .collect()
}

fn spoke_of(p: GraphPoint) -> Option<usize> {
    match p {
        GraphPoint::Center => None,
        GraphPoint::OnEdge { edge, .. } => Some(edge),
    }
}

fn t_of(p: GraphPoint) -> f64 {
    match p {
        GraphPoint::Center => 0.0,
        GraphPoint::OnEdge { t, .. } => t,
    }
}

fn sorted_pair(a: usize, b: usize) -> [usize; 2] {
    if a <= b {
        [a, b]
    } else {
        [b, a]
    }
}

/// Node bookkeeping shared by the per-face sweep.
struct NodeTable {
    nodes: Vec<CriticalNode>,
    crossing: BTreeMap<usize, usize>,
    center: BTreeMap<usize, usize>,
    junction: BTreeMap<usize, usize>,
}

impl NodeTable {
    fn crossing_id(&mut self, mesh: &TriMesh, points: &[GraphPoint], edge: usize) -> usize {
        if let Some(&id) = self.crossing.get(&edge) {
            return id;
        }
        let [c0, c1] = mesh.edge_vertices(edge);
        let t0 = t_of(points[c0]);
        let t1 = t_of(points[c1]);
        let lambda = t0 / (t0 + t1);
        let position = math::lerp(mesh.position(c0), mesh.position(c1), lambda);
        let id = self.nodes.len();
        self.nodes.push(CriticalNode {
            kind: NodeKind::EdgeCrossing { edge, lambda },
            position,
        });
        self.crossing.insert(edge, id);
        id
    }

    fn center_id(&mut self, mesh: &TriMesh, vertex: usize) -> usize {
        if let Some(&id) = self.center.get(&vertex) {
            return id;
        }
        let id = self.nodes.len();
        self.nodes.push(CriticalNode {
            kind: NodeKind::CenterVertex { vertex },
            position: mesh.position(vertex),
        });
        self.center.insert(vertex, id);
        id
    }

    fn junction_id(&mut self, mesh: &TriMesh, points: &[GraphPoint], face: usize) -> usize {
        if let Some(&id) = self.junction.get(&face) {
            return id;
        }
        // Balance point: barycentric weights 1/t pull equally hard from all
        // three spokes, the natural stand-in for the centre pre-image.
        let vs = mesh.face_vertices(face);
        let mut w = [0.0; 3];
        let mut w_sum = 0.0;
        for i in 0..3 {
            w[i] = 1.0 / t_of(points[vs[i]]);
            w_sum += w[i];
        }
        let mut position = [0.0; 3];
        for i in 0..3 {
            position = math::add(position, math::scale(mesh.position(vs[i]), w[i] / w_sum));
        }
        let id = self.nodes.len();
        self.nodes.push(CriticalNode {
            kind: NodeKind::FaceJunction { face },
            position,
        });
        self.junction.insert(face, id);
        id
    }
}

/// Reads the cylinder decomposition and the critical graph off a map.
pub fn extract_structure(
    cover: &CoveredMesh,
    map: &GraphMap,
) -> Result<FoliationStructure, StructureError> {
    let mesh = &cover.mesh;
    let nb = map.graph.spokes();
    let snap_epsilon = snap_threshold(map);
    let points = snapped(&map.points, snap_epsilon);

    let mut face_cylinder: Vec<Option<usize>> = vec![None; mesh.n_faces()];
    let mut table = NodeTable {
        nodes: Vec::new(),
        crossing: BTreeMap::new(),
        center: BTreeMap::new(),
        junction: BTreeMap::new(),
    };
    let mut segments: Vec<CriticalSegment> = Vec::new();
    // Centre-centre mesh edges are seen by both adjacent faces; remember the
    // first sighting's flank until the partner face supplies the other.
    let mut pending_cc: BTreeMap<(usize, usize), (usize, usize, usize)> = BTreeMap::new();

    let edge_between = |a: usize, b: usize, lookup: &BTreeMap<(usize, usize), usize>| -> usize {
        lookup[&(a.min(b), a.max(b))]
    };
    let mut edge_lookup: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for e in 0..mesh.n_edges() {
        let [a, b] = mesh.edge_vertices(e);
        edge_lookup.insert((a.min(b), a.max(b)), e);
    }

    for f in 0..mesh.n_faces() {
        let vs = mesh.face_vertices(f);
        let sp = [
            spoke_of(points[vs[0]]),
            spoke_of(points[vs[1]]),
            spoke_of(points[vs[2]]),
        ];
        let centres: Vec<usize> = (0..3).filter(|&i| sp[i].is_none()).collect();
        match centres.len() {
            0 => {
                let (a, b, c) = (sp[0].unwrap(), sp[1].unwrap(), sp[2].unwrap());
                if a == b && b == c {
                    face_cylinder[f] = Some(a);
                } else if a != b && b != c && a != c {
                    // Three distinct spokes: a branch point sits inside the
                    // face, joined to a crossing on each edge.
                    let j = table.junction_id(mesh, &points, f);
                    for (i, k) in [(0usize, 1usize), (1, 2), (2, 0)] {
                        let e = edge_between(vs[i], vs[k], &edge_lookup);
                        let cr = table.crossing_id(mesh, &points, e);
                        let length = math::dist(table.nodes[j].position, table.nodes[cr].position);
                        segments.push(CriticalSegment {
                            nodes: [j, cr],
                            sides: sorted_pair(sp[i].unwrap(), sp[k].unwrap()),
                            length,
                        });
                    }
                } else {
                    // One vertex sits on a different spoke than the other
                    // two; the centre pre-image cuts across the face.
                    let lone = if a == b {
                        2
                    } else if a == c {
                        1
                    } else {
                        0
                    };
                    let mut ends = [0usize; 2];
                    for (slot, other) in [(lone + 1) % 3, (lone + 2) % 3].into_iter().enumerate() {
                        let e = edge_between(vs[lone], vs[other], &edge_lookup);
                        ends[slot] = table.crossing_id(mesh, &points, e);
                    }
                    let length = math::dist(
                        table.nodes[ends[0]].position,
                        table.nodes[ends[1]].position,
                    );
                    segments.push(CriticalSegment {
                        nodes: ends,
                        sides: sorted_pair(sp[lone].unwrap(), sp[(lone + 1) % 3].unwrap()),
                        length,
                    });
                }
            }
            1 => {
                let ci = centres[0];
                let (i, k) = ((ci + 1) % 3, (ci + 2) % 3);
                let (si, sk) = (sp[i].unwrap(), sp[k].unwrap());
                let cn = table.center_id(mesh, vs[ci]);
                if si != sk {
                    let e = edge_between(vs[i], vs[k], &edge_lookup);
                    let cr = table.crossing_id(mesh, &points, e);
                    let length = math::dist(table.nodes[cn].position, table.nodes[cr].position);
                    segments.push(CriticalSegment {
                        nodes: [cn, cr],
                        sides: sorted_pair(si, sk),
                        length,
                    });
                }
                // si == sk: the centre pre-image meets this face only at the
                // vertex itself; the node is materialized so isolated centre
                // vertices are caught by the degree check.
            }
            2 => {
                let lone = 3 - centres[0] - centres[1];
                let side = sp[lone].unwrap();
                let n0 = table.center_id(mesh, vs[centres[0]]);
                let n1 = table.center_id(mesh, vs[centres[1]]);
                let (va, vb) = (vs[centres[0]], vs[centres[1]]);
                let key = (va.min(vb), va.max(vb));
                match pending_cc.remove(&key) {
                    Some((m0, m1, first_side)) => {
                        debug_assert_eq!(sorted_pair(m0, m1), sorted_pair(n0, n1));
                        let e = edge_between(va, vb, &edge_lookup);
                        segments.push(CriticalSegment {
                            nodes: [m0, m1],
                            sides: sorted_pair(first_side, side),
                            length: mesh.edge_length(e),
                        });
                    }
                    None => {
                        pending_cc.insert(key, (n0, n1, side));
                    }
                }
            }
            _ => return Err(StructureError::DegenerateFace { face: f }),
        }
    }
    if let Some((_, &(node, _, _))) = pending_cc.iter().next() {
        // A centre-centre edge with only one incident face: its partner was
        // degenerate or the centre line reached the pinned boundary.
        return Err(StructureError::DanglingCritical { node, degree: 1 });
    }

    // Node degrees and branch detection.
    let mut incident: Vec<Vec<usize>> = vec![Vec::new(); table.nodes.len()];
    for (si, s) in segments.iter().enumerate() {
        incident[s.nodes[0]].push(si);
        incident[s.nodes[1]].push(si);
    }
    for (n, inc) in incident.iter_mut().enumerate() {
        inc.sort_unstable();
        let degree = inc.len();
        let ok = match table.nodes[n].kind {
            NodeKind::EdgeCrossing { .. } => degree == 2,
            NodeKind::CenterVertex { .. } => degree >= 2,
            NodeKind::FaceJunction { .. } => degree == 3,
        };
        if !ok {
            return Err(StructureError::DanglingCritical { node: n, degree });
        }
    }
    let is_branch: Vec<bool> = incident.iter().map(|inc| inc.len() >= 3).collect();
    let zeros: Vec<Zero> = (0..table.nodes.len())
        .filter(|&n| is_branch[n])
        .map(|n| Zero {
            node: n,
            order: incident[n].len() - 2,
        })
        .collect();

    // Walk maximal chains: branch-to-branch paths first, then free loops.
    let mut seg_visited = vec![false; segments.len()];
    let mut chains: Vec<CriticalChain> = Vec::new();
    for z in 0..table.nodes.len() {
        if !is_branch[z] {
            continue;
        }
        for &s0 in &incident[z] {
            if seg_visited[s0] {
                continue;
            }
            let mut chain_nodes = vec![z];
            let mut chain_segs = Vec::new();
            let mut cur_node = z;
            let mut cur_seg = s0;
            loop {
                seg_visited[cur_seg] = true;
                chain_segs.push(cur_seg);
                let s = &segments[cur_seg];
                let nxt = if s.nodes[0] == cur_node { s.nodes[1] } else { s.nodes[0] };
                chain_nodes.push(nxt);
                if is_branch[nxt] {
                    break;
                }
                let inc = &incident[nxt];
                cur_seg = if inc[0] == cur_seg { inc[1] } else { inc[0] };
                cur_node = nxt;
            }
            chains.push(make_chain(chains.len(), chain_nodes, chain_segs, false, &segments)?);
        }
    }
    for s0 in 0..segments.len() {
        if seg_visited[s0] {
            continue;
        }
        let start_node = segments[s0].nodes[0];
        let mut chain_nodes = vec![start_node];
        let mut chain_segs = Vec::new();
        let mut cur_node = start_node;
        let mut cur_seg = s0;
        loop {
            seg_visited[cur_seg] = true;
            chain_segs.push(cur_seg);
            let s = &segments[cur_seg];
            let nxt = if s.nodes[0] == cur_node { s.nodes[1] } else { s.nodes[0] };
            if nxt == start_node {
                break;
            }
            chain_nodes.push(nxt);
            let inc = &incident[nxt];
            cur_seg = if inc[0] == cur_seg { inc[1] } else { inc[0] };
            cur_node = nxt;
        }
        chains.push(make_chain(chains.len(), chain_nodes, chain_segs, true, &segments)?);
    }

    // Cylinder face sets and their validity.
    let mut cylinder_faces: Vec<Vec<usize>> = vec![Vec::new(); nb];
    for (f, c) in face_cylinder.iter().enumerate() {
        if let Some(j) = c {
            cylinder_faces[*j].push(f);
        }
    }
    for (j, faces) in cylinder_faces.iter().enumerate() {
        validate_cylinder(mesh, j, faces)?;
    }

    // Cone budget of the flat structure the map induces.
    let total = zeros.iter().map(|z| z.order as i64).sum::<i64>();
    let expected = -2 * cover.euler();
    if total != expected {
        return Err(StructureError::ZeroOrderMismatch { total, expected });
    }

    let deck_chain = deck_chains(cover, &table, &segments, &chains, &edge_lookup);

    Ok(FoliationStructure {
        points,
        snap_epsilon,
        face_cylinder,
        cylinder_faces,
        nodes: table.nodes,
        segments,
        chains,
        zeros,
        deck_chain,
    })
}

fn make_chain(
    id: usize,
    nodes: Vec<usize>,
    segs: Vec<usize>,
    closed: bool,
    segments: &[CriticalSegment],
) -> Result<CriticalChain, StructureError> {
    let sides = segments[segs[0]].sides;
    let mut length = 0.0;
    for &s in &segs {
        if segments[s].sides != sides {
            return Err(StructureError::MixedChainSides { chain: id });
        }
        length += segments[s].length;
    }
    Ok(CriticalChain {
        nodes,
        segments: segs,
        closed,
        sides,
        length,
    })
}

fn validate_cylinder(mesh: &TriMesh, j: usize, faces: &[usize]) -> Result<(), StructureError> {
    if faces.is_empty() {
        return Err(StructureError::CylinderEmpty { cylinder: j });
    }
    let mut in_set = vec![false; mesh.n_faces()];
    for &f in faces {
        in_set[f] = true;
    }

    // Connectivity over shared edges.
    let mut seen = vec![false; mesh.n_faces()];
    let mut stack = vec![faces[0]];
    seen[faces[0]] = true;
    let mut reached = 0usize;
    while let Some(f) = stack.pop() {
        reached += 1;
        let h0 = mesh.face_halfedge(f);
        for h in [h0, mesh.next(h0), mesh.next(mesh.next(h0))] {
            if let Some(g) = mesh.face_of(mesh.twin(h)) {
                if in_set[g] && !seen[g] {
                    seen[g] = true;
                    stack.push(g);
                }
            }
        }
    }
    if reached != faces.len() {
        return Err(StructureError::CylinderDisconnected { cylinder: j });
    }

    // Euler characteristic of the face region.
    let mut vert_mark = vec![false; mesh.n_vertices()];
    let mut edge_mark = vec![false; mesh.n_edges()];
    let (mut v_count, mut e_count) = (0i64, 0i64);
    for &f in faces {
        for v in mesh.face_vertices(f) {
            if !vert_mark[v] {
                vert_mark[v] = true;
                v_count += 1;
            }
        }
        let h0 = mesh.face_halfedge(f);
        for h in [h0, mesh.next(h0), mesh.next(mesh.next(h0))] {
            let e = mesh.edge_of(h);
            if !edge_mark[e] {
                edge_mark[e] = true;
                e_count += 1;
            }
        }
    }
    let euler = v_count - e_count + faces.len() as i64;
    if euler != 0 {
        return Err(StructureError::CylinderNotAnnulus { cylinder: j, euler });
    }

    // The region must contain its own pinned loop entirely and no other.
    let mut full = Vec::new();
    let mut partial = 0usize;
    for (l, cycle) in mesh.boundary_loops().iter().enumerate() {
        let mut inside = 0usize;
        for &h in cycle {
            let f = mesh
                .face_of(mesh.twin(h))
                .expect("twin of a boundary halfedge bounds a face");
            if in_set[f] {
                inside += 1;
            }
        }
        if inside == cycle.len() {
            full.push(l);
        } else if inside > 0 {
            partial += 1;
        }
    }
    if full != [j] || partial != 0 {
        return Err(StructureError::CylinderBoundary {
            cylinder: j,
            loops: full.len() + partial,
        });
    }
    Ok(())
}

/// Maps every chain to its image under the deck transformation.
fn deck_chains(
    cover: &CoveredMesh,
    table: &NodeTable,
    segments: &[CriticalSegment],
    chains: &[CriticalChain],
    edge_lookup: &BTreeMap<(usize, usize), usize>,
) -> Vec<usize> {
    if cover.identity {
        return (0..chains.len()).collect();
    }
    let mesh = &cover.mesh;
    let node_image = |n: usize| -> usize {
        match table.nodes[n].kind {
            NodeKind::EdgeCrossing { edge, .. } => {
                let [a, b] = mesh.edge_vertices(edge);
                let (da, db) = (cover.deck_vertex[a], cover.deck_vertex[b]);
                let e = edge_lookup[&(da.min(db), da.max(db))];
                table.crossing[&e]
            }
            NodeKind::CenterVertex { vertex } => table.center[&cover.deck_vertex[vertex]],
            NodeKind::FaceJunction { face } => table.junction[&cover.deck_face[face]],
        }
    };
    let mut seg_of_pair: BTreeMap<[usize; 2], usize> = BTreeMap::new();
    let mut chain_of_seg = vec![0usize; segments.len()];
    for (ci, chain) in chains.iter().enumerate() {
        for &s in &chain.segments {
            chain_of_seg[s] = ci;
        }
    }
    for (si, s) in segments.iter().enumerate() {
        seg_of_pair
            .entry(sorted_pair(s.nodes[0], s.nodes[1]))
            .or_insert(si);
    }
    chains
        .iter()
        .map(|chain| {
            let s = &segments[chain.segments[0]];
            let key = sorted_pair(node_image(s.nodes[0]), node_image(s.nodes[1]));
            chain_of_seg[seg_of_pair[&key]]
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boundary::BoundaryLabels;
    use crate::cover;
    use crate::fixtures::{self, FixtureKind};
    use crate::foliation::{self, FoliationParams, WeightMode};

    fn solved_with(cov: CoveredMesh, mode: WeightMode, tol: f64) -> (CoveredMesh, GraphMap) {
        let graph = foliation::build_star_graph(&cov, mode).unwrap();
        let params = FoliationParams {
            tol,
            max_iters: 200_000,
        };
        let map = foliation::solve(&cov, &graph, &params).unwrap();
        assert!(map.converged, "harmonic map failed to converge in tests");
        (cov, map)
    }

    fn solved(kind: FixtureKind, res: usize, tol: f64) -> (CoveredMesh, GraphMap) {
        let mesh = fixtures::generate(kind, res);
        let labels = BoundaryLabels::classify(&mesh);
        let segments = cover::split_segments(&mesh, &labels);
        let tagging = cover::select_tagging(&labels, &segments).unwrap();
        let cov = cover::build_cover(&mesh, &labels, &segments, &tagging).unwrap();
        solved_with(cov, WeightMode::Uniform, tol)
    }

    fn solved_identity(
        kind: FixtureKind,
        res: usize,
        mode: WeightMode,
        tol: f64,
    ) -> (CoveredMesh, GraphMap) {
        let mesh = fixtures::generate(kind, res);
        let cov = CoveredMesh::identity(&mesh);
        solved_with(cov, mode, tol)
    }

    #[test]
    fn square_cover_gives_two_cylinders_and_one_closed_loop() {
        let (cov, map) = solved(FixtureKind::SquareDisk, 9, 1e-9);
        let s = extract_structure(&cov, &map).unwrap();
        assert_eq!(s.cylinder_count(), 2);
        assert!(s.zeros.is_empty());
        assert_eq!(s.chains.len(), 1);
        assert!(s.chains[0].closed);
        assert_eq!(s.chains[0].sides, [0, 1]);
        // Faces are partitioned into the two cylinders plus the band.
        let classified: usize = s.cylinder_faces.iter().map(Vec::len).sum();
        let band = s.face_cylinder.iter().filter(|c| c.is_none()).count();
        assert_eq!(classified + band, cov.mesh.n_faces());
        assert!(band > 0);
    }

    #[test]
    fn square_cover_critical_loop_is_the_doubled_midline() {
        // On an even grid the centre line lies exactly on mesh vertices, so
        // the chain runs vertex to vertex along y = 1/2 through both sheets:
        // length 2 exactly.
        let (cov, map) = solved(FixtureKind::SquareDisk, 9, 1e-9);
        let s = extract_structure(&cov, &map).unwrap();
        assert!((s.chains[0].length - 2.0).abs() < 1e-9);
        for &n in &s.chains[0].nodes {
            assert!(matches!(s.nodes[n].kind, NodeKind::CenterVertex { .. }));
        }
    }

    #[test]
    fn tube_structure_matches_flat_cylinder() {
        let (cov, map) = solved_identity(FixtureKind::Tube, 12, WeightMode::Uniform, 1e-9);
        let s = extract_structure(&cov, &map).unwrap();
        assert_eq!(s.cylinder_count(), 2);
        assert!(s.zeros.is_empty());
        assert_eq!(s.closed_chain_count(), 1);
        // Identity cover: every chain is its own deck image.
        assert_eq!(s.deck_chain, alloc::vec![0]);
    }

    #[test]
    fn annulus_cover_cone_orders_sum_to_four() {
        let (cov, map) = solved(FixtureKind::SquareAnnulus, 16, 1e-9);
        assert_eq!(cov.euler(), -2);
        let s = extract_structure(&cov, &map).unwrap();
        assert_eq!(s.cylinder_count(), 4);
        assert_eq!(s.total_zero_order(), 4);
        // The deck transformation permutes chains as an involution.
        for (c, &img) in s.deck_chain.iter().enumerate() {
            assert_eq!(s.deck_chain[img], c);
            assert_eq!(s.chains[c].segments.len(), s.chains[img].segments.len());
            assert!((s.chains[c].length - s.chains[img].length).abs() < 1e-12);
        }
    }

    #[test]
    fn three_hole_cover_cone_orders_sum_to_eight() {
        let (cov, map) = solved(FixtureKind::TwoHolePlate, 24, 1e-9);
        assert_eq!(cov.euler(), -4);
        let s = extract_structure(&cov, &map).unwrap();
        assert_eq!(s.cylinder_count(), 6);
        assert_eq!(s.total_zero_order(), 8);
    }

    #[test]
    fn identity_three_hole_has_two_simple_cones() {
        // The ring-graded plate needs this many layers before the hole
        // collars clear the critical curve along the corner diagonals.
        let (cov, map) =
            solved_identity(FixtureKind::TwoHolePlate, 32, WeightMode::Uniform, 1e-9);
        let s = extract_structure(&cov, &map).unwrap();
        assert_eq!(s.cylinder_count(), 3);
        assert_eq!(s.total_zero_order(), 2);
    }

    #[test]
    fn coarse_identity_three_hole_reports_broken_collar() {
        // Below that layer count a hole collar crosses the critical curve
        // and its face set falls apart; extraction must say so.
        let (cov, map) =
            solved_identity(FixtureKind::TwoHolePlate, 24, WeightMode::Uniform, 1e-9);
        assert!(matches!(
            extract_structure(&cov, &map),
            Err(StructureError::CylinderDisconnected { .. })
        ));
    }

    #[test]
    fn all_centre_map_is_rejected() {
        let mesh = fixtures::generate(FixtureKind::Tube, 10);
        let cov = CoveredMesh::identity(&mesh);
        let graph = foliation::build_star_graph(&cov, WeightMode::Uniform).unwrap();
        let n = cov.mesh.n_vertices();
        let map = GraphMap {
            graph,
            points: alloc::vec![GraphPoint::Center; n],
            energy: 0.0,
            iterations: 0,
            residual: 0.0,
            error_estimate: 0.0,
            converged: true,
        };
        assert!(matches!(
            extract_structure(&cov, &map),
            Err(StructureError::DegenerateFace { .. })
        ));
    }

    #[test]
    fn segment_flanks_are_distinct_cylinders_on_fixtures() {
        let (cov, map) = solved(FixtureKind::SquareAnnulus, 16, 1e-9);
        let s = extract_structure(&cov, &map).unwrap();
        for seg in &s.segments {
            assert!(seg.sides[0] < seg.sides[1]);
        }
    }
}


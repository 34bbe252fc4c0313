//! Flat coordinates on every cylinder of the decomposition.
//!
//! Within one cylinder the map's spoke coordinate `t` serves as the vertical
//! coordinate `v`; its discrete harmonic conjugate integrates to the
//! horizontal coordinate `u`, periodic with the cylinder's circumference
//! `L`.  Together `(u, v)` make each cylinder a flat right cylinder, the
//! canonical domain the quad tracer walks on.
//!
//! The conjugate is carried per face: rotating the face gradient of the
//! signed spoke scalar by a quarter turn gives a constant `u`-gradient on
//! each face, and the per-face offsets are glued by matching values at
//! shared edge midpoints over a dual spanning tree.  With that gluing the
//! holonomy around any interior vertex equals the vertex's cotan Laplacian,
//! so on a converged map every closure defect shrinks with the solver
//! residual rather than the mesh size.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::cover::CoveredMesh;
use crate::foliation::{GraphPoint, StarGraph};
use crate::math;
use crate::mesh::TriMesh;
use crate::structure::{FoliationStructure, NodeKind};

/// Circumferences below this are degenerate cylinders.
const ZERO_PERIOD_TOL: f64 = 1e-9;
/// Relative disagreement allowed between the two flanks of a critical chain.
const MEASURE_REL_TOL: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ChartError {
    /// The conjugate form has (nearly) no period: the cylinder is collapsed.
    ZeroPeriod { cylinder: usize },
    /// The cylinder's face region is not a clean discrete annulus: its
    /// critical-side frontier pinches against the pinned loop or itself, so
    /// no member-only cycle wraps the cylinder.  Happens when the mesh is
    /// too coarse to resolve the collar between the pinned loop and the
    /// critical graph.
    NonAnnulus { cylinder: usize },
    /// Steepest ascent toward the pinned loop stalled at an interior vertex.
    CutStalled { cylinder: usize, vertex: usize },
    /// A critical chain's horizontal length disagrees between its two
    /// flanking cylinders beyond tolerance: the map is not converged enough
    /// to carry a consistent flat metric.
    MeasureMismatch { chain: usize, relative: f64 },
}

impl fmt::Display for ChartError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ChartError::ZeroPeriod { cylinder } => {
                write!(f, "cylinder {cylinder} has vanishing circumference")
            }
            ChartError::NonAnnulus { cylinder } => write!(
                f,
                "cylinder {cylinder} pinches against its pinned loop instead of \
                 forming an annulus; refine the mesh"
            ),
            ChartError::CutStalled { cylinder, vertex } => write!(
                f,
                "steepest ascent stalled at vertex {vertex} while cutting cylinder {cylinder}"
            ),
            ChartError::MeasureMismatch { chain, relative } => write!(
                f,
                "critical chain {chain} measures differently from its two sides \
                 (relative gap {relative:.3e}); refine the map tolerance"
            ),
        }
    }
}

impl core::error::Error for ChartError {}

/// Flat coordinates of one cylinder.
#[derive(Debug, Clone)]
pub struct CylinderChart {
    pub cylinder: usize,
    /// Vertical extent: the spoke length.
    pub height: f64,
    /// Horizontal period measured around the pinned boundary loop.
    pub circumference: f64,
    /// The same period measured around the critical-end rim; agreement with
    /// `circumference` is the loop-independence of the conjugate form.
    pub rim_circumference: f64,
    /// +1 when `u` increases along the pinned loop's orientation.
    pub orientation: i8,
    /// Per-face affine offset: `u(x) = face_offset[f] + face_rot[f]·x` for
    /// `x` in face `f`.  Defined on every face of the cover so that critical
    /// nodes just outside the cylinder can be evaluated; only values on and
    /// near the cylinder are meaningful.
    pub face_offset: Vec<f64>,
    /// Per-face `u`-gradient: the quarter-turned gradient of the signed
    /// spoke scalar.
    pub face_rot: Vec<[f64; 3]>,
    /// Per-vertex horizontal coordinate, reduced to `[0, L)`; meaningful
    /// only where `member` is set.
    pub u: Vec<f64>,
    /// Per-vertex vertical coordinate (the spoke coordinate).
    pub v: Vec<f64>,
    pub member: Vec<bool>,
    /// Steepest-ascent vertex path from the rim to the pinned loop; `u`
    /// vanishes at its first vertex.
    pub cut: Vec<usize>,
    /// Halfedge cycle bounding the cylinder at the critical end.
    pub rim_halfedges: Vec<usize>,
    /// Halfedge cycle of the pinned boundary loop.
    pub pinned_halfedges: Vec<usize>,
    /// Horizontal positions of the branch nodes flanking this cylinder.
    pub boundary_markers: Vec<f64>,
    /// Worst period-reduced gluing defect over non-tree face pairs of the
    /// cylinder.
    pub max_closure: f64,
}

/// Per-chain flank measurements.
#[derive(Debug, Clone)]
pub struct SeamReport {
    /// Horizontal length of each chain measured from its two sides; `None`
    /// when the chain offers no usable measuring stations.
    pub per_chain: Vec<Option<[f64; 2]>>,
    pub max_rel_discrepancy: f64,
    /// Worst relative gap between the two period measurements, over all
    /// cylinders.
    pub max_period_gap: f64,
}

/// Per-halfedge increment of a per-vertex scalar: closed on every face up
/// to rounding.
pub fn exact_form(mesh: &TriMesh, scalar: &[f64]) -> Vec<f64> {
    (0..mesh.n_halfedges())
        .map(|h| scalar[mesh.dest(h)] - scalar[mesh.origin(h)])
        .collect()
}

/// Signed spoke-`j` scalar of a value vector.
pub fn sigma_scalar(points: &[GraphPoint], j: usize) -> Vec<f64> {
    points.iter().map(|p| p.sigma(j)).collect()
}

/// Gradient of the linear function taking `values` at the face corners,
/// rotated a quarter turn counter-clockwise in the face plane.
fn rotated_gradient(mesh: &TriMesh, f: usize, values: [f64; 3]) -> [f64; 3] {
    let [v0, v1, v2] = mesh.face_vertices(f);
    let p = [mesh.position(v0), mesh.position(v1), mesh.position(v2)];
    let n = math::cross(math::sub(p[1], p[0]), math::sub(p[2], p[0]));
    let double_area = math::norm(n);
    let n_hat = math::scale(n, 1.0 / double_area);
    // grad = (1/2A) sum_i values_i (n x opposite_edge_i); rotating by +90deg
    // turns n x e into -e, so the rotated gradient needs no cross product.
    let mut rot = [0.0; 3];
    for i in 0..3 {
        let opposite = math::sub(p[(i + 2) % 3], p[(i + 1) % 3]);
        rot = math::add(rot, math::scale(opposite, -values[i] / double_area));
    }
    // Remove any out-of-plane drift from inexact inputs.
    math::sub(rot, math::scale(n_hat, math::dot(rot, n_hat)))
}

fn face_values_from_form(mesh: &TriMesh, f: usize, form: &[f64]) -> [f64; 3] {
    let h0 = mesh.face_halfedge(f);
    let h1 = mesh.next(h0);
    [0.0, form[h0], form[h0] + form[h1]]
}

/// Per-halfedge integral of the quarter-turned form, each halfedge using its
/// own face (boundary halfedges borrow the twin's face).  Applying this
/// twice negates the input on every halfedge.
pub fn rotated_form(mesh: &TriMesh, form: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; mesh.n_halfedges()];
    for h in 0..mesh.n_halfedges() {
        let f = match mesh.face_of(h) {
            Some(f) => f,
            None => mesh
                .face_of(mesh.twin(h))
                .expect("an edge bounds at least one face"),
        };
        let rot = rotated_gradient(mesh, f, face_values_from_form(mesh, f, form));
        let step = math::sub(mesh.position(mesh.dest(h)), mesh.position(mesh.origin(h)));
        out[h] = math::dot(rot, step);
    }
    out
}

/// Discrete conjugate of a closed form: the quarter-turned form averaged
/// over the one or two faces at each halfedge.  Antisymmetric under twin.
pub fn conjugate_form(mesh: &TriMesh, form: &[f64]) -> Vec<f64> {
    let rotated = rotated_form(mesh, form);
    (0..mesh.n_halfedges())
        .map(|h| {
            let t = mesh.twin(h);
            if mesh.face_of(h).is_some() && mesh.face_of(t).is_some() {
                (rotated[h] - rotated[t]) / 2.0
            } else {
                // Single-face edge: both entries already use that face.
                rotated[h]
            }
        })
        .collect()
}

pub(crate) fn wrap_half(x: f64, period: f64) -> f64 {
    x - math::round(x / period) * period
}

pub(crate) fn reduce(x: f64, period: f64) -> f64 {
    let r = x - math::floor(x / period) * period;
    if r >= period {
        r - period
    } else {
        r
    }
}

fn edge_midpoint(mesh: &TriMesh, h: usize) -> [f64; 3] {
    math::lerp(
        mesh.position(mesh.origin(h)),
        mesh.position(mesh.dest(h)),
        0.5,
    )
}

/// Builds the flat chart of every cylinder.
pub fn build_charts(
    cover: &CoveredMesh,
    graph: &StarGraph,
    structure: &FoliationStructure,
) -> Result<Vec<CylinderChart>, ChartError> {
    (0..structure.cylinder_count())
        .map(|j| build_chart(cover, graph, structure, j))
        .collect()
}

/// Builds the flat chart of cylinder `j`.
pub fn build_chart(
    cover: &CoveredMesh,
    graph: &StarGraph,
    structure: &FoliationStructure,
    j: usize,
) -> Result<CylinderChart, ChartError> {
    let mesh = &cover.mesh;
    let sigma = sigma_scalar(&structure.points, j);

    let mut member = vec![false; mesh.n_vertices()];
    let mut v = vec![0.0; mesh.n_vertices()];
    let mut in_set = vec![false; mesh.n_faces()];
    for &f in &structure.cylinder_faces[j] {
        in_set[f] = true;
        for w in mesh.face_vertices(f) {
            member[w] = true;
            v[w] = sigma[w];
        }
    }

    // Quarter-turned gradient of the signed spoke scalar, per face.
    let face_rot: Vec<[f64; 3]> = (0..mesh.n_faces())
        .map(|f| {
            let [v0, v1, v2] = mesh.face_vertices(f);
            rotated_gradient(mesh, f, [sigma[v0], sigma[v1], sigma[v2]])
        })
        .collect();

    // Glue per-face offsets over a dual spanning tree: first across the
    // cylinder's own faces, then outward so nearby critical nodes can be
    // evaluated.  Matching at shared edge midpoints makes every vertex
    // holonomy a cotan Laplacian of the (graph-)harmonic scalar.
    let mut face_offset = vec![0.0; mesh.n_faces()];
    let mut glued = vec![false; mesh.n_faces()];
    let mut tree_pair = vec![false; mesh.n_edges()];
    let root = *structure.cylinder_faces[j].first().expect("cylinder faces");
    glued[root] = true;
    for members_only in [true, false] {
        let mut queue: VecDeque<usize> = (0..mesh.n_faces()).filter(|&f| glued[f]).collect();
        while let Some(f) = queue.pop_front() {
            let h0 = mesh.face_halfedge(f);
            for h in [h0, mesh.next(h0), mesh.next(mesh.next(h0))] {
                let Some(g) = mesh.face_of(mesh.twin(h)) else {
                    continue;
                };
                if glued[g] || (members_only && !in_set[g]) {
                    continue;
                }
                let m = edge_midpoint(mesh, h);
                face_offset[g] =
                    face_offset[f] + math::dot(math::sub(face_rot[f], face_rot[g]), m);
                glued[g] = true;
                tree_pair[mesh.edge_of(h)] = true;
                queue.push_back(g);
            }
        }
    }

    let eval = |f: usize, x: [f64; 3]| face_offset[f] + math::dot(face_rot[f], x);

    // Periods: continue the chart around a core loop by midpoint-gluing
    // through the vertex fans between consecutive loop faces and record how
    // much the offset grows over one turn.
    let circuit = |cycle: &[usize],
                   face_of_halfedge: &dyn Fn(usize) -> usize,
                   allowed: &dyn Fn(usize) -> bool|
     -> f64 {
        // The faces of consecutive loop halfedges, fanned around their
        // shared vertices, form a closed dual cycle; the period is the
        // total gluing offset accumulated over one turn.
        let mut total = 0.0;
        for (k, &h) in cycle.iter().enumerate() {
            let prev = cycle[(k + cycle.len() - 1) % cycle.len()];
            total += fan_transport(
                mesh,
                &face_rot,
                mesh.origin(h),
                face_of_halfedge(prev),
                face_of_halfedge(h),
                allowed,
            )
            .expect("loop faces connect around their shared vertex");
        }
        total
    };

    // Rim cycle: the region-boundary walk through the cylinder faces whose
    // twin lies outside.  A resolved collar has exactly two frontier
    // circles: the pinned loop and this critical-side rim, a simple cycle
    // of interior halfedges covering the whole interior frontier.  When the
    // mesh is too coarse the collar pinches (the walk reaches the mesh
    // boundary, revisits a vertex, or misses part of the frontier); no
    // member-only cycle wraps such a region, so no period can be read off.
    let mut interior_frontier: Vec<usize> = Vec::new();
    for &f in &structure.cylinder_faces[j] {
        let h0 = mesh.face_halfedge(f);
        for h in [h0, mesh.next(h0), mesh.next(mesh.next(h0))] {
            if matches!(mesh.face_of(mesh.twin(h)), Some(g) if !in_set[g]) {
                interior_frontier.push(h);
            }
        }
    }
    let rim_start = *interior_frontier.first().expect("annulus has a rim");
    let rim_halfedges = walk_region_boundary(mesh, &in_set, rim_start);
    let mut on_rim = vec![false; mesh.n_halfedges()];
    let mut origin_seen = vec![false; mesh.n_vertices()];
    let mut pinched = false;
    for &h in &rim_halfedges {
        on_rim[h] = true;
        if mesh.face_of(mesh.twin(h)).is_none() {
            pinched = true;
        }
        let p = mesh.origin(h);
        if origin_seen[p] {
            pinched = true;
        }
        origin_seen[p] = true;
    }
    if pinched || interior_frontier.iter().any(|&h| !on_rim[h]) {
        return Err(ChartError::NonAnnulus { cylinder: j });
    }

    let pinned_halfedges = mesh.boundary_loops()[j].clone();
    let signed_period = circuit(
        &pinned_halfedges,
        &|h| {
            mesh.face_of(mesh.twin(h))
                .expect("pinned edge has an inner face")
        },
        &|f| in_set[f],
    );
    let circumference = math::abs(signed_period);
    if !circumference.is_finite() || circumference < ZERO_PERIOD_TOL {
        return Err(ChartError::ZeroPeriod { cylinder: j });
    }
    let orientation: i8 = if signed_period >= 0.0 { 1 } else { -1 };

    let rim_circumference = math::abs(circuit(
        &rim_halfedges,
        &|h| mesh.face_of(h).expect("rim halfedge lies in a cylinder face"),
        &|f| in_set[f],
    ));

    // Gluing defects of the cylinder's non-tree face pairs, modulo L.
    let mut max_closure = 0.0f64;
    for &f in &structure.cylinder_faces[j] {
        let h0 = mesh.face_halfedge(f);
        for h in [h0, mesh.next(h0), mesh.next(mesh.next(h0))] {
            if tree_pair[mesh.edge_of(h)] {
                continue;
            }
            match mesh.face_of(mesh.twin(h)) {
                Some(g) if in_set[g] => {
                    let m = edge_midpoint(mesh, h);
                    let defect = math::abs(wrap_half(eval(f, m) - eval(g, m), circumference));
                    if defect > max_closure {
                        max_closure = defect;
                    }
                }
                _ => {}
            }
        }
    }

    // Steepest-ascent cut from the rim to the pinned loop; u vanishes at
    // its start.
    let cut = steepest_ascent_cut(mesh, structure, &member, &sigma, graph, &rim_halfedges, j)?;
    let anchor_face = mesh
        .vertex_faces(cut[0])
        .into_iter()
        .filter(|&f| in_set[f])
        .min()
        .expect("cut starts on the cylinder");
    let shift = eval(anchor_face, mesh.position(cut[0]));
    for off in face_offset.iter_mut() {
        *off -= shift;
    }

    // Vertex values for reporting: each member vertex read from its
    // smallest adjacent cylinder face, reduced to [0, L).
    let mut u = vec![0.0; mesh.n_vertices()];
    for w in 0..mesh.n_vertices() {
        if !member[w] {
            continue;
        }
        let f = mesh
            .vertex_faces(w)
            .into_iter()
            .filter(|&f| in_set[f])
            .min()
            .expect("member vertex lies in a cylinder face");
        u[w] = reduce(
            face_offset[f] + math::dot(face_rot[f], mesh.position(w)),
            circumference,
        );
    }

    let mut chart = CylinderChart {
        cylinder: j,
        height: graph.length(j),
        circumference,
        rim_circumference,
        orientation,
        face_offset,
        face_rot,
        u,
        v,
        member,
        cut,
        rim_halfedges,
        pinned_halfedges,
        boundary_markers: Vec::new(),
        max_closure,
    };
    chart.boundary_markers = zero_markers(mesh, structure, &chart, j);
    Ok(chart)
}

/// One rotation step around vertex `p` from face `f`, crossing the
/// outgoing (`forward`) or incoming halfedge of `f` at `p`.  Returns the
/// neighbouring face and the crossed halfedge.
fn rotate_step(mesh: &TriMesh, p: usize, f: usize, forward: bool) -> Option<(usize, usize)> {
    let h0 = mesh.face_halfedge(f);
    let hs = [h0, mesh.next(h0), mesh.next(mesh.next(h0))];
    let h = hs.into_iter().find(|&h| {
        if forward {
            mesh.origin(h) == p
        } else {
            mesh.dest(h) == p
        }
    })?;
    mesh.face_of(mesh.twin(h)).map(|g| (g, h))
}

/// Accumulated midpoint-gluing offset from `f_start` to `f_end` rotating
/// around `p` through `allowed` faces; tries both rotation directions.
fn fan_transport(
    mesh: &TriMesh,
    face_rot: &[[f64; 3]],
    p: usize,
    f_start: usize,
    f_end: usize,
    allowed: &dyn Fn(usize) -> bool,
) -> Option<f64> {
    'dir: for forward in [true, false] {
        let mut acc = 0.0;
        let mut f = f_start;
        for _ in 0..=mesh.n_faces() {
            if f == f_end {
                return Some(acc);
            }
            let Some((g, h)) = rotate_step(mesh, p, f, forward) else {
                continue 'dir;
            };
            if !allowed(g) {
                continue 'dir;
            }
            let m = edge_midpoint(mesh, h);
            acc += math::dot(math::sub(face_rot[f], face_rot[g]), m);
            f = g;
        }
        break;
    }
    None
}

/// Walks the boundary cycle of a face region starting from one of its
/// boundary halfedges (face inside, twin outside).
fn walk_region_boundary(mesh: &TriMesh, in_set: &[bool], start: usize) -> Vec<usize> {
    let outside = |h: usize| match mesh.face_of(h) {
        Some(f) => !in_set[f],
        None => true,
    };
    let mut cycle = Vec::new();
    let mut h = start;
    loop {
        cycle.push(h);
        // Rotate around dest(h) until the next boundary halfedge.
        let mut k = mesh.next(h);
        while !outside(mesh.twin(k)) {
            k = mesh.next(mesh.twin(k));
        }
        h = k;
        if h == start {
            break;
        }
    }
    cycle
}

/// Deterministic steepest-ascent vertex path from the critical end to the
/// pinned loop of cylinder `j`.
fn steepest_ascent_cut(
    mesh: &TriMesh,
    structure: &FoliationStructure,
    member: &[bool],
    sigma: &[f64],
    graph: &StarGraph,
    rim_halfedges: &[usize],
    j: usize,
) -> Result<Vec<usize>, ChartError> {
    let start = cut_start_vertex(mesh, structure, member, rim_halfedges, j);
    let mut path = vec![start];
    let mut current = start;
    let target = graph.length(j);
    while sigma[current] < target {
        let mut best: Option<usize> = None;
        for n in mesh.vertex_neighbors(current) {
            if !member[n] {
                continue;
            }
            if best.map_or(true, |b| sigma[n] > sigma[b]) {
                best = Some(n);
            }
        }
        let next = best.ok_or(ChartError::CutStalled {
            cylinder: j,
            vertex: current,
        })?;
        if sigma[next] <= sigma[current] {
            return Err(ChartError::CutStalled {
                cylinder: j,
                vertex: current,
            });
        }
        path.push(next);
        current = next;
    }
    Ok(path)
}

/// Starting vertex of the cut: the cylinder-side flank of the first branch
/// node touching this cylinder, or the smallest rim vertex on zero-free
/// cylinders.
fn cut_start_vertex(
    mesh: &TriMesh,
    structure: &FoliationStructure,
    member: &[bool],
    rim_halfedges: &[usize],
    j: usize,
) -> usize {
    for zero in &structure.zeros {
        for chain in &structure.chains {
            if chain.closed || !chain.sides.contains(&j) {
                continue;
            }
            let n = chain.nodes.len();
            for (end, anchor) in [
                (chain.nodes[0], chain.nodes[1]),
                (chain.nodes[n - 1], chain.nodes[n - 2]),
            ] {
                if end != zero.node {
                    continue;
                }
                if let Some(vtx) = flank_vertex(mesh, structure, member, anchor, j) {
                    return vtx;
                }
            }
        }
    }
    // Zero-free cylinder (or no usable flank): smallest non-pinned rim
    // vertex, so the ascent still has room to climb.
    rim_halfedges
        .iter()
        .map(|&h| mesh.origin(h))
        .filter(|&v| !mesh.is_boundary_vertex(v))
        .min()
        .or_else(|| rim_halfedges.iter().map(|&h| mesh.origin(h)).min())
        .expect("cylinder has a rim")
}

/// Cylinder-side member vertex nearest to a critical node.
fn flank_vertex(
    mesh: &TriMesh,
    structure: &FoliationStructure,
    member: &[bool],
    node: usize,
    j: usize,
) -> Option<usize> {
    match structure.nodes[node].kind {
        NodeKind::EdgeCrossing { edge, .. } => {
            let [a, b] = mesh.edge_vertices(edge);
            [a, b]
                .into_iter()
                .find(|&w| member[w] && spoke_is(structure, w, j))
        }
        NodeKind::CenterVertex { vertex } => mesh
            .vertex_neighbors(vertex)
            .into_iter()
            .filter(|&w| member[w] && spoke_is(structure, w, j))
            .min(),
        NodeKind::FaceJunction { face } => mesh
            .face_vertices(face)
            .into_iter()
            .find(|&w| member[w] && spoke_is(structure, w, j)),
    }
}

fn spoke_is(structure: &FoliationStructure, w: usize, j: usize) -> bool {
    matches!(structure.points[w], GraphPoint::OnEdge { edge, .. } if edge == j)
}

/// A crossing suitable as a measuring endpoint: every vertex of the two
/// faces flanking its edge maps to the centre or to one of the chain's own
/// spokes, so the two flank scalars are exact negatives there and the
/// endpoint transport carries no one-sided discretization bias.
fn clean_crossing(
    mesh: &TriMesh,
    structure: &FoliationStructure,
    node: usize,
    sides: [usize; 2],
) -> bool {
    let NodeKind::EdgeCrossing { edge, .. } = structure.nodes[node].kind else {
        return false;
    };
    let h = mesh.edge_halfedge(edge);
    [mesh.face_of(h), mesh.face_of(mesh.twin(h))]
        .into_iter()
        .flatten()
        .all(|f| {
            mesh.face_vertices(f)
                .into_iter()
                .all(|w| match structure.points[w] {
                    GraphPoint::Center => true,
                    GraphPoint::OnEdge { edge, .. } => edge == sides[0] || edge == sides[1],
                })
        })
}

/// Face in which a critical node is evaluated: deterministic across the
/// flanking charts so both sides price the same point in the same face.
pub(crate) fn station_face(mesh: &TriMesh, structure: &FoliationStructure, node: usize) -> usize {
    match structure.nodes[node].kind {
        NodeKind::EdgeCrossing { edge, .. } => {
            let h = mesh.edge_halfedge(edge);
            [mesh.face_of(h), mesh.face_of(mesh.twin(h))]
                .into_iter()
                .flatten()
                .min()
                .expect("crossing edge bounds a face")
        }
        NodeKind::CenterVertex { vertex } => mesh
            .vertex_faces(vertex)
            .into_iter()
            .min()
            .expect("centre vertex lies in a face"),
        NodeKind::FaceJunction { face } => face,
    }
}

/// Horizontal coordinate of a critical node in one cylinder's chart.
pub(crate) fn station_value(
    mesh: &TriMesh,
    structure: &FoliationStructure,
    chart: &CylinderChart,
    node: usize,
) -> f64 {
    let f = station_face(mesh, structure, node);
    chart.face_offset[f] + math::dot(chart.face_rot[f], structure.nodes[node].position)
}

/// Horizontal marker positions of the branch nodes flanking cylinder `j`.
pub(crate) fn zero_markers(
    mesh: &TriMesh,
    structure: &FoliationStructure,
    chart: &CylinderChart,
    j: usize,
) -> Vec<f64> {
    let mut markers = Vec::new();
    for zero in &structure.zeros {
        let touches = structure.chains.iter().any(|c| {
            !c.closed
                && c.sides.contains(&j)
                && (c.nodes[0] == zero.node || c.nodes[c.nodes.len() - 1] == zero.node)
        });
        if !touches {
            continue;
        }
        let val = station_value(mesh, structure, chart, zero.node);
        markers.push(reduce(val, chart.circumference));
    }
    markers.sort_by(f64::total_cmp);
    markers
}

/// Verifies that every critical chain measures the same horizontal length
/// from both flanking cylinders, and that each cylinder's two period
/// measurements agree.
pub fn seam_measure_check(
    cover: &CoveredMesh,
    structure: &FoliationStructure,
    charts: &[CylinderChart],
) -> Result<SeamReport, ChartError> {
    let mesh = &cover.mesh;
    let mut per_chain = Vec::with_capacity(structure.chains.len());
    let mut max_rel = 0.0f64;
    let mut worst: Option<(usize, f64)> = None;
    for (ci, chain) in structure.chains.iter().enumerate() {
        let [a, b] = chain.sides;
        let n = chain.nodes.len();
        let mut stations: Vec<usize> = if chain.closed {
            chain.nodes.clone()
        } else {
            chain.nodes[1..n - 1].to_vec()
        };
        if !chain.closed {
            // Pollution from interior stations cancels in the telescoping
            // sum, but the endpoints enter directly, so the walk must start
            // and end at crossings whose station face carries exactly
            // opposite flank scalars.
            while stations
                .first()
                .is_some_and(|&node| !clean_crossing(mesh, structure, node, chain.sides))
            {
                stations.remove(0);
            }
            while stations
                .last()
                .is_some_and(|&node| !clean_crossing(mesh, structure, node, chain.sides))
            {
                stations.pop();
            }
        } else if let Some(&first) = stations.first() {
            // Close the measuring walk around the loop.
            stations.push(first);
        }
        if stations.len() < 2 {
            per_chain.push(None);
            continue;
        }
        let values: Vec<[f64; 2]> = stations
            .iter()
            .map(|&node| {
                [
                    station_value(mesh, structure, &charts[a], node),
                    station_value(mesh, structure, &charts[b], node),
                ]
            })
            .collect();
        let mut totals = [0.0f64; 2];
        for pair in values.windows(2) {
            totals[0] += wrap_half(pair[1][0] - pair[0][0], charts[a].circumference);
            totals[1] += wrap_half(pair[1][1] - pair[0][1], charts[b].circumference);
        }
        let (ma, mb) = (math::abs(totals[0]), math::abs(totals[1]));
        per_chain.push(Some([ma, mb]));
        let scale = ma.max(mb);
        if scale > 1e-12 * charts[a].circumference.max(charts[b].circumference) {
            let rel = math::abs(ma - mb) / scale;
            if rel > max_rel {
                max_rel = rel;
                worst = Some((ci, rel));
            }
        }
    }

    let mut max_period_gap = 0.0f64;
    for chart in charts {
        let gap = math::abs(chart.circumference - chart.rim_circumference) / chart.circumference;
        if gap > max_period_gap {
            max_period_gap = gap;
        }
    }

    if let Some((chain, relative)) = worst {
        if relative > MEASURE_REL_TOL {
            return Err(ChartError::MeasureMismatch { chain, relative });
        }
    }
    Ok(SeamReport {
        per_chain,
        max_rel_discrepancy: max_rel,
        max_period_gap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boundary::BoundaryLabels;
    use crate::cover;
    use crate::fixtures::{self, FixtureKind};
    use crate::foliation::{self, FoliationParams, GraphMap, WeightMode};
    use crate::structure::extract_structure;

    pub(super) fn solved_cover(
        kind: FixtureKind,
        res: usize,
        tol: f64,
    ) -> (CoveredMesh, StarGraph, GraphMap) {
        let mesh = fixtures::generate(kind, res);
        let labels = BoundaryLabels::classify(&mesh);
        let segments = cover::split_segments(&mesh, &labels);
        let tagging = cover::select_tagging(&labels, &segments).unwrap();
        let cov = cover::build_cover(&mesh, &labels, &segments, &tagging).unwrap();
        let graph = foliation::build_star_graph(&cov, WeightMode::Uniform).unwrap();
        let params = FoliationParams {
            tol,
            max_iters: 200_000,
        };
        let map = foliation::solve(&cov, &graph, &params).unwrap();
        assert!(map.converged);
        (cov, graph, map)
    }

    fn solved_identity(
        kind: FixtureKind,
        res: usize,
        tol: f64,
    ) -> (CoveredMesh, StarGraph, GraphMap) {
        let mesh = fixtures::generate(kind, res);
        let cov = CoveredMesh::identity(&mesh);
        let graph = foliation::build_star_graph(&cov, WeightMode::Uniform).unwrap();
        let params = FoliationParams {
            tol,
            max_iters: 200_000,
        };
        let map = foliation::solve(&cov, &graph, &params).unwrap();
        assert!(map.converged);
        (cov, graph, map)
    }

    #[test]
    fn exact_form_telescopes_on_faces() {
        let mesh = fixtures::generate(FixtureKind::SquareAnnulus, 16);
        let scalar: Vec<f64> = mesh
            .positions()
            .iter()
            .map(|p| 0.3 * p[0] - 1.7 * p[1])
            .collect();
        let omega = exact_form(&mesh, &scalar);
        for f in 0..mesh.n_faces() {
            let h0 = mesh.face_halfedge(f);
            let total = omega[h0] + omega[mesh.next(h0)] + omega[mesh.next(mesh.next(h0))];
            assert!(math::abs(total) < 1e-14, "face {f} fails to close: {total}");
        }
    }

    #[test]
    fn double_rotation_negates_the_form() {
        let mesh = fixtures::generate(FixtureKind::SquareAnnulus, 20);
        let scalar: Vec<f64> = mesh
            .positions()
            .iter()
            .map(|p| p[0] * p[0] - 0.5 * p[1] + 0.25 * p[0] * p[1])
            .collect();
        let omega = exact_form(&mesh, &scalar);
        let twice = rotated_form(&mesh, &rotated_form(&mesh, &omega));
        let scale: f64 = omega.iter().fold(0.0, |m, w| m.max(math::abs(*w)));
        for h in 0..mesh.n_halfedges() {
            assert!(
                math::abs(twice[h] + omega[h]) <= 1e-12 * scale,
                "halfedge {h}: rotating twice must negate the form"
            );
        }
    }

    #[test]
    fn conjugate_form_is_twin_antisymmetric() {
        let mesh = fixtures::generate(FixtureKind::Tube, 10);
        let scalar: Vec<f64> = mesh.positions().iter().map(|p| p[2]).collect();
        let eta = conjugate_form(&mesh, &exact_form(&mesh, &scalar));
        for h in 0..mesh.n_halfedges() {
            assert_eq!(eta[h], -eta[mesh.twin(h)]);
        }
    }

    #[test]
    fn tube_chart_matches_flat_cylinder_analytics() {
        let (cov, graph, map) = solved_identity(FixtureKind::Tube, 12, 1e-11);
        let s = extract_structure(&cov, &map).unwrap();
        let charts = build_charts(&cov, &graph, &s).unwrap();
        assert_eq!(charts.len(), 2);
        // The flat tube's conjugate scales the ring perimeter by |grad t|=2.
        let ring = cov.mesh.boundary_loop_length(0);
        for chart in &charts {
            assert_eq!(chart.height, 1.0);
            assert!(
                math::abs(chart.circumference - 2.0 * ring) < 1e-6,
                "L = {}, ring = {ring}",
                chart.circumference
            );
            let gap =
                math::abs(chart.circumference - chart.rim_circumference) / chart.circumference;
            assert!(gap < 1e-6, "period loop-independence gap {gap}");
            assert!(chart.boundary_markers.is_empty());
            assert!(chart.max_closure < 1e-9);
        }
    }

    #[test]
    fn square_cover_chart_periods_and_seam_agree() {
        let (cov, graph, map) = solved_cover(FixtureKind::SquareDisk, 9, 1e-11);
        let s = extract_structure(&cov, &map).unwrap();
        let charts = build_charts(&cov, &graph, &s).unwrap();
        // Unit square doubled: geometric circumference 2, |grad sigma| = 2.
        for chart in &charts {
            assert!(
                math::abs(chart.circumference - 4.0) < 1e-3,
                "L = {}",
                chart.circumference
            );
            assert!(chart.max_closure < 1e-6 * chart.circumference);
            for w in 0..cov.mesh.n_vertices() {
                if chart.member[w] {
                    assert!(chart.u[w] >= 0.0 && chart.u[w] < chart.circumference);
                }
            }
        }
        let report = seam_measure_check(&cov, &s, &charts).unwrap();
        assert!(report.max_rel_discrepancy < 1e-5);
        assert!(report.max_period_gap < 1e-6);
        // The single closed chain measures the full period from both sides.
        let m = report.per_chain[0].unwrap();
        assert!(math::abs(m[0] - charts[0].circumference) < 1e-4 * m[0]);
        assert!(math::abs(m[1] - charts[1].circumference) < 1e-4 * m[1]);
    }

    #[test]
    fn annulus_cover_charts_are_deck_symmetric() {
        let (cov, graph, map) = solved_cover(FixtureKind::SquareAnnulus, 24, 1e-11);
        let s = extract_structure(&cov, &map).unwrap();
        let charts = build_charts(&cov, &graph, &s).unwrap();
        for j in 0..charts.len() {
            let p = cov.deck_loop[j];
            let rel = math::abs(charts[j].circumference - charts[p].circumference)
                / charts[j].circumference;
            assert!(rel < 1e-6, "deck-paired circumference gap {rel}");
            assert_eq!(charts[j].height, charts[p].height);
        }
        let report = seam_measure_check(&cov, &s, &charts).unwrap();
        assert!(report.max_rel_discrepancy < 1e-4);
        assert!(report.max_period_gap < 1e-6);
        // Markers exist wherever open chains touch a cylinder.
        for chart in &charts {
            for &m in &chart.boundary_markers {
                assert!(m >= 0.0 && m < chart.circumference);
            }
        }
    }

    #[test]
    fn unresolved_collar_reports_non_annulus() {
        // At this resolution the critical graph passes within one face ring
        // of a seam-end corner, pinching the outer collar: no member-only
        // cycle wraps it, and the chart must refuse rather than report a
        // period from the wrong homotopy class.
        let (cov, graph, map) = solved_cover(FixtureKind::SquareAnnulus, 16, 1e-11);
        let s = extract_structure(&cov, &map).unwrap();
        assert!(matches!(
            build_charts(&cov, &graph, &s),
            Err(ChartError::NonAnnulus { cylinder: 0 })
        ));
    }

    #[test]
    fn cut_runs_from_rim_to_pinned_loop() {
        let (cov, graph, map) = solved_cover(FixtureKind::SquareDisk, 9, 1e-9);
        let s = extract_structure(&cov, &map).unwrap();
        let chart = build_chart(&cov, &graph, &s, 0).unwrap();
        let first = chart.cut[0];
        let last = *chart.cut.last().unwrap();
        assert!(!cov.mesh.is_boundary_vertex(first));
        assert_eq!(cov.mesh.boundary_loop_of(last), Some(0));
        for pair in chart.cut.windows(2) {
            assert!(s.points[pair[1]].sigma(0) > s.points[pair[0]].sigma(0));
        }
        // u is anchored at the cut start.
        assert!(
            chart.u[first] < 1e-9 || chart.u[first] > chart.circumference - 1e-9,
            "u at cut start = {}",
            chart.u[first]
        );
    }

    #[test]
    fn stretched_map_fails_the_seam_check() {
        let (cov, graph, map) = solved_cover(FixtureKind::SquareDisk, 9, 1e-9);
        let mut bad = map.clone();
        for p in bad.points.iter_mut() {
            if let GraphPoint::OnEdge { edge: 0, t } = p {
                if *t < 0.999 {
                    *t *= 0.7;
                }
            }
        }
        let s = extract_structure(&cov, &bad).unwrap();
        let charts = build_charts(&cov, &graph, &s).unwrap();
        assert!(matches!(
            seam_measure_check(&cov, &s, &charts),
            Err(ChartError::MeasureMismatch { .. })
        ));
    }
}


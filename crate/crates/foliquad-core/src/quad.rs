//! Quad mesh extraction from the flat cylinder decomposition.
//!
//! Every cylinder of the foliation is a flat rectangle `[0, L) x [0, d]`
//! closed into a tube.  A quad grid on the whole surface is a choice of
//! horizontal rows per cylinder and one cyclic set of vertical columns per
//! cylinder, such that the column stations on a shared critical chain agree
//! between the two cylinders it bounds.  Stations are quantized once per
//! chain (and once per deck orbit of chains), then used verbatim from both
//! sides, so neighbouring grids weld into a single mesh without
//! T-junctions.
//!
//! Boundary corners dictate columns.  A corner that ends a seam arc sits on
//! a vertical whose far end is a deck-fixed station of the cylinder rim,
//! and the two are matched explicitly; any other corner injects a fresh
//! column at its own horizontal position.  After tracing the grid over the
//! doubled surface, [`finalize`] keeps the original sheet only, which cuts
//! every seam-anchored corner down to a single incident quad.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::boundary::BoundaryLabels;
use crate::chart::{self, CylinderChart};
use crate::cover::CoveredMesh;
use crate::math;
use crate::mesh::TriMesh;
use crate::structure::{CriticalChain, FoliationStructure, NodeKind};

/// Allowed horizontal gap between a corner's vertical and its anchoring
/// deck-fixed rim station, relative to the circumference.
const ALIGN_REL_TOL: f64 = 1e-5;
/// Two distinct stations closer than this (relative to the circumference)
/// make a degenerate cell.
const STATION_GAP_REL: f64 = 1e-9;
/// An injected corner column merges with an existing station closer than
/// this (relative to the circumference) instead of creating a sliver.
const MERGE_REL_TOL: f64 = 1e-4;
/// Two reports of the same station must agree to this relative tolerance.
const SHARED_REL_TOL: f64 = 1e-6;
/// Consistency bound for chart offsets continued over the critical band,
/// relative to the circumference.
const GLUE_REL_TOL: f64 = 1e-6;
/// Barycentric slack accepted when placing a grid point inside a chart
/// triangle.
const BARY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum QuadError {
    /// No consistent whole-number subdivision of the cylinder exists.
    QuantizationInfeasible {
        cylinder: usize,
        detail: &'static str,
    },
    /// Deck-mirrored pieces of a critical chain could not be matched, so
    /// the two sheets would quantize differently.
    WeldMismatch { chain: usize },
    /// A grid point has no positively-oriented chart preimage.
    FoldOver {
        cylinder: usize,
        column: usize,
        row: usize,
    },
    /// A corner's vertical misses every deck-fixed station of the rim, so
    /// the seam would cut through the interior of a cell.
    SeamNotTrajectoryAligned { cylinder: usize, gap: f64 },
    /// A corner vertex ended up with the wrong number of incident quads.
    CornerValenceViolation {
        vertex: usize,
        expected: usize,
        actual: usize,
    },
    /// The welded grid is not a manifold mesh of the expected topology.
    TopologyBroken { detail: &'static str },
}

impl fmt::Display for QuadError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QuadError::QuantizationInfeasible { cylinder, detail } => {
                write!(f, "cannot quantize cylinder {cylinder}: {detail}")
            }
            QuadError::WeldMismatch { chain } => {
                write!(f, "subdivision disagrees across critical chain {chain}")
            }
            QuadError::FoldOver {
                cylinder,
                column,
                row,
            } => write!(
                f,
                "grid point (column {column}, row {row}) of cylinder {cylinder} \
                 has no positively-oriented chart preimage"
            ),
            QuadError::SeamNotTrajectoryAligned { cylinder, gap } => write!(
                f,
                "a corner vertical on cylinder {cylinder} misses the seam-fixed \
                 rim station by {gap:.3e}; refine the map tolerance"
            ),
            QuadError::CornerValenceViolation {
                vertex,
                expected,
                actual,
            } => write!(
                f,
                "corner vertex {vertex} touches {actual} quads, expected {expected}"
            ),
            QuadError::TopologyBroken { detail } => {
                write!(f, "welded quad grid is invalid: {detail}")
            }
        }
    }
}

impl core::error::Error for QuadError {}

/// Identity of a rim station, shared verbatim by every cylinder that uses
/// it; grids weld by keying vertices on this.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum StationId {
    /// A critical node (branch point or forced seam crossing).
    Node(usize),
    /// The `index`-th subdivision station along a chain.
    Chain { chain: usize, index: usize },
}

/// Resolved column set of one cylinder.
#[derive(Debug, Clone)]
pub struct CylinderColumns {
    /// Horizontal positions, strictly ascending in `[0, L)`.
    pub u: Vec<f64>,
    /// Rim identity of each column, shared with the neighbouring cylinders.
    pub station: Vec<StationId>,
    /// Rim end of each column in space.
    pub rim_point: Vec<[f64; 3]>,
    /// Cover vertex under the rim end, when it is exactly a mesh vertex.
    pub rim_vertex: Vec<Option<usize>>,
    /// Pinned-boundary end of each column in space.
    pub pin_point: Vec<[f64; 3]>,
    /// Cover vertex under the pinned end (set for boundary corners and for
    /// stations that land exactly on a boundary vertex).
    pub pin_vertex: Vec<Option<usize>>,
    /// True when the column runs along the seam from an anchored corner.
    pub seam_anchor: Vec<bool>,
}

/// Subdivision stations of one critical chain, listed in chain order and
/// shared by both flanking cylinders.
#[derive(Debug, Clone)]
pub(crate) struct ChainLayout {
    pub(crate) points: Vec<[f64; 3]>,
    /// Cover vertex under the station when it is exactly a mesh vertex.
    pub(crate) on_vertex: Vec<Option<usize>>,
    /// Critical node backing the station, for nodes promoted to stations.
    pub(crate) node_of: Vec<Option<usize>>,
    /// Horizontal position of each station in the chart of `sides[0]` and
    /// `sides[1]` respectively (unreduced).
    pub(crate) flank_u: [Vec<f64>; 2],
    /// Corner forced onto this station's column, if any.
    pub(crate) pin_corner: Vec<Option<usize>>,
    pub(crate) closed: bool,
}

impl ChainLayout {
    fn key(&self, chain: usize, index: usize) -> StationId {
        match self.node_of[index] {
            Some(n) => StationId::Node(n),
            None => StationId::Chain { chain, index },
        }
    }

    fn len(&self) -> usize {
        self.points.len()
    }
}

/// Chart offsets continued over the critical band on one cylinder's side;
/// `present[f]` marks faces with a usable offset.
#[derive(Debug, Clone)]
pub(crate) struct Patch {
    pub(crate) offset: Vec<f64>,
    pub(crate) present: Vec<bool>,
}

impl Patch {
    fn eval(&self, chart: &CylinderChart, face: usize, p: [f64; 3]) -> Option<f64> {
        if !self.present[face] {
            return None;
        }
        Some(self.offset[face] + math::dot(chart.face_rot[face], p))
    }
}

/// Grid resolution and column geometry for every cylinder.
#[derive(Debug, Clone)]
pub struct QuantizationPlan {
    /// Requested edge length in world units.
    pub target_h: f64,
    /// Horizontal row count per cylinder.
    pub rows: Vec<usize>,
    /// Column set per cylinder.
    pub columns: Vec<CylinderColumns>,
    pub(crate) chains: Vec<ChainLayout>,
    pub(crate) patches: Vec<Patch>,
}

impl QuantizationPlan {
    /// Number of columns around cylinder `j`.
    pub fn column_count(&self, j: usize) -> usize {
        self.columns[j].u.len()
    }

    /// Total quad count of the traced grid on the covered surface.
    pub fn cell_count(&self) -> usize {
        self.columns
            .iter()
            .zip(&self.rows)
            .map(|(c, &m)| c.u.len() * m)
            .sum()
    }
}

/// Chart source of a quad vertex.
#[derive(Debug, Clone, Copy)]
pub struct Provenance {
    /// Cylinder whose grid created the vertex (lowest index for shared rim
    /// vertices).
    pub cylinder: usize,
    pub u: f64,
    pub v: f64,
    /// Cover vertex the quad vertex coincides with, if any.
    pub on_vertex: Option<usize>,
}

/// A pure quad mesh with chart provenance.
#[derive(Debug, Clone)]
pub struct QuadMesh {
    pub positions: Vec<[f64; 3]>,
    /// Counter-clockwise vertex loops.
    pub quads: Vec<[usize; 4]>,
    pub provenance: Vec<Provenance>,
    /// Sheet of the doubled surface each quad was traced on; all `false`
    /// once restricted to the original surface.
    pub quad_sheet: Vec<bool>,
}

/// Combinatorial census of a quad mesh.
#[derive(Debug, Clone, Default)]
pub struct QuadCensus {
    pub euler: i64,
    /// Interior vertex valence -> count of such vertices.
    pub interior_valences: BTreeMap<usize, usize>,
    /// Boundary vertex quad count -> count of such vertices.
    pub boundary_quad_counts: BTreeMap<usize, usize>,
    /// Per-vertex incident quad count.
    pub quad_count: Vec<usize>,
    /// Per-vertex boundary flag.
    pub boundary: Vec<bool>,
}

/// Shape quality summary of a quad mesh.
#[derive(Debug, Clone)]
pub struct QualityReport {
    pub quad_count: usize,
    pub vertex_count: usize,
    /// Extremal corner angles in radians.
    pub min_angle: f64,
    pub max_angle: f64,
    /// Mean absolute deviation of corner angles from a right angle.
    pub mean_angle_deviation: f64,
    pub min_scaled_jacobian: f64,
    pub mean_scaled_jacobian: f64,
    pub interior_valences: BTreeMap<usize, usize>,
    pub boundary_quad_counts: BTreeMap<usize, usize>,
    /// Interior vertices whose valence differs from four.
    pub irregular_interior: usize,
}

// ---------------------------------------------------------------------------
// Deck action on critical nodes and chains.

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum NodeKey {
    Edge(usize),
    Vertex(usize),
    Face(usize),
}

fn node_key(structure: &FoliationStructure, node: usize) -> NodeKey {
    match structure.nodes[node].kind {
        NodeKind::EdgeCrossing { edge, .. } => NodeKey::Edge(edge),
        NodeKind::CenterVertex { vertex } => NodeKey::Vertex(vertex),
        NodeKind::FaceJunction { face } => NodeKey::Face(face),
    }
}

/// Image of every critical node under the deck transformation, when the
/// image is itself a recorded node.
fn deck_nodes(cover: &CoveredMesh, structure: &FoliationStructure) -> Vec<Option<usize>> {
    let mesh = &cover.mesh;
    let lookup: BTreeMap<NodeKey, usize> = (0..structure.nodes.len())
        .map(|n| (node_key(structure, n), n))
        .collect();
    (0..structure.nodes.len())
        .map(|n| {
            let key = match structure.nodes[n].kind {
                NodeKind::CenterVertex { vertex } => NodeKey::Vertex(cover.deck_vertex[vertex]),
                NodeKind::FaceJunction { face } => NodeKey::Face(cover.deck_face[face]),
                NodeKind::EdgeCrossing { edge, .. } => {
                    let [a, b] = mesh.edge_vertices(edge);
                    let (da, db) = (cover.deck_vertex[a], cover.deck_vertex[b]);
                    match mesh.outgoing(da).into_iter().find(|&h| mesh.dest(h) == db) {
                        Some(h) => NodeKey::Edge(mesh.edge_of(h)),
                        None => return None,
                    }
                }
            };
            lookup.get(&key).copied()
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Chart continuation over the critical band.

/// Faces a critical node touches, ascending.
fn node_faces(mesh: &TriMesh, structure: &FoliationStructure, node: usize) -> Vec<usize> {
    match structure.nodes[node].kind {
        NodeKind::EdgeCrossing { edge, .. } => {
            let h = mesh.edge_halfedge(edge);
            let mut fs: Vec<usize> = [mesh.face_of(h), mesh.face_of(mesh.twin(h))]
                .into_iter()
                .flatten()
                .collect();
            fs.sort_unstable();
            fs
        }
        NodeKind::CenterVertex { vertex } => mesh.vertex_faces(vertex),
        NodeKind::FaceJunction { face } => vec![face],
    }
}

/// Faces crossed by (or flanking) one critical segment, ascending.
fn segment_faces(mesh: &TriMesh, structure: &FoliationStructure, seg: usize) -> Vec<usize> {
    let [n1, n2] = structure.segments[seg].nodes;
    let f1 = node_faces(mesh, structure, n1);
    let f2 = node_faces(mesh, structure, n2);
    f1.into_iter().filter(|f| f2.contains(f)).collect()
}

fn edge_midpoint(mesh: &TriMesh, h: usize) -> [f64; 3] {
    let a = mesh.position(mesh.origin(h));
    let b = mesh.position(mesh.dest(h));
    math::scale(math::add(a, b), 0.5)
}

/// Continues cylinder `j`'s chart offsets across its side of the critical
/// band, re-gluing outward from the member faces so that horizontal
/// positions of the critical nodes land on the cylinder's own chart branch.
fn build_patch(
    cover: &CoveredMesh,
    structure: &FoliationStructure,
    chart: &CylinderChart,
    sigma: &[f64],
    j: usize,
) -> Result<Patch, QuadError> {
    let mesh = &cover.mesh;
    let nf = mesh.n_faces();
    let mut present = vec![false; nf];
    let mut offset = vec![0.0f64; nf];
    for f in 0..nf {
        if structure.face_cylinder[f] == Some(j) {
            present[f] = true;
            offset[f] = chart.face_offset[f];
        }
    }
    // Band faces wholly on this cylinder's side of the critical graph.
    let eligible: Vec<bool> = (0..nf)
        .map(|f| {
            structure.face_cylinder[f].is_none()
                && mesh.face_vertices(f).iter().all(|&v| sigma[v] >= 0.0)
        })
        .collect();
    let glue = |from: usize, to: usize, h: usize, offset: &[f64]| -> f64 {
        // Match the horizontal value at the shared edge midpoint.
        let m = edge_midpoint(mesh, h);
        offset[from] + math::dot(chart.face_rot[from], m) - math::dot(chart.face_rot[to], m)
    };
    let mut changed = true;
    while changed {
        changed = false;
        for f in 0..nf {
            if present[f] || !eligible[f] {
                continue;
            }
            let mut h = mesh.face_halfedge(f);
            for _ in 0..3 {
                if let Some(g) = mesh.face_of(mesh.twin(h)) {
                    if present[g] {
                        offset[f] = glue(g, f, h, &offset);
                        present[f] = true;
                        changed = true;
                        break;
                    }
                }
                h = mesh.next(h);
            }
        }
    }
    // Faces the rim chains pass through still need offsets for station
    // evaluation; glue each across an edge lying fully on this side.
    let mut grew = true;
    while grew {
        grew = false;
        for chain in structure.chains.iter().filter(|c| c.sides.contains(&j)) {
            for &seg in &chain.segments {
                for f in segment_faces(mesh, structure, seg) {
                    if present[f] {
                        continue;
                    }
                    let mut h = mesh.face_halfedge(f);
                    for _ in 0..3 {
                        let clean = sigma[mesh.origin(h)] >= 0.0 && sigma[mesh.dest(h)] >= 0.0;
                        if clean {
                            if let Some(g) = mesh.face_of(mesh.twin(h)) {
                                if present[g] {
                                    offset[f] = glue(g, f, h, &offset);
                                    present[f] = true;
                                    grew = true;
                                    break;
                                }
                            }
                        }
                        h = mesh.next(h);
                    }
                }
            }
        }
    }
    // The continued offsets must agree across every interior edge of the
    // patch, up to whole periods across the branch cut.
    let mut worst = 0.0f64;
    for h in 0..mesh.n_halfedges() {
        let (Some(f), Some(g)) = (mesh.face_of(h), mesh.face_of(mesh.twin(h))) else {
            continue;
        };
        if f >= g || !present[f] || !present[g] {
            continue;
        }
        let m = edge_midpoint(mesh, h);
        let uf = offset[f] + math::dot(chart.face_rot[f], m);
        let ug = offset[g] + math::dot(chart.face_rot[g], m);
        worst = worst.max(math::abs(chart::wrap_half(uf - ug, chart.circumference)));
    }
    if worst > GLUE_REL_TOL * chart.circumference {
        return Err(QuadError::TopologyBroken {
            detail: "chart continuation over the critical band is torn",
        });
    }
    Ok(Patch { offset, present })
}

/// Horizontal position of a critical node in cylinder `j`'s continued
/// chart (unreduced).
fn node_u(
    patch: &Patch,
    chart: &CylinderChart,
    mesh: &TriMesh,
    structure: &FoliationStructure,
    node: usize,
    j: usize,
) -> Result<f64, QuadError> {
    for f in node_faces(mesh, structure, node) {
        if let Some(u) = patch.eval(chart, f, structure.nodes[node].position) {
            return Ok(u);
        }
    }
    Err(QuadError::QuantizationInfeasible {
        cylinder: j,
        detail: "a critical node is unreachable from the cylinder's chart",
    })
}

/// Horizontal position of a point on a critical segment, in cylinder `j`'s
/// continued chart (unreduced).
fn segment_point_u(
    patch: &Patch,
    chart: &CylinderChart,
    mesh: &TriMesh,
    structure: &FoliationStructure,
    seg: usize,
    p: [f64; 3],
    j: usize,
) -> Result<f64, QuadError> {
    for f in segment_faces(mesh, structure, seg) {
        if let Some(u) = patch.eval(chart, f, p) {
            return Ok(u);
        }
    }
    Err(QuadError::QuantizationInfeasible {
        cylinder: j,
        detail: "a critical segment is unreachable from the cylinder's chart",
    })
}

// ---------------------------------------------------------------------------
// Chain frames, pieces and subdivision counts.

struct ChainFrame<'a> {
    chain: &'a CriticalChain,
    /// Unreduced node positions in the chart of each flank.
    node_u: [Vec<f64>; 2],
    /// Chain-node slots that must become stations.
    breaks: Vec<usize>,
}

/// Forced station slots of a chain: endpoints, and deck-fixed nodes that
/// cross the seam transversally (a node inside a run of fixed nodes lies
/// along the seam and forces nothing).
fn chain_breaks(chain: &CriticalChain, fixed: &[bool]) -> Vec<usize> {
    let n = chain.nodes.len();
    let mut breaks = Vec::new();
    if chain.closed {
        for k in 0..n {
            let prev = if k == 0 { n - 1 } else { k - 1 };
            let next = (k + 1) % n;
            if fixed[k] && !(fixed[prev] && fixed[next]) {
                breaks.push(k);
            }
        }
        if breaks.is_empty() {
            breaks.push(0);
        }
    } else {
        breaks.push(0);
        for k in 1..n - 1 {
            if fixed[k] && !(fixed[k - 1] && fixed[k + 1]) {
                breaks.push(k);
            }
        }
        breaks.push(n - 1);
    }
    breaks
}

/// Slot ranges of each piece between consecutive breaks, in chain order.
fn chain_pieces(chain: &CriticalChain, breaks: &[usize]) -> Vec<(usize, usize)> {
    if chain.closed {
        let m = breaks.len();
        (0..m).map(|i| (breaks[i], breaks[(i + 1) % m])).collect()
    } else {
        breaks.windows(2).map(|w| (w[0], w[1])).collect()
    }
}

/// Slots walked by a piece, inclusive of both ends; a full cycle when a
/// closed chain has a single break.
fn piece_slots(chain: &CriticalChain, piece: (usize, usize)) -> Vec<usize> {
    let n = chain.nodes.len();
    let mut ks = vec![piece.0];
    let mut k = piece.0;
    loop {
        k = (k + 1) % n;
        ks.push(k);
        if k == piece.1 {
            break;
        }
    }
    ks
}

/// Horizontal extent of a piece in the chart of flank `side`.
fn piece_u_len(frame: &ChainFrame, side: usize, piece: (usize, usize), period: f64) -> f64 {
    let ks = piece_slots(frame.chain, piece);
    let mut total = 0.0;
    for w in ks.windows(2) {
        total += chart::wrap_half(frame.node_u[side][w[1]] - frame.node_u[side][w[0]], period);
    }
    math::abs(total)
}

/// Length of a piece along its node polyline.
fn piece_geo_len(
    structure: &FoliationStructure,
    chain: &CriticalChain,
    piece: (usize, usize),
) -> f64 {
    let ks = piece_slots(chain, piece);
    ks.windows(2)
        .map(|w| {
            math::dist(
                structure.nodes[chain.nodes[w[0]]].position,
                structure.nodes[chain.nodes[w[1]]].position,
            )
        })
        .sum()
}

/// Piece of the partner chain matched to `piece` of chain `c` under the
/// deck transformation.
fn mirror_piece(
    structure: &FoliationStructure,
    frames: &[ChainFrame],
    deck: &[Option<usize>],
    c: usize,
    partner: usize,
    piece: (usize, usize),
) -> Result<(usize, usize), QuadError> {
    let chain = frames[c].chain;
    let pchain = frames[partner].chain;
    let err = QuadError::WeldMismatch { chain: partner };
    let img_a = deck[chain.nodes[piece.0]].ok_or(err)?;
    let img_b = deck[chain.nodes[piece.1]].ok_or(err)?;
    let candidates: Vec<(usize, usize)> = chain_pieces(pchain, &frames[partner].breaks)
        .into_iter()
        .filter(|&q| {
            let (qa, qb) = (pchain.nodes[q.0], pchain.nodes[q.1]);
            (qa == img_a && qb == img_b) || (qa == img_b && qb == img_a)
        })
        .collect();
    match candidates.len() {
        0 => Err(err),
        1 => Ok(candidates[0]),
        _ => {
            // Same endpoints on both sides of a closed chain: take the
            // candidate of matching length (the deck map is an isometry).
            let want = piece_geo_len(structure, chain, piece);
            candidates
                .iter()
                .min_by(|&&x, &&y| {
                    let dx = math::abs(piece_geo_len(structure, pchain, x) - want);
                    let dy = math::abs(piece_geo_len(structure, pchain, y) - want);
                    dx.partial_cmp(&dy).unwrap_or(core::cmp::Ordering::Equal)
                })
                .copied()
                .ok_or(err)
        }
    }
}

// ---------------------------------------------------------------------------
// Quantization.

/// One forced boundary column: a corner vertex of a pinned loop.
#[derive(Debug, Clone, Copy)]
struct Corner {
    cylinder: usize,
    vertex: usize,
    /// Horizontal position, reduced into `[0, L)`.
    u: f64,
    /// Seam endpoints anchor to a deck-fixed rim station; other corners
    /// inject a fresh station at `u`.
    anchored: bool,
}

/// Builds the grid resolution: rows per cylinder and shared column
/// stations along every critical chain, aiming for quad edges of world
/// length `target_h`.
pub fn quantize(
    cover: &CoveredMesh,
    structure: &FoliationStructure,
    charts: &[CylinderChart],
    labels: &BoundaryLabels,
    target_h: f64,
) -> Result<QuantizationPlan, QuadError> {
    let mesh = &cover.mesh;
    if !(target_h > 0.0) || !target_h.is_finite() {
        return Err(QuadError::QuantizationInfeasible {
            cylinder: 0,
            detail: "target edge length must be positive and finite",
        });
    }
    let nc = charts.len();
    // World-to-chart scale of each cylinder, taken from its pinned loop.
    let scale: Vec<f64> = (0..nc)
        .map(|j| charts[j].circumference / mesh.boundary_loop_length(j))
        .collect();

    let mut patches = Vec::with_capacity(nc);
    for j in 0..nc {
        let sigma = chart::sigma_scalar(&structure.points, j);
        patches.push(build_patch(cover, structure, &charts[j], &sigma, j)?);
    }

    let deck = deck_nodes(cover, structure);
    let fixed: Vec<bool> = deck
        .iter()
        .enumerate()
        .map(|(n, img)| *img == Some(n))
        .collect();

    // Node positions in both flank charts, and forced break slots.
    let mut frames: Vec<ChainFrame> = Vec::with_capacity(structure.chains.len());
    for chain in &structure.chains {
        let [a, b] = chain.sides;
        if a == b {
            return Err(QuadError::QuantizationInfeasible {
                cylinder: a,
                detail: "a critical chain bounds the same cylinder on both sides",
            });
        }
        let mut node_u_flanks: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
        for (s, &side) in [a, b].iter().enumerate() {
            for &n in &chain.nodes {
                node_u_flanks[s].push(node_u(
                    &patches[side],
                    &charts[side],
                    mesh,
                    structure,
                    n,
                    side,
                )?);
            }
        }
        let node_fixed: Vec<bool> = chain.nodes.iter().map(|&n| fixed[n]).collect();
        let breaks = chain_breaks(chain, &node_fixed);
        frames.push(ChainFrame {
            chain,
            node_u: node_u_flanks,
            breaks,
        });
    }
    // A free closed chain broke at slot 0 arbitrarily; its deck partner
    // (or its own far side) must break at the mirrored slot instead so the
    // pieces of the orbit correspond.
    for c in 0..frames.len() {
        let partner = structure.deck_chain[c];
        let chain = frames[c].chain;
        let free = chain.closed && frames[c].breaks == [0];
        if !free {
            continue;
        }
        let img = deck[chain.nodes[0]].ok_or(QuadError::WeldMismatch { chain: c })?;
        if partner == c {
            if img != chain.nodes[0] {
                // The chain maps to itself without fixing slot 0: break at
                // the image as well, so the break set is deck-invariant.
                let slot = chain
                    .nodes
                    .iter()
                    .position(|&n| n == img)
                    .ok_or(QuadError::WeldMismatch { chain: c })?;
                frames[c].breaks = if slot == 0 { vec![0] } else { vec![0, slot] };
            }
        } else if partner > c {
            let pchain = frames[partner].chain;
            let slot = pchain
                .nodes
                .iter()
                .position(|&n| n == img)
                .ok_or(QuadError::WeldMismatch { chain: partner })?;
            frames[partner].breaks = vec![slot];
        }
    }

    // Subdivision count per piece, averaged over flanks and deck orbits so
    // mirrored pieces quantize identically.
    let mut piece_counts: Vec<Option<Vec<usize>>> = vec![None; frames.len()];
    for c in 0..frames.len() {
        if piece_counts[c].is_some() {
            continue;
        }
        let partner = structure.deck_chain[c];
        let pieces = chain_pieces(frames[c].chain, &frames[c].breaks);
        let single_closed = frames[c].chain.closed && pieces.len() == 1;
        let mut counts = Vec::with_capacity(pieces.len());
        for &piece in &pieces {
            let mut samples = Vec::new();
            for (s, &side) in frames[c].chain.sides.iter().enumerate() {
                let lu = piece_u_len(&frames[c], s, piece, charts[side].circumference);
                samples.push(lu / (scale[side] * target_h));
            }
            if partner != c {
                let img = mirror_piece(structure, &frames, &deck, c, partner, piece)?;
                for (s, &side) in frames[partner].chain.sides.iter().enumerate() {
                    let lu = piece_u_len(&frames[partner], s, img, charts[side].circumference);
                    samples.push(lu / (scale[side] * target_h));
                }
            }
            let mean = samples.iter().sum::<f64>() / samples.len() as f64;
            let mut count = (math::round(mean) as isize).max(1) as usize;
            if single_closed {
                // A lone cyclic piece needs two stations to cut the rim
                // into genuine cells.
                count = count.max(2);
            }
            counts.push(count);
        }
        if partner != c {
            let img_pieces = chain_pieces(frames[partner].chain, &frames[partner].breaks);
            let mut img_counts = vec![0usize; img_pieces.len()];
            for (pi, &piece) in pieces.iter().enumerate() {
                let img = mirror_piece(structure, &frames, &deck, c, partner, piece)?;
                let slot = img_pieces
                    .iter()
                    .position(|&q| q == img)
                    .ok_or(QuadError::WeldMismatch { chain: partner })?;
                img_counts[slot] = counts[pi];
            }
            if img_counts.contains(&0) {
                return Err(QuadError::WeldMismatch { chain: partner });
            }
            piece_counts[partner] = Some(img_counts);
        }
        piece_counts[c] = Some(counts);
    }

    // Materialize the station layout of every chain.
    let mut chains: Vec<ChainLayout> = Vec::with_capacity(frames.len());
    for c in 0..frames.len() {
        let counts = piece_counts[c].as_ref().expect("counts assigned");
        chains.push(materialize_chain(
            mesh, structure, charts, &patches, &frames[c], counts,
        )?);
    }

    // Horizontal row counts, symmetrized over deck orbits of cylinders.
    let rows: Vec<usize> = (0..nc)
        .map(|j| {
            let jj = cover.deck_loop[j];
            let mine = charts[j].height / (scale[j] * target_h);
            let theirs = charts[jj].height / (scale[jj] * target_h);
            let mean = 0.5 * (mine + theirs);
            (math::round(mean) as isize).max(1) as usize
        })
        .collect();

    // Boundary corners: anchored ones bind to deck-fixed stations during
    // assembly; free ones inject fresh stations now.
    let corners = collect_corners(cover, labels, charts, &patches)?;
    for ci in 0..corners.len() {
        if !corners[ci].anchored {
            inject_corner(
                mesh,
                structure,
                charts,
                &patches,
                &frames,
                &mut chains,
                ci,
                &corners[ci],
            )?;
        }
    }

    // Assemble the cyclic column set of every cylinder.
    let mut columns = Vec::with_capacity(nc);
    for j in 0..nc {
        columns.push(assemble_columns(
            cover,
            structure,
            &charts[j],
            &patches[j],
            &chains,
            &corners,
            &fixed,
            j,
        )?);
    }

    Ok(QuantizationPlan {
        target_h,
        rows,
        columns,
        chains,
        patches,
    })
}

/// Builds the station list of one chain: break nodes plus equally spaced
/// fills along each piece.
fn materialize_chain(
    mesh: &TriMesh,
    structure: &FoliationStructure,
    charts: &[CylinderChart],
    patches: &[Patch],
    frame: &ChainFrame,
    counts: &[usize],
) -> Result<ChainLayout, QuadError> {
    let chain = frame.chain;
    let pieces = chain_pieces(chain, &frame.breaks);
    let mut layout = ChainLayout {
        points: Vec::new(),
        on_vertex: Vec::new(),
        node_of: Vec::new(),
        flank_u: [Vec::new(), Vec::new()],
        pin_corner: Vec::new(),
        closed: chain.closed,
    };
    let push_node = |layout: &mut ChainLayout, k: usize| {
        let n = chain.nodes[k];
        layout.points.push(structure.nodes[n].position);
        layout.on_vertex.push(match structure.nodes[n].kind {
            NodeKind::CenterVertex { vertex } => Some(vertex),
            _ => None,
        });
        layout.node_of.push(Some(n));
        layout.flank_u[0].push(frame.node_u[0][k]);
        layout.flank_u[1].push(frame.node_u[1][k]);
        layout.pin_corner.push(None);
    };
    for (pi, &piece) in pieces.iter().enumerate() {
        push_node(&mut layout, piece.0);
        push_piece_fills(
            mesh,
            structure,
            charts,
            patches,
            frame,
            piece,
            counts[pi],
            &mut layout,
        )?;
        if !chain.closed && pi + 1 == pieces.len() {
            push_node(&mut layout, piece.1);
        }
    }
    Ok(layout)
}

/// Interior stations of one piece at equal spacing along its polyline.
#[allow(clippy::too_many_arguments)]
fn push_piece_fills(
    mesh: &TriMesh,
    structure: &FoliationStructure,
    charts: &[CylinderChart],
    patches: &[Patch],
    frame: &ChainFrame,
    piece: (usize, usize),
    count: usize,
    layout: &mut ChainLayout,
) -> Result<(), QuadError> {
    let chain = frame.chain;
    let ks = piece_slots(chain, piece);
    // Cumulative polyline length over the piece.
    let mut cum = vec![0.0f64];
    for w in ks.windows(2) {
        let d = math::dist(
            structure.nodes[chain.nodes[w[0]]].position,
            structure.nodes[chain.nodes[w[1]]].position,
        );
        cum.push(cum.last().unwrap() + d);
    }
    let total = *cum.last().unwrap();
    for step in 1..count {
        let target = total * step as f64 / count as f64;
        let mut at = 0;
        while at + 2 < cum.len() && cum[at + 1] < target {
            at += 1;
        }
        let span = cum[at + 1] - cum[at];
        let t = if span > 0.0 {
            (target - cum[at]) / span
        } else {
            0.0
        };
        let a = structure.nodes[chain.nodes[ks[at]]].position;
        let b = structure.nodes[chain.nodes[ks[at + 1]]].position;
        let p = math::lerp(a, b, t);
        // The polyline edge leaving slot k runs inside critical segment k.
        let seg = chain.segments[ks[at] % chain.segments.len()];
        let mut us = [0.0f64; 2];
        for (s, &side) in chain.sides.iter().enumerate() {
            us[s] = segment_point_u(&patches[side], &charts[side], mesh, structure, seg, p, side)?;
        }
        layout.points.push(p);
        layout.on_vertex.push(None);
        layout.node_of.push(None);
        layout.flank_u[0].push(us[0]);
        layout.flank_u[1].push(us[1]);
        layout.pin_corner.push(None);
    }
    Ok(())
}

/// Gathers the boundary corners of every pinned loop with their chart
/// positions.
fn collect_corners(
    cover: &CoveredMesh,
    labels: &BoundaryLabels,
    charts: &[CylinderChart],
    patches: &[Patch],
) -> Result<Vec<Corner>, QuadError> {
    let mesh = &cover.mesh;
    let mut corners = Vec::new();
    for j in 0..charts.len() {
        for v in mesh.boundary_loop_vertices(j) {
            let class = labels.class_of(cover.vertex_origin[v]).unwrap_or(0);
            if class == 0 {
                continue;
            }
            let mut u = None;
            for f in mesh.vertex_faces(v) {
                if let Some(val) = patches[j].eval(&charts[j], f, mesh.position(v)) {
                    u = Some(val);
                    break;
                }
            }
            let Some(u) = u else {
                return Err(QuadError::QuantizationInfeasible {
                    cylinder: j,
                    detail: "a boundary corner has no chart value",
                });
            };
            corners.push(Corner {
                cylinder: j,
                vertex: v,
                u: chart::reduce(u, charts[j].circumference),
                anchored: cover.is_seam_vertex(v),
            });
        }
    }
    Ok(corners)
}

/// Walk fraction of `x` in the arc from `a` by the signed (wrapped) step
/// `d`, comparing positions modulo the period.
fn arc_fraction(a: f64, x: f64, d: f64, period: f64) -> Option<f64> {
    if d == 0.0 {
        return None;
    }
    let step = chart::wrap_half(x - a, period);
    let t = step / d;
    let tol = 1e-9;
    if (-tol..1.0 + tol).contains(&t) && math::abs(step) <= math::abs(d) * (1.0 + tol) {
        Some(t.clamp(0.0, 1.0))
    } else {
        None
    }
}

fn layout_side(structure: &FoliationStructure, chain: usize, j: usize) -> Option<usize> {
    structure.chains[chain].sides.iter().position(|&s| s == j)
}

/// Inserts a station for a non-seam corner at its own horizontal position,
/// or binds it to an existing station already close enough.
#[allow(clippy::too_many_arguments)]
fn inject_corner(
    mesh: &TriMesh,
    structure: &FoliationStructure,
    charts: &[CylinderChart],
    patches: &[Patch],
    frames: &[ChainFrame],
    chains: &mut [ChainLayout],
    ci: usize,
    corner: &Corner,
) -> Result<(), QuadError> {
    let j = corner.cylinder;
    let period = charts[j].circumference;
    // Prefer binding to a station already at the corner's position.
    let mut best: Option<(usize, usize, f64)> = None;
    for (c, layout) in chains.iter().enumerate() {
        let Some(s) = layout_side(structure, c, j) else {
            continue;
        };
        for idx in 0..layout.len() {
            let gap = math::abs(chart::wrap_half(corner.u - layout.flank_u[s][idx], period));
            if best.map(|(_, _, g)| gap < g).unwrap_or(true) {
                best = Some((c, idx, gap));
            }
        }
    }
    if let Some((c, idx, gap)) = best {
        if gap <= MERGE_REL_TOL * period {
            if chains[c].pin_corner[idx].is_some() {
                return Err(QuadError::QuantizationInfeasible {
                    cylinder: j,
                    detail: "two corners require the same column",
                });
            }
            chains[c].pin_corner[idx] = Some(ci);
            return Ok(());
        }
    }
    // Otherwise find the rim chain arc containing the corner's position
    // and split it there.
    for (c, frame) in frames.iter().enumerate() {
        let Some(s) = layout_side(structure, c, j) else {
            continue;
        };
        let chain = frame.chain;
        let n = chain.nodes.len();
        let spans = if chain.closed { n } else { n - 1 };
        for k in 0..spans {
            let kn = (k + 1) % n;
            let d = chart::wrap_half(frame.node_u[s][kn] - frame.node_u[s][k], period);
            let Some(t) = arc_fraction(frame.node_u[s][k], corner.u, d, period) else {
                continue;
            };
            let a = structure.nodes[chain.nodes[k]].position;
            let b = structure.nodes[chain.nodes[kn]].position;
            let p = math::lerp(a, b, t);
            let seg = chain.segments[k % chain.segments.len()];
            let mut us = [0.0f64; 2];
            for (side_idx, &side) in chain.sides.iter().enumerate() {
                us[side_idx] =
                    segment_point_u(&patches[side], &charts[side], mesh, structure, seg, p, side)?;
            }
            let layout = &mut chains[c];
            let at = station_insertion_index(layout, s, corner.u, period).ok_or(
                QuadError::QuantizationInfeasible {
                    cylinder: j,
                    detail: "corner position falls outside the rim stations",
                },
            )?;
            layout.points.insert(at, p);
            layout.on_vertex.insert(at, None);
            layout.node_of.insert(at, None);
            layout.flank_u[0].insert(at, us[0]);
            layout.flank_u[1].insert(at, us[1]);
            layout.pin_corner.insert(at, Some(ci));
            return Ok(());
        }
    }
    Err(QuadError::QuantizationInfeasible {
        cylinder: j,
        detail: "no rim chain arc contains the corner's position",
    })
}

/// Index at which a station with horizontal position `u` (on flank `s`)
/// slots into the existing station order of the chain.
fn station_insertion_index(layout: &ChainLayout, s: usize, u: f64, period: f64) -> Option<usize> {
    let n = layout.len();
    let pairs = if layout.closed { n } else { n - 1 };
    for i in 0..pairs {
        let inx = (i + 1) % n;
        let d = chart::wrap_half(layout.flank_u[s][inx] - layout.flank_u[s][i], period);
        if arc_fraction(layout.flank_u[s][i], u, d, period).is_some() {
            return Some(i + 1);
        }
    }
    None
}

/// Entry of the per-cylinder station sweep.
#[derive(Debug, Clone, Copy)]
struct ColumnEntry {
    u: f64,
    key: StationId,
    rim_point: [f64; 3],
    rim_vertex: Option<usize>,
    pin_corner: Option<usize>,
}

/// Collects, orders and pins the columns of cylinder `j`.
#[allow(clippy::too_many_arguments)]
fn assemble_columns(
    cover: &CoveredMesh,
    structure: &FoliationStructure,
    chart: &CylinderChart,
    patch: &Patch,
    chains: &[ChainLayout],
    corners: &[Corner],
    fixed: &[bool],
    j: usize,
) -> Result<CylinderColumns, QuadError> {
    let mesh = &cover.mesh;
    let period = chart.circumference;
    let mut by_key: BTreeMap<StationId, ColumnEntry> = BTreeMap::new();
    for (c, layout) in chains.iter().enumerate() {
        let Some(s) = layout_side(structure, c, j) else {
            continue;
        };
        for idx in 0..layout.len() {
            let entry = ColumnEntry {
                u: chart::reduce(layout.flank_u[s][idx], period),
                key: layout.key(c, idx),
                rim_point: layout.points[idx],
                rim_vertex: layout.on_vertex[idx],
                pin_corner: layout.pin_corner[idx],
            };
            match by_key.get_mut(&entry.key) {
                None => {
                    by_key.insert(entry.key, entry);
                }
                Some(prev) => {
                    // The same node reached through two chains must sit at
                    // one horizontal position.
                    if math::abs(chart::wrap_half(prev.u - entry.u, period))
                        > SHARED_REL_TOL * period
                    {
                        return Err(QuadError::TopologyBroken {
                            detail: "a shared rim station has two horizontal positions",
                        });
                    }
                    if prev.pin_corner.is_none() {
                        prev.pin_corner = entry.pin_corner;
                    } else if entry.pin_corner.is_some() && prev.pin_corner != entry.pin_corner {
                        return Err(QuadError::QuantizationInfeasible {
                            cylinder: j,
                            detail: "two corners require the same column",
                        });
                    }
                }
            }
        }
    }
    let mut entries: Vec<ColumnEntry> = by_key.into_values().collect();
    entries.sort_by(|a, b| a.u.partial_cmp(&b.u).unwrap_or(core::cmp::Ordering::Equal));
    let cx = entries.len();
    if cx < 2 {
        return Err(QuadError::QuantizationInfeasible {
            cylinder: j,
            detail: "fewer than two columns around the cylinder",
        });
    }
    for k in 0..cx {
        let kn = (k + 1) % cx;
        let gap = if kn == 0 {
            period - entries[k].u + entries[0].u
        } else {
            entries[kn].u - entries[k].u
        };
        if gap <= STATION_GAP_REL * period {
            return Err(QuadError::QuantizationInfeasible {
                cylinder: j,
                detail: "two columns coincide",
            });
        }
    }

    // Bind anchored corners to deck-fixed stations.
    let mut pin_binding: Vec<Option<usize>> = vec![None; cx];
    let mut seam_anchor = vec![false; cx];
    for (ci, corner) in corners.iter().enumerate() {
        if corner.cylinder != j || !corner.anchored {
            continue;
        }
        let mut best: Option<(usize, f64)> = None;
        for (k, e) in entries.iter().enumerate() {
            let StationId::Node(n) = e.key else { continue };
            if !fixed[n] {
                continue;
            }
            let gap = math::abs(chart::wrap_half(corner.u - e.u, period));
            if best.map(|(_, g)| gap < g).unwrap_or(true) {
                best = Some((k, gap));
            }
        }
        let Some((k, gap)) = best else {
            return Err(QuadError::SeamNotTrajectoryAligned {
                cylinder: j,
                gap: period,
            });
        };
        if gap > ALIGN_REL_TOL * period {
            return Err(QuadError::SeamNotTrajectoryAligned { cylinder: j, gap });
        }
        if pin_binding[k].is_some() || entries[k].pin_corner.is_some() {
            return Err(QuadError::QuantizationInfeasible {
                cylinder: j,
                detail: "two corners require the same column",
            });
        }
        pin_binding[k] = Some(ci);
        seam_anchor[k] = true;
    }
    for (k, e) in entries.iter().enumerate() {
        if let Some(ci) = e.pin_corner {
            // Injected corners were merged into the station list already.
            pin_binding[k] = Some(ci);
        }
    }

    // Interpolate the pinned ends of the remaining columns along the
    // pinned boundary loop.
    let walk = PinnedWalk::build(mesh, chart, patch, j)?;
    let mut u_cols = Vec::with_capacity(cx);
    let mut station = Vec::with_capacity(cx);
    let mut rim_point = Vec::with_capacity(cx);
    let mut rim_vertex = Vec::with_capacity(cx);
    let mut pin_point = Vec::with_capacity(cx);
    let mut pin_vertex = Vec::with_capacity(cx);
    for (k, e) in entries.iter().enumerate() {
        u_cols.push(e.u);
        station.push(e.key);
        rim_point.push(e.rim_point);
        rim_vertex.push(e.rim_vertex);
        match pin_binding[k] {
            Some(ci) => {
                let v = corners[ci].vertex;
                pin_point.push(mesh.position(v));
                pin_vertex.push(Some(v));
            }
            None => {
                let (p, v) = walk.locate(e.u, j)?;
                pin_point.push(p);
                pin_vertex.push(v);
            }
        }
    }
    Ok(CylinderColumns {
        u: u_cols,
        station,
        rim_point,
        rim_vertex,
        pin_point,
        pin_vertex,
        seam_anchor,
    })
}

/// Pinned boundary loop with unwrapped chart positions, for interpolating
/// column endpoints.
struct PinnedWalk {
    verts: Vec<usize>,
    points: Vec<[f64; 3]>,
    /// Unwrapped chart position of each loop vertex.
    u: Vec<f64>,
    period: f64,
}

impl PinnedWalk {
    fn build(
        mesh: &TriMesh,
        chart: &CylinderChart,
        patch: &Patch,
        j: usize,
    ) -> Result<Self, QuadError> {
        let verts = mesh.boundary_loop_vertices(j);
        let vertex_u = |v: usize| -> Option<f64> {
            mesh.vertex_faces(v)
                .into_iter()
                .find_map(|f| patch.eval(chart, f, mesh.position(v)))
        };
        let mut u = Vec::with_capacity(verts.len());
        for (i, &v) in verts.iter().enumerate() {
            let raw = vertex_u(v).ok_or(QuadError::QuantizationInfeasible {
                cylinder: j,
                detail: "a pinned boundary vertex has no chart value",
            })?;
            if i == 0 {
                u.push(chart::reduce(raw, chart.circumference));
            } else {
                let prev = u[i - 1];
                u.push(prev + chart::wrap_half(raw - prev, chart.circumference));
            }
        }
        let points = verts.iter().map(|&v| mesh.position(v)).collect();
        Ok(PinnedWalk {
            verts,
            points,
            u,
            period: chart.circumference,
        })
    }

    /// Point of the pinned loop at horizontal position `u_q`, with the
    /// loop vertex when the hit is exact.
    fn locate(&self, u_q: f64, j: usize) -> Result<([f64; 3], Option<usize>), QuadError> {
        let n = self.verts.len();
        for i in 0..n {
            let inx = (i + 1) % n;
            let d = if inx == 0 {
                // The closing edge spans the remainder of the period.
                let total = self.u[n - 1] - self.u[0];
                let dir = if total >= 0.0 { 1.0 } else { -1.0 };
                dir * self.period - total
            } else {
                self.u[inx] - self.u[i]
            };
            let Some(t) = arc_fraction(self.u[i], u_q, d, self.period) else {
                continue;
            };
            let p = math::lerp(self.points[i], self.points[inx], t);
            let (p, v) = if t < 1e-7 {
                (self.points[i], Some(self.verts[i]))
            } else if t > 1.0 - 1e-7 {
                (self.points[inx], Some(self.verts[inx]))
            } else {
                (p, None)
            };
            return Ok((p, v));
        }
        Err(QuadError::QuantizationInfeasible {
            cylinder: j,
            detail: "a column's pinned end is not on the boundary loop",
        })
    }
}

// ---------------------------------------------------------------------------
// Tracing.

/// One chart triangle prepared for point location.
struct LocFace {
    face: usize,
    u: [f64; 3],
    v: [f64; 3],
    pos: [[f64; 3]; 3],
}

struct Locator {
    faces: Vec<LocFace>,
    period: f64,
    /// Orientation sign of the flat charts of this cylinder.
    handed: f64,
}

impl Locator {
    fn build(
        cover: &CoveredMesh,
        structure: &FoliationStructure,
        chart: &CylinderChart,
        patch: &Patch,
    ) -> Result<Self, QuadError> {
        let mesh = &cover.mesh;
        let j = chart.cylinder;
        let sigma = chart::sigma_scalar(&structure.points, j);
        let mut faces = Vec::new();
        let mut handed = 0.0f64;
        let area_scale = chart.circumference * chart.circumference;
        for f in 0..mesh.n_faces() {
            if !patch.present[f] {
                continue;
            }
            let vs = mesh.face_vertices(f);
            let mut fu = [0.0f64; 3];
            let mut fv = [0.0f64; 3];
            let mut pos = [[0.0f64; 3]; 3];
            for (i, &v) in vs.iter().enumerate() {
                pos[i] = mesh.position(v);
                fu[i] = patch.offset[f] + math::dot(chart.face_rot[f], pos[i]);
                fv[i] = sigma[v];
            }
            let det = (fu[1] - fu[0]) * (fv[2] - fv[0]) - (fu[2] - fu[0]) * (fv[1] - fv[0]);
            if math::abs(det) > 1e-13 * area_scale {
                let s = if det > 0.0 { 1.0 } else { -1.0 };
                if handed == 0.0 {
                    handed = s;
                } else if s != handed {
                    return Err(QuadError::TopologyBroken {
                        detail: "chart triangles with mixed orientation",
                    });
                }
            }
            faces.push(LocFace {
                face: f,
                u: fu,
                v: fv,
                pos,
            });
        }
        if handed == 0.0 {
            return Err(QuadError::TopologyBroken {
                detail: "cylinder chart is degenerate",
            });
        }
        Ok(Locator {
            faces,
            period: chart.circumference,
            handed,
        })
    }

    /// Finds the chart point `(u_q, v_q)`, returning the interpolated
    /// surface position and the hosting face.
    fn locate(&self, u_q: f64, v_q: f64) -> Option<([f64; 3], usize)> {
        let mut best: Option<(f64, [f64; 3], usize)> = None;
        for lf in &self.faces {
            // Shift the query onto this face's branch of the chart.
            let shift = self.period * math::round((lf.u[0] - u_q) / self.period);
            let uq = u_q + shift;
            let det = (lf.u[1] - lf.u[0]) * (lf.v[2] - lf.v[0])
                - (lf.u[2] - lf.u[0]) * (lf.v[1] - lf.v[0]);
            if det == 0.0 {
                continue;
            }
            let l1 =
                ((lf.v[2] - lf.v[0]) * (uq - lf.u[0]) + (lf.u[0] - lf.u[2]) * (v_q - lf.v[0])) / det;
            let l2 =
                ((lf.v[0] - lf.v[1]) * (uq - lf.u[0]) + (lf.u[1] - lf.u[0]) * (v_q - lf.v[0])) / det;
            let l0 = 1.0 - l1 - l2;
            let min = l0.min(l1).min(l2);
            if best.map(|(m, _, _)| min > m).unwrap_or(true) {
                let p = [
                    l0 * lf.pos[0][0] + l1 * lf.pos[1][0] + l2 * lf.pos[2][0],
                    l0 * lf.pos[0][1] + l1 * lf.pos[1][1] + l2 * lf.pos[2][1],
                    l0 * lf.pos[0][2] + l1 * lf.pos[1][2] + l2 * lf.pos[2][2],
                ];
                best = Some((min, p, lf.face));
            }
        }
        match best {
            Some((min, p, f)) if min >= -BARY_TOL => Some((p, f)),
            _ => None,
        }
    }
}

/// Traces the planned grid over every cylinder of the covered surface and
/// welds the pieces into one quad mesh.
pub fn trace_quads(
    cover: &CoveredMesh,
    structure: &FoliationStructure,
    charts: &[CylinderChart],
    plan: &QuantizationPlan,
) -> Result<QuadMesh, QuadError> {
    let nc = charts.len();
    let mut positions: Vec<[f64; 3]> = Vec::new();
    let mut provenance: Vec<Provenance> = Vec::new();
    let mut quads: Vec<[usize; 4]> = Vec::new();
    let mut quad_sheet: Vec<bool> = Vec::new();
    let mut registry: BTreeMap<StationId, usize> = BTreeMap::new();

    for j in 0..nc {
        let cols = &plan.columns[j];
        let cx = cols.u.len();
        let m = plan.rows[j];
        let d = charts[j].height;
        let locator = Locator::build(cover, structure, &charts[j], &plan.patches[j])?;

        // Vertex grid: row 0 is the rim (shared through the registry), row
        // m is the pinned boundary.
        let mut vid = vec![vec![0usize; m + 1]; cx];
        for k in 0..cx {
            let station = cols.station[k];
            let rim = *registry.entry(station).or_insert_with(|| {
                positions.push(cols.rim_point[k]);
                provenance.push(Provenance {
                    cylinder: j,
                    u: cols.u[k],
                    v: 0.0,
                    on_vertex: cols.rim_vertex[k],
                });
                positions.len() - 1
            });
            vid[k][0] = rim;
            for i in 1..m {
                let v_q = d * i as f64 / m as f64;
                let Some((p, _)) = locator.locate(cols.u[k], v_q) else {
                    return Err(QuadError::FoldOver {
                        cylinder: j,
                        column: k,
                        row: i,
                    });
                };
                positions.push(p);
                provenance.push(Provenance {
                    cylinder: j,
                    u: cols.u[k],
                    v: v_q,
                    on_vertex: None,
                });
                vid[k][i] = positions.len() - 1;
            }
            positions.push(cols.pin_point[k]);
            provenance.push(Provenance {
                cylinder: j,
                u: cols.u[k],
                v: d,
                on_vertex: cols.pin_vertex[k],
            });
            vid[k][m] = positions.len() - 1;
        }

        for k in 0..cx {
            let kn = (k + 1) % cx;
            // Sheet of the whole cell strip, read at the strip's centre.
            let du = chart::reduce(cols.u[kn] - cols.u[k], locator.period);
            let u_mid = chart::reduce(cols.u[k] + 0.5 * du, locator.period);
            for i in 0..m {
                let v_mid = d * (i as f64 + 0.5) / m as f64;
                let Some((_, f_mid)) = locator.locate(u_mid, v_mid) else {
                    return Err(QuadError::FoldOver {
                        cylinder: j,
                        column: k,
                        row: i,
                    });
                };
                let sheet = cover.face_sheet[f_mid];
                let (a, b, c, dd) = (vid[k][i], vid[kn][i], vid[kn][i + 1], vid[k][i + 1]);
                let quad = if locator.handed > 0.0 {
                    [a, b, c, dd]
                } else {
                    [a, dd, c, b]
                };
                quads.push(quad);
                quad_sheet.push(sheet);
            }
        }
    }

    let traced = QuadMesh {
        positions,
        quads,
        provenance,
        quad_sheet,
    };
    verify_quad_mesh(&traced, Some(cover.euler()))?;
    Ok(traced)
}

// ---------------------------------------------------------------------------
// Verification and restriction.

/// Checks that the quad mesh is a manifold, consistently oriented surface
/// satisfying the combinatorial curvature identity, and returns its
/// census.  When `expected_euler` is given, the Euler characteristic must
/// match it.
pub fn verify_quad_mesh(
    mesh: &QuadMesh,
    expected_euler: Option<i64>,
) -> Result<QuadCensus, QuadError> {
    let nv = mesh.positions.len();
    let nf = mesh.quads.len();
    // Directed edge census: every undirected edge carries one or two
    // directed uses, and two uses must oppose.
    let mut edges: BTreeMap<(usize, usize), (usize, i64)> = BTreeMap::new();
    for q in &mesh.quads {
        for c in 0..4 {
            let a = q[c];
            let b = q[(c + 1) % 4];
            if a == b {
                return Err(QuadError::TopologyBroken {
                    detail: "a quad repeats a vertex along an edge",
                });
            }
            let key = (a.min(b), a.max(b));
            let dir = if a < b { 1 } else { -1 };
            let e = edges.entry(key).or_insert((0, 0));
            e.0 += 1;
            e.1 += dir;
        }
    }
    for &(count, dirsum) in edges.values() {
        if count > 2 {
            return Err(QuadError::TopologyBroken {
                detail: "an edge is used by more than two quads",
            });
        }
        if count == 2 && dirsum != 0 {
            return Err(QuadError::TopologyBroken {
                detail: "two quads traverse a shared edge in the same direction",
            });
        }
    }
    let ne = edges.len() as i64;
    let euler = nv as i64 - ne + nf as i64;
    if let Some(expect) = expected_euler {
        if euler != expect {
            return Err(QuadError::TopologyBroken {
                detail: "Euler characteristic differs from the expected surface",
            });
        }
    }

    // Rotation fans: the wedges around each vertex must chain into a
    // single cycle (interior) or a single open strip (boundary).
    let mut wedges: Vec<Vec<(usize, usize)>> = vec![Vec::new(); nv];
    for q in &mesh.quads {
        for c in 0..4 {
            let v = q[c];
            let prev = q[(c + 3) % 4];
            let next = q[(c + 1) % 4];
            wedges[v].push((prev, next));
        }
    }
    let mut quad_count = vec![0usize; nv];
    let mut boundary = vec![false; nv];
    for v in 0..nv {
        let ws = &wedges[v];
        quad_count[v] = ws.len();
        if ws.is_empty() {
            return Err(QuadError::TopologyBroken {
                detail: "an isolated vertex remains in the grid",
            });
        }
        // succ maps the incoming neighbour of a wedge to its outgoing
        // neighbour; following it walks the fan around the vertex.
        let mut succ: BTreeMap<usize, usize> = BTreeMap::new();
        for &(a, b) in ws {
            if succ.insert(a, b).is_some() {
                return Err(QuadError::TopologyBroken {
                    detail: "two quads enter a vertex through the same edge",
                });
            }
        }
        let ins: Vec<usize> = ws.iter().map(|&(a, _)| a).collect();
        let outs: Vec<usize> = ws.iter().map(|&(_, b)| b).collect();
        // Open-strip starts: wedges whose incoming edge no other wedge
        // leaves through.
        let starts: Vec<usize> = ins.iter().copied().filter(|a| !outs.contains(a)).collect();
        boundary[v] = !starts.is_empty();
        if starts.len() > 1 {
            return Err(QuadError::TopologyBroken {
                detail: "the quads around a vertex split into several fans",
            });
        }
        // Walk the fan; it must visit every wedge exactly once.
        let start = if let Some(&s) = starts.first() { s } else { ins[0] };
        let mut seen = 0usize;
        let mut at = start;
        loop {
            let Some(&next) = succ.get(&at) else { break };
            seen += 1;
            at = next;
            if at == start || seen > ws.len() {
                break;
            }
        }
        if seen != ws.len() {
            return Err(QuadError::TopologyBroken {
                detail: "the quads around a vertex split into several fans",
            });
        }
    }

    // Combinatorial curvature: interior vertices contribute 4 minus their
    // valence, boundary vertices 2 minus their quad count; the total must
    // be four times the Euler characteristic.
    let mut total = 0i64;
    let mut interior_valences = BTreeMap::new();
    let mut boundary_quad_counts = BTreeMap::new();
    for v in 0..nv {
        if boundary[v] {
            total += 2 - quad_count[v] as i64;
            *boundary_quad_counts.entry(quad_count[v]).or_insert(0) += 1;
        } else {
            total += 4 - quad_count[v] as i64;
            *interior_valences.entry(quad_count[v]).or_insert(0) += 1;
        }
    }
    if total != 4 * euler {
        return Err(QuadError::TopologyBroken {
            detail: "combinatorial curvature does not sum to four times the Euler characteristic",
        });
    }

    Ok(QuadCensus {
        euler,
        interior_valences,
        boundary_quad_counts,
        quad_count,
        boundary,
    })
}

/// Restricts the traced grid to the original surface (the untagged sheet
/// of the cover), verifies it, and checks the corner guarantee: every
/// boundary corner of class `n` keeps exactly `2 - n` incident quads.
/// With `enforce_corners` off the corner counts are left unchecked.
pub fn finalize(
    cover: &CoveredMesh,
    labels: &BoundaryLabels,
    traced: &QuadMesh,
    enforce_corners: bool,
) -> Result<QuadMesh, QuadError> {
    let restricted = if cover.identity {
        traced.clone()
    } else {
        let total = traced.quads.len();
        let kept_quads: Vec<usize> = (0..total).filter(|&q| !traced.quad_sheet[q]).collect();
        if kept_quads.len() * 2 != total {
            return Err(QuadError::TopologyBroken {
                detail: "the two sheets carry different numbers of quads",
            });
        }
        let mut vmap = vec![usize::MAX; traced.positions.len()];
        let mut positions = Vec::new();
        let mut provenance = Vec::new();
        let mut quads = Vec::new();
        for &qi in &kept_quads {
            let mut q = [0usize; 4];
            for (c, &v) in traced.quads[qi].iter().enumerate() {
                if vmap[v] == usize::MAX {
                    vmap[v] = positions.len();
                    positions.push(traced.positions[v]);
                    provenance.push(traced.provenance[v]);
                }
                q[c] = vmap[v];
            }
            quads.push(q);
        }
        let quad_sheet = vec![false; quads.len()];
        QuadMesh {
            positions,
            quads,
            provenance,
            quad_sheet,
        }
    };

    let expected_euler = if cover.identity {
        cover.euler()
    } else {
        let doubled = cover.euler() + cover.gluing_arcs as i64;
        if doubled % 2 != 0 {
            return Err(QuadError::TopologyBroken {
                detail: "cover topology inconsistent with its gluing arcs",
            });
        }
        doubled / 2
    };
    let census = verify_quad_mesh(&restricted, Some(expected_euler))?;

    if enforce_corners {
        for &ic in &labels.corner_vertices() {
            let class = labels.class_of(ic).unwrap_or(0);
            if class == 0 {
                continue;
            }
            let expected = (2 - class as i64).max(0) as usize;
            let mut found = false;
            for (v, p) in restricted.provenance.iter().enumerate() {
                let Some(cv) = p.on_vertex else { continue };
                if cover.vertex_origin[cv] != ic {
                    continue;
                }
                found = true;
                let actual = census.quad_count[v];
                if actual != expected {
                    return Err(QuadError::CornerValenceViolation {
                        vertex: ic,
                        expected,
                        actual,
                    });
                }
            }
            if !found {
                return Err(QuadError::CornerValenceViolation {
                    vertex: ic,
                    expected,
                    actual: 0,
                });
            }
        }
    }

    Ok(restricted)
}

// ---------------------------------------------------------------------------
// Quality.

/// Measures angles, scaled Jacobians and the valence censuses of a quad
/// mesh.
pub fn quality_report(mesh: &QuadMesh) -> Result<QualityReport, QuadError> {
    let census = verify_quad_mesh(mesh, None)?;
    let mut min_angle = f64::INFINITY;
    let mut max_angle = f64::NEG_INFINITY;
    let mut dev_sum = 0.0f64;
    let mut dev_count = 0usize;
    let mut min_sj = f64::INFINITY;
    let mut sj_sum = 0.0f64;
    let right = core::f64::consts::FRAC_PI_2;
    for q in &mesh.quads {
        let mut quad_min_sj = f64::INFINITY;
        for c in 0..4 {
            let p = mesh.positions[q[c]];
            let prev = mesh.positions[q[(c + 3) % 4]];
            let next = mesh.positions[q[(c + 1) % 4]];
            let e1 = math::sub(next, p);
            let e2 = math::sub(prev, p);
            let n1 = math::norm(e1);
            let n2 = math::norm(e2);
            if n1 <= 0.0 || n2 <= 0.0 {
                return Err(QuadError::TopologyBroken {
                    detail: "a quad has a zero-length edge",
                });
            }
            let cosv = math::dot(e1, e2) / (n1 * n2);
            let angle = math::acos_clamped(cosv);
            min_angle = min_angle.min(angle);
            max_angle = max_angle.max(angle);
            dev_sum += math::abs(angle - right);
            dev_count += 1;
            let sj = math::norm(math::cross(e1, e2)) / (n1 * n2);
            quad_min_sj = quad_min_sj.min(sj);
        }
        min_sj = min_sj.min(quad_min_sj);
        sj_sum += quad_min_sj;
    }
    let irregular_interior = census
        .interior_valences
        .iter()
        .filter(|&(&val, _)| val != 4)
        .map(|(_, &count)| count)
        .sum();
    Ok(QualityReport {
        quad_count: mesh.quads.len(),
        vertex_count: mesh.positions.len(),
        min_angle,
        max_angle,
        mean_angle_deviation: if dev_count > 0 {
            dev_sum / dev_count as f64
        } else {
            0.0
        },
        min_scaled_jacobian: min_sj,
        mean_scaled_jacobian: if mesh.quads.is_empty() {
            0.0
        } else {
            sj_sum / mesh.quads.len() as f64
        },
        interior_valences: census.interior_valences,
        boundary_quad_counts: census.boundary_quad_counts,
        irregular_interior,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boundary::BoundaryLabels;
    use crate::chart::build_charts;
    use crate::cover::{build_cover, select_tagging, split_segments};
    use crate::fixtures::{generate, FixtureKind};
    use crate::foliation::{build_star_graph, solve, FoliationParams, WeightMode};
    use crate::mesh::TriMesh;
    use crate::structure::extract_structure;

    struct Built {
        cover: CoveredMesh,
        labels: BoundaryLabels,
        structure: FoliationStructure,
        charts: Vec<CylinderChart>,
    }

    fn build(mesh: TriMesh, tol: f64, identity: bool) -> Built {
        let labels = BoundaryLabels::classify(&mesh).expect("classify");
        let cover = if identity {
            CoveredMesh::identity(mesh)
        } else {
            let segments = split_segments(&mesh, &labels).expect("segments");
            let tagging = select_tagging(&mesh, &labels, &segments).expect("tagging");
            build_cover(&mesh, &segments, &tagging).expect("cover")
        };
        let graph = build_star_graph(&cover, WeightMode::Uniform).expect("graph");
        let params = FoliationParams {
            tol,
            max_iters: 200_000,
            ..FoliationParams::default()
        };
        let map = solve(&cover, &graph, &params).expect("solve");
        let structure = extract_structure(&cover, &map).expect("structure");
        let charts = build_charts(&cover, &graph, &map, &structure).expect("charts");
        Built {
            cover,
            labels,
            structure,
            charts,
        }
    }

    fn pipeline(built: &Built, h: f64, enforce: bool) -> (QuantizationPlan, QuadMesh, QuadCensus) {
        let plan = quantize(
            &built.cover,
            &built.structure,
            &built.charts,
            &built.labels,
            h,
        )
        .expect("quantize");
        let traced =
            trace_quads(&built.cover, &built.structure, &built.charts, &plan).expect("trace");
        let final_mesh = finalize(&built.cover, &built.labels, &traced, enforce).expect("finalize");
        let census = verify_quad_mesh(&final_mesh, None).expect("verify");
        (plan, final_mesh, census)
    }

    /// Quad counts of the output vertices that sit on a given input vertex.
    fn quad_counts_on_input_vertex(
        built: &Built,
        mesh: &QuadMesh,
        census: &QuadCensus,
        input_vertex: usize,
    ) -> Vec<usize> {
        mesh.provenance
            .iter()
            .enumerate()
            .filter_map(|(v, p)| {
                let cv = p.on_vertex?;
                (built.cover.vertex_origin[cv] == input_vertex).then(|| census.quad_count[v])
            })
            .collect()
    }

    #[test]
    fn uniform_square_grid_is_exact() {
        let built = build(generate(FixtureKind::SquareDisk, 9), 1e-10, false);
        let h = 0.25;
        let (plan, final_mesh, census) = pipeline(&built, h, true);
        assert_eq!(plan.rows, vec![2, 2]);
        assert_eq!(plan.column_count(0), 8);
        assert_eq!(plan.column_count(1), 8);
        assert_eq!(plan.cell_count(), 32);
        assert_eq!(final_mesh.quads.len(), 16);
        assert_eq!(final_mesh.positions.len(), 25);

        // Every vertex must land on the exact 5x5 lattice of the unit
        // square, and every quad must cover one lattice cell.
        let snap = |x: f64| math::round(x / h) as i64;
        let mut seen = alloc::collections::BTreeSet::new();
        for p in &final_mesh.positions {
            let (ix, iy) = (snap(p[0]), snap(p[1]));
            assert!(
                math::abs(p[0] - ix as f64 * h) < 1e-9,
                "x off-lattice: {:?}",
                p
            );
            assert!(
                math::abs(p[1] - iy as f64 * h) < 1e-9,
                "y off-lattice: {:?}",
                p
            );
            assert!(math::abs(p[2]) < 1e-9);
            assert!((0..=4).contains(&ix) && (0..=4).contains(&iy));
            assert!(seen.insert((ix, iy)), "duplicate lattice vertex");
        }
        assert_eq!(seen.len(), 25);
        for q in &final_mesh.quads {
            let xs: Vec<i64> = q.iter().map(|&v| snap(final_mesh.positions[v][0])).collect();
            let ys: Vec<i64> = q.iter().map(|&v| snap(final_mesh.positions[v][1])).collect();
            let (x0, x1) = (*xs.iter().min().unwrap(), *xs.iter().max().unwrap());
            let (y0, y1) = (*ys.iter().min().unwrap(), *ys.iter().max().unwrap());
            assert_eq!(x1 - x0, 1, "quad not one cell wide");
            assert_eq!(y1 - y0, 1, "quad not one cell tall");
            for c in 0..4 {
                assert!(xs[c] == x0 || xs[c] == x1);
                assert!(ys[c] == y0 || ys[c] == y1);
            }
        }
        assert_eq!(census.euler, 1);
        assert_eq!(census.interior_valences.get(&4), Some(&9));
        assert_eq!(census.interior_valences.len(), 1);
        assert_eq!(census.boundary_quad_counts.get(&1), Some(&4));
        assert_eq!(census.boundary_quad_counts.get(&2), Some(&12));
    }

    #[test]
    fn annulus_cover_grid_preserves_corners() {
        let built = build(generate(FixtureKind::SquareAnnulus, 24), 1e-8, false);
        let (_plan, final_mesh, census) = pipeline(&built, 0.4, true);
        assert_eq!(census.euler, 0);
        // All four outer corners keep exactly one quad.
        for &ic in &built.labels.corner_vertices() {
            let counts = quad_counts_on_input_vertex(&built, &final_mesh, &census, ic);
            assert_eq!(counts, vec![1], "corner {ic}");
        }
        // Interior vertices are regular or valence-6 branch points.
        for &val in census.interior_valences.keys() {
            assert!(val == 4 || val == 6, "unexpected interior valence {val}");
        }
    }

    #[test]
    fn two_hole_cover_grid_preserves_corners() {
        let built = build(generate(FixtureKind::TwoHolePlate, 24), 1e-8, false);
        let (_plan, final_mesh, census) = pipeline(&built, 0.4, true);
        assert_eq!(census.euler, -1);
        for &ic in &built.labels.corner_vertices() {
            let counts = quad_counts_on_input_vertex(&built, &final_mesh, &census, ic);
            assert_eq!(counts, vec![1], "corner {ic}");
        }
        for &val in census.interior_valences.keys() {
            assert!(val == 4 || val == 6, "unexpected interior valence {val}");
        }
    }

    #[test]
    fn baseline_identity_grid_keeps_two_quads_per_corner() {
        let built = build(generate(FixtureKind::SquareAnnulus, 24), 1e-8, true);
        let (_plan, final_mesh, census) = pipeline(&built, 0.4, false);
        assert_eq!(census.euler, 0);
        for &ic in &built.labels.corner_vertices() {
            let counts = quad_counts_on_input_vertex(&built, &final_mesh, &census, ic);
            assert_eq!(counts, vec![2], "corner {ic}");
        }
    }

    #[test]
    fn quantize_rejects_bad_target() {
        let built = build(generate(FixtureKind::SquareDisk, 9), 1e-10, false);
        let err = quantize(
            &built.cover,
            &built.structure,
            &built.charts,
            &built.labels,
            0.0,
        )
        .unwrap_err();
        assert!(matches!(err, QuadError::QuantizationInfeasible { .. }));
    }

    #[test]
    fn tracing_is_deterministic() {
        let run = || {
            let built = build(generate(FixtureKind::SquareAnnulus, 24), 1e-8, false);
            let (_, final_mesh, _) = pipeline(&built, 0.4, true);
            final_mesh
        };
        let a = run();
        let b = run();
        assert_eq!(a.quads, b.quads);
        assert_eq!(a.positions.len(), b.positions.len());
        for (p, q) in a.positions.iter().zip(&b.positions) {
            assert_eq!(p, q);
        }
    }

    #[test]
    fn quality_report_on_square() {
        let built = build(generate(FixtureKind::SquareDisk, 9), 1e-10, false);
        let (_, final_mesh, _) = pipeline(&built, 0.25, true);
        let report = quality_report(&final_mesh).expect("quality");
        assert_eq!(report.quad_count, 16);
        assert!(report.min_scaled_jacobian > 0.99);
        assert!(math::abs(report.min_angle - core::f64::consts::FRAC_PI_2) < 1e-6);
        assert_eq!(report.irregular_interior, 0);
    }
}

//! Corner-preserving quad layouts on genus-0 triangle surfaces with boundary.
//!
//! The pipeline turns a triangle mesh with corners into a pure quad layout in
//! seven stages:
//!
//! 1. classify boundary vertices by discrete Gauss curvature ([`boundary`]),
//! 2. test an exact integrality criterion that decides whether a layout with
//!    the requested corner behaviour exists at all ([`boundary::feasibility`]),
//! 3. glue the surface to a reflected copy of itself along a selected subset
//!    of boundary segments so that corners become smooth points or interior
//!    cones ([`cover`]),
//! 4. relax a map from the glued surface into a metric star graph until it is
//!    discrete-harmonic ([`foliation`]),
//! 5. read off the induced annulus decomposition and its critical graph
//!    ([`structure`]),
//! 6. integrate conjugate flat coordinates on every annulus ([`chart`]),
//! 7. trace, weld and restrict the quad grid ([`quad`]).
//!
//! The crate is `no_std` (with `alloc`); file formats, reports and the
//! command-line front end live in the companion `foliquad` crate.

#![no_std]
#![deny(unsafe_code)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod boundary;
pub mod chart;
pub mod cover;
pub mod fixtures;
pub mod foliation;
mod math;
pub mod mesh;
pub mod quad;
pub mod structure;

pub use boundary::{
    classify_corner, feasibility, feasibility_all_smooth, BoundaryError, BoundaryLabels,
    FeasibilityReport,
};
pub use chart::{
    build_chart, build_charts, conjugate_form, exact_form, rotated_form, seam_measure_check,
    ChartError, CylinderChart, SeamReport,
};
pub use cover::{build_cover, select_tagging, split_segments, CoverError, CoveredMesh, Segment, Tagging};
pub use foliation::{
    build_star_graph, harmonic_energy, init_map, relax_step, solve, FoliationError,
    FoliationParams, GraphMap, GraphPoint, StarGraph, WeightMode,
};
pub use mesh::{MeshError, Topology, TriMesh};
pub use structure::{extract_structure, FoliationStructure, StructureError};

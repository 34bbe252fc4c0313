//! File formats, reports, rendering and the command-line front end for the
//! `foliquad-core` quad meshing pipeline.

pub mod cli {
    /// Placeholder until the front end lands.
    pub fn run() {}
}

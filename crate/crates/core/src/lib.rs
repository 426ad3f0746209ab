pub mod geometry;

#[cfg(test)]
mod testutil;
pub mod filtering;
pub(crate) mod stats;
pub mod masking;
pub mod tracking;
pub mod synth;
pub mod sfm;
pub mod eval;
pub mod io;

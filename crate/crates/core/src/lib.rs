//! Empirical dynamic modeling for short annual series: delay embeddings, simplex
//! projection, S-map, convergent cross mapping, and a policy simulator for
//! low-Earth-orbit debris counts.

pub mod ccm;
pub mod embedding;
pub mod error;
pub mod forecast;
pub mod linalg;
pub mod manifest;
pub mod scenario;
pub mod simplex;
pub mod smap;
pub mod timeseries;

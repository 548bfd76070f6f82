//! Parameter and structure learning.

pub mod params;
pub mod structure;

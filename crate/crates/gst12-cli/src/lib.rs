//! File formats, instance generation, and ratio experiments backing the
//! `gst12` binary. Kept as a library so integration tests can drive the
//! same code paths the CLI uses.

pub mod fmt;
pub mod gen;
pub mod ratio;

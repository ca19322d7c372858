//! File formats, instance generation, reports and benchmarking for the
//! `bagsched` command line.

pub mod bench;
pub mod gen;
pub mod io;
pub mod report;

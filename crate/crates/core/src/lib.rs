pub mod bgp;
pub mod catalog;
pub mod cli;
pub mod filter;
pub mod ingest;
pub mod metrics;
pub mod output;
pub mod profiling;
pub mod starlink;
pub mod synth;

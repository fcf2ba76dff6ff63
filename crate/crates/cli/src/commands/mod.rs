//! One module per subcommand, plus the small shared helpers (thread-count
//! resolution, config layering) they have in common.

pub mod build_graph;
pub mod encode;
pub mod eval;
pub mod gen_data;
pub mod retrieve;
pub mod sweep;
pub mod train;

/// Worker count: explicit flag, then the SSVH_THREADS environment
/// variable, then 1. Results never depend on this — fan-out reductions
/// are index-ordered — so it is purely a speed knob.
pub fn resolve_threads(flag: Option<usize>) -> usize {
    flag.or_else(|| std::env::var("SSVH_THREADS").ok().and_then(|v| v.parse().ok()))
        .unwrap_or(1)
        .max(1)
}

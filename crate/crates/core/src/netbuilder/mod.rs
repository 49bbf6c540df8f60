//! Architecture construction: block-by-block growth driven by PCA kernel banks and the
//! trace ratio, the classification head, and complexity accounting.

mod arch;
mod grow;
mod trace;

pub use arch::{count_complexity, load_arch, save_arch, ArchSpec, ComplexityReport, LayerSpec};
pub use grow::{
    attach_head, finalize_head, grow_architecture, grow_network, GrowOptions, DEFAULT_DEPTH_CAP,
    FIRST_KERNEL, LATER_KERNEL, MIN_SPATIAL, POOLED_BLOCKS,
};
pub use trace::{trace_ratio, ScatterSummary, TRACE_FLOOR};

//! Poincaré sections around the slow passage, linger times by quadrature and
//! by section crossings, and the network synchronization window.

mod analysis;
mod crossing;
mod passage;
mod quadrature;
mod report;
mod sections;

pub use analysis::{analyze_network, analyze_oscillator, empirical_passage, GeometrySettings, OscillatorGeometry};
pub use crossing::{detect_crossings_for, detect_section_crossing, linger_passages, linger_time_empirical};
pub use passage::{
    calibrate_pre_jump, linger_time_quadrature, reach_x, slow_passage_integral, upstream_state,
};
pub use quadrature::{integrate_adaptive, Quadrature};
pub use report::{sync_window, LingerMethod, LingerReport, OscillatorLinger};
pub use sections::{
    build_sections, proportional_offsets, quadrature_window, resolve_offsets, OffsetRule,
    PoincareSection, PreJumpOffset, SectionKind, SectionOffsets,
};

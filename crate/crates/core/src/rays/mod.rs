//! Geodesics of `c⁻²g` and the partial-data visibility analysis built on them.

pub mod eikonal;
pub mod geodesic;
pub mod measurement;
pub mod visibility;

pub use geodesic::{domain_t, exit_times, trace_geodesic, DomainTime, ExitTimes, PhasePoint, Ray, RayExit, RayOptions, Sign};
pub use measurement::{ArcSpec, MeasurementSet, Side};
pub use visibility::{
    stability_condition_map, uniqueness_condition_check, visibility_symbol, FailingDirection, UniquenessMap, Visibility,
    VisibilityCensus, STABILITY_DELTA,
};
